#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metaopt/tensor.hpp"

namespace metaopt {

// Fixed hash seed; part of the on-disk contract, so two processes featurizing
// the same text always agree.
inline constexpr uint64_t kFeaturizerHashSeed = 0x6d6574616f707431ULL;

enum class PairMode { kConcat, kConcatPlusProduct };

// Hashed n-gram bag-of-words over whitespace tokens. Each sentence maps to an
// L2-normalized count vector of `n_buckets` dimensions; sentence pairs are
// laid out as [h(a); h(b)] or [h(a); h(b); h(a)*h(b)]. Empty text gives a
// zero block.
struct FeaturizerSpec {
  int64_t n_buckets = 512;
  std::vector<int> ngram_orders = {1, 2};  // subset of {1, 2}
  PairMode pair_mode = PairMode::kConcat;
  int max_tokens = 80;  // per-sentence truncation before hashing

  int64_t output_dim() const {
    return n_buckets * (pair_mode == PairMode::kConcatPlusProduct ? 3 : 2);
  }
  void validate() const;
  bool operator==(const FeaturizerSpec&) const = default;
};

// Lowercases, strips punctuation, splits on whitespace, keeps the first
// `max_tokens` tokens.
std::vector<std::string> tokenize(std::string_view text, int max_tokens);

Tensor featurize(const FeaturizerSpec& spec, std::string_view sentence_a,
                 std::optional<std::string_view> sentence_b = std::nullopt);

}  // namespace metaopt
