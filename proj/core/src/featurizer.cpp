#include "metaopt/featurizer.hpp"

#include <cctype>
#include <cmath>

namespace metaopt {

namespace {

uint64_t fnv1a(uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t hash_start() { return 14695981039346656037ULL ^ kFeaturizerHashSeed; }

// Hashed counts of the requested n-gram orders, L2-normalized in place.
void hash_block(const FeaturizerSpec& spec, const std::vector<std::string>& tokens,
                double* out) {
  for (int order : spec.ngram_orders) {
    if (order == 1) {
      for (const auto& t : tokens) {
        uint64_t h = fnv1a(hash_start(), t);
        out[h % static_cast<uint64_t>(spec.n_buckets)] += 1.0;
      }
    } else if (order == 2) {
      for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        uint64_t h = fnv1a(hash_start(), tokens[i]);
        h = fnv1a(h, "\x1f");
        h = fnv1a(h, tokens[i + 1]);
        out[h % static_cast<uint64_t>(spec.n_buckets)] += 1.0;
      }
    }
  }
  double norm = 0.0;
  for (int64_t i = 0; i < spec.n_buckets; ++i) norm += out[i] * out[i];
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (int64_t i = 0; i < spec.n_buckets; ++i) out[i] /= norm;
  }
}

}  // namespace

void FeaturizerSpec::validate() const {
  require(n_buckets >= 2, "featurizer: n_buckets must be >= 2");
  require(!ngram_orders.empty(), "featurizer: ngram_orders must be non-empty");
  for (int o : ngram_orders)
    require(o == 1 || o == 2, "featurizer: ngram order " + std::to_string(o) + " not supported");
  require(max_tokens >= 1, "featurizer: max_tokens must be >= 1");
}

std::vector<std::string> tokenize(std::string_view text, int max_tokens) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && static_cast<int>(tokens.size()) < max_tokens) tokens.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      continue;
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  if (static_cast<int>(tokens.size()) > max_tokens) tokens.resize(static_cast<size_t>(max_tokens));
  return tokens;
}

Tensor featurize(const FeaturizerSpec& spec, std::string_view sentence_a,
                 std::optional<std::string_view> sentence_b) {
  spec.validate();
  Tensor out = Tensor::zeros({spec.output_dim()});
  const auto tokens_a = tokenize(sentence_a, spec.max_tokens);
  if (!tokens_a.empty()) hash_block(spec, tokens_a, out.data());
  if (sentence_b) {
    const auto tokens_b = tokenize(*sentence_b, spec.max_tokens);
    if (!tokens_b.empty()) hash_block(spec, tokens_b, out.data() + spec.n_buckets);
  }
  if (spec.pair_mode == PairMode::kConcatPlusProduct) {
    double* a = out.data();
    double* b = out.data() + spec.n_buckets;
    double* p = out.data() + 2 * spec.n_buckets;
    for (int64_t i = 0; i < spec.n_buckets; ++i) p[i] = a[i] * b[i];
  }
  return out;
}

}  // namespace metaopt
