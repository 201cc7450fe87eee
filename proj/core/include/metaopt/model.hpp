#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metaopt/graph.hpp"
#include "metaopt/params.hpp"

namespace metaopt {

enum class Activation { kTanh, kRelu };

enum class HeadKind { kClassification, kRegression };

struct HeadSpec {
  HeadKind kind = HeadKind::kClassification;
  int64_t n_classes = 2;  // classification only

  int64_t output_dim() const { return kind == HeadKind::kClassification ? n_classes : 1; }
  bool operator==(const HeadSpec&) const = default;
};

// MLP encoder shared across tasks, one linear output layer per head.
struct ModelSpec {
  int64_t input_dim = 1;
  std::vector<int64_t> hidden_dims = {64};
  Activation activation = Activation::kTanh;
  double dropout_rate = 0.1;
  std::map<std::string, HeadSpec> heads;

  void validate() const;
  int64_t encoder_output_dim() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }
  bool operator==(const ModelSpec&) const = default;
};

// One labeled mini-batch. Classification labels are class indices; regression
// labels live in [0, 1] after ingestion.
struct Batch {
  Tensor features;  // [n, input_dim]
  std::vector<double> labels;

  int64_t size() const { return features.dim(0); }
};

// One mask tensor per hidden layer, entries 0 or 1/(1-rate).
using DropoutMasks = std::vector<Tensor>;

// Layout: encoder weights layer by layer ("enc.<i>.W", "enc.<i>.b"), then
// heads in map order ("head.<name>.W", "head.<name>.b").
LayoutPtr layout_for(const ModelSpec& model);

// Weights uniform in +-1/sqrt(fan_in), biases exactly zero; deterministic per
// seed.
ParamVector init_params(const ModelSpec& model, uint64_t seed);

DropoutMasks make_dropout_masks(const ModelSpec& model, int64_t batch_size, uint64_t seed);

// Appends the loss for one batch to an existing graph, reading parameters
// from the rank-1 node `theta`. Used directly when unrolling inner-loop
// updates, where theta is an interior node.
NodeId append_forward_loss(Graph& g, NodeId theta, const ModelSpec& model,
                           const std::string& head, const Batch& batch,
                           const DropoutMasks* masks = nullptr);

// Scalar-rooted loss graph with a single placeholder "theta"; evaluation mode
// when no masks are given.
Graph forward_loss(const ModelSpec& model, const ParamVector& params, const std::string& head,
                   const Batch& batch, const DropoutMasks* masks = nullptr);

inline constexpr const char* kThetaName = "theta";

// Model with the given head added (if missing), and parameters extended with
// a freshly initialized block for it. Existing values are preserved.
std::pair<ModelSpec, ParamVector> ensure_head(const ModelSpec& model, const ParamVector& params,
                                              const std::string& head, const HeadSpec& spec,
                                              uint64_t seed);

// Offsets of the encoder block (every "enc.*" entry precedes all heads).
int64_t encoder_param_count(const ParamLayout& layout);

}  // namespace metaopt
