#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metaopt/graph.hpp"
#include "metaopt/model.hpp"
#include "metaopt/params.hpp"
#include "metaopt/sampler.hpp"

namespace metaopt {

struct InnerConfig {
  double alpha = 1e-3;  // inner-loop learning rate
  int k = 5;            // inner gradient steps

  void validate() const {
    require(alpha > 0, "inner: alpha must be positive");
    require(k >= 1, "inner: k must be >= 1");
  }
  bool operator==(const InnerConfig&) const = default;
};

enum class OuterRule { kSgd, kAdam };

struct OuterConfig {
  double beta = 5e-5;  // outer learning rate
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double warmup_ratio = 0.1;  // linear ramp over this leading fraction of training
  OuterRule reptile_outer = OuterRule::kAdam;
  OuterRule grad_outer = OuterRule::kAdam;  // MAML / first-order MAML updates

  void validate() const {
    require(beta > 0, "outer: beta must be positive");
    require(warmup_ratio >= 0 && warmup_ratio < 1, "outer: warmup_ratio must be in [0, 1)");
  }
  double warmup_scale(double schedule_position) const {
    if (warmup_ratio <= 0.0) return 1.0;
    return std::min(1.0, schedule_position / warmup_ratio);
  }
  bool operator==(const OuterConfig&) const = default;
};

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;

  static AdamState zeros(int64_t n) {
    return {std::vector<double>(static_cast<size_t>(n), 0.0),
            std::vector<double>(static_cast<size_t>(n), 0.0), 0};
  }
};

// One bias-corrected Adam step at effective learning rate
// beta * warmup_scale(schedule_position). Throws on non-finite gradients.
std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            const ParamVector& gradient, const OuterConfig& cfg,
                                            double schedule_position);

// Builds the loss for one batch into `g` as a function of the rank-1
// parameter node. Each call sees a distinct theta node when the inner loop is
// unrolled.
using LossBuilder = std::function<NodeId(Graph& g, NodeId theta)>;

// Wraps a model + batch into a LossBuilder.
LossBuilder model_loss(const ModelSpec& model, std::string head, Batch batch,
                       DropoutMasks masks = {});

// Recorded inner loop: the adapted parameters as a graph over the leaf theta.
struct InnerTrace {
  Graph graph;
  NodeId theta = kNoNode;    // placeholder leaf
  NodeId adapted = kNoNode;  // k-step result node
};

struct AdaptResult {
  ParamVector adapted;
  std::optional<InnerTrace> trace;  // present when record = true
};

// k plain gradient descent steps, one support batch per step. With
// record=true the whole update chain is kept as a differentiable graph;
// recording does not change the numbers.
AdaptResult inner_adapt(std::span<const LossBuilder> support, const ParamVector& params,
                        const InnerConfig& cfg, bool record);
AdaptResult inner_adapt(const ModelSpec& model, const ParamVector& params, const Task& task,
                        std::span<const Batch> support, const InnerConfig& cfg, bool record);

// Exact gradient of the query loss at the adapted parameters with respect to
// the initial parameters, differentiated through the unrolled inner loop
// (second-order terms included).
ParamVector maml_meta_grad(std::span<const LossBuilder> support, const LossBuilder& query,
                           const ParamVector& params, const InnerConfig& cfg,
                           double* query_loss = nullptr);
ParamVector maml_meta_grad(const ModelSpec& model, const ParamVector& params, const Task& task,
                           std::span<const Batch> support, const Batch& query,
                           const InnerConfig& cfg, double* query_loss = nullptr);

// Gradient of the query loss taken at the adapted parameters, with no chain
// back through the inner loop.
ParamVector fomaml_meta_grad(std::span<const LossBuilder> support, const LossBuilder& query,
                             const ParamVector& params, const InnerConfig& cfg,
                             double* query_loss = nullptr);
ParamVector fomaml_meta_grad(const ModelSpec& model, const ParamVector& params, const Task& task,
                             std::span<const Batch> support, const Batch& query,
                             const InnerConfig& cfg, double* query_loss = nullptr);

// mean(adapted_i - params); the caller applies +beta*delta directly or feeds
// -delta to Adam as a pseudo-gradient.
ParamVector reptile_delta(const ParamVector& params, const std::vector<ParamVector>& adapted);

}  // namespace metaopt
