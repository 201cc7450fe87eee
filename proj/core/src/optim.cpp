#include "metaopt/optim.hpp"

#include <cmath>

namespace metaopt {

std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            const ParamVector& gradient, const OuterConfig& cfg,
                                            double schedule_position) {
  cfg.validate();
  check_same_layout(params, gradient, "adam_step");
  require(state.m.size() == params.values.size() && state.v.size() == params.values.size(),
          "adam_step: state length does not match parameters");
  require(schedule_position >= 0.0 && schedule_position <= 1.0,
          "adam_step: schedule_position must be in [0, 1]");
  require(gradient.all_finite(), "adam_step: non-finite gradient");

  AdamState next = state;
  next.t = state.t + 1;
  const double lr = cfg.beta * cfg.warmup_scale(schedule_position);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(next.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(next.t));
  ParamVector out = params;
  for (size_t i = 0; i < params.values.size(); ++i) {
    const double g = gradient.values[i];
    next.m[i] = cfg.adam_beta1 * next.m[i] + (1.0 - cfg.adam_beta1) * g;
    next.v[i] = cfg.adam_beta2 * next.v[i] + (1.0 - cfg.adam_beta2) * g * g;
    const double mhat = next.m[i] / bc1;
    const double vhat = next.v[i] / bc2;
    out.values[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
  return {std::move(out), std::move(next)};
}

LossBuilder model_loss(const ModelSpec& model, std::string head, Batch batch,
                       DropoutMasks masks) {
  return [model, head = std::move(head), batch = std::move(batch),
          masks = std::move(masks)](Graph& g, NodeId theta) {
    return append_forward_loss(g, theta, model, head, batch, masks.empty() ? nullptr : &masks);
  };
}

namespace {

std::vector<LossBuilder> model_losses(const ModelSpec& model, const Task& task,
                                      std::span<const Batch> batches) {
  std::vector<LossBuilder> out;
  out.reserve(batches.size());
  for (const Batch& b : batches) out.push_back(model_loss(model, task.spec.head(), b));
  return out;
}

// Unrolls k update steps into g starting from `theta`; returns the adapted
// parameter node.
NodeId unroll_inner(Graph& g, NodeId theta, std::span<const LossBuilder> support,
                    const InnerConfig& cfg) {
  NodeId cur = theta;
  for (int j = 0; j < cfg.k; ++j) {
    NodeId loss = support[static_cast<size_t>(j)](g, cur);
    NodeId grad = g.grad_node(loss, cur);
    cur = g.sub(cur, g.cmul(cfg.alpha, grad));
  }
  return cur;
}

}  // namespace

AdaptResult inner_adapt(std::span<const LossBuilder> support, const ParamVector& params,
                        const InnerConfig& cfg, bool record) {
  cfg.validate();
  require(static_cast<int>(support.size()) == cfg.k,
          "inner_adapt: need k=" + std::to_string(cfg.k) + " support batches, got " +
              std::to_string(support.size()));
  require(params.all_finite(), "inner_adapt: non-finite initial parameters");

  AdaptResult result;
  if (record) {
    InnerTrace trace;
    trace.theta = trace.graph.placeholder(kThetaName, {params.size()});
    trace.adapted = unroll_inner(trace.graph, trace.theta, support, cfg);
    trace.graph.set_root(trace.adapted);
    Tensor adapted = evaluate(trace.graph, {{kThetaName, params.as_tensor()}});
    require(adapted.all_finite(), "inner_adapt: diverged (non-finite adapted parameters)");
    result.adapted = params_from_tensor(adapted, params.layout);
    result.trace = std::move(trace);
    return result;
  }

  ParamVector cur = params;
  for (int j = 0; j < cfg.k; ++j) {
    Graph g;
    NodeId theta = g.placeholder(kThetaName, {params.size()});
    NodeId loss = support[static_cast<size_t>(j)](g, theta);
    NodeId grad = g.grad_node(loss, theta);
    const NodeId wanted[] = {loss, grad};
    auto vals = evaluate_nodes(g, {{kThetaName, cur.as_tensor()}}, wanted);
    require(std::isfinite(vals[0].scalar_value()),
            "inner_adapt: diverged at step " + std::to_string(j + 1) + " (non-finite loss)");
    require(vals[1].all_finite(),
            "inner_adapt: diverged at step " + std::to_string(j + 1) + " (non-finite gradient)");
    for (size_t i = 0; i < cur.values.size(); ++i)
      cur.values[i] -= cfg.alpha * vals[1][static_cast<int64_t>(i)];
  }
  result.adapted = std::move(cur);
  return result;
}

AdaptResult inner_adapt(const ModelSpec& model, const ParamVector& params, const Task& task,
                        std::span<const Batch> support, const InnerConfig& cfg, bool record) {
  return inner_adapt(model_losses(model, task, support), params, cfg, record);
}

ParamVector maml_meta_grad(std::span<const LossBuilder> support, const LossBuilder& query,
                           const ParamVector& params, const InnerConfig& cfg,
                           double* query_loss) {
  cfg.validate();
  require(static_cast<int>(support.size()) == cfg.k,
          "maml_meta_grad: need k support batches");
  Graph g;
  NodeId theta = g.placeholder(kThetaName, {params.size()});
  NodeId adapted = unroll_inner(g, theta, support, cfg);
  NodeId qloss = query(g, adapted);
  NodeId meta = g.grad_node(qloss, theta);
  const NodeId wanted[] = {meta, qloss};
  auto vals = evaluate_nodes(g, {{kThetaName, params.as_tensor()}}, wanted);
  require(vals[0].all_finite(), "maml_meta_grad: non-finite meta-gradient");
  if (query_loss) *query_loss = vals[1].scalar_value();
  return params_from_tensor(vals[0], params.layout);
}

ParamVector maml_meta_grad(const ModelSpec& model, const ParamVector& params, const Task& task,
                           std::span<const Batch> support, const Batch& query,
                           const InnerConfig& cfg, double* query_loss) {
  return maml_meta_grad(model_losses(model, task, support),
                        model_loss(model, task.spec.head(), query), params, cfg, query_loss);
}

ParamVector fomaml_meta_grad(std::span<const LossBuilder> support, const LossBuilder& query,
                             const ParamVector& params, const InnerConfig& cfg,
                             double* query_loss) {
  const ParamVector adapted = inner_adapt(support, params, cfg, /*record=*/false).adapted;
  Graph g;
  NodeId theta = g.placeholder(kThetaName, {params.size()});
  NodeId qloss = query(g, theta);
  NodeId grad = g.grad_node(qloss, theta);
  const NodeId wanted[] = {grad, qloss};
  auto vals = evaluate_nodes(g, {{kThetaName, adapted.as_tensor()}}, wanted);
  require(vals[0].all_finite(), "fomaml_meta_grad: non-finite gradient");
  if (query_loss) *query_loss = vals[1].scalar_value();
  return params_from_tensor(vals[0], params.layout);
}

ParamVector fomaml_meta_grad(const ModelSpec& model, const ParamVector& params, const Task& task,
                             std::span<const Batch> support, const Batch& query,
                             const InnerConfig& cfg, double* query_loss) {
  return fomaml_meta_grad(model_losses(model, task, support),
                          model_loss(model, task.spec.head(), query), params, cfg, query_loss);
}

ParamVector reptile_delta(const ParamVector& params, const std::vector<ParamVector>& adapted) {
  require(!adapted.empty(), "reptile_delta: empty adapted list");
  std::vector<ParamVector> diffs;
  diffs.reserve(adapted.size());
  for (const ParamVector& a : adapted) diffs.push_back(sub(a, params));
  return mean(diffs);
}

}  // namespace metaopt
