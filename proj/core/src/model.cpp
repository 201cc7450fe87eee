#include "metaopt/model.hpp"

#include <algorithm>
#include <cmath>

#include "metaopt/rng.hpp"

namespace metaopt {

void ModelSpec::validate() const {
  require(input_dim >= 1, "model: input_dim must be positive");
  for (int64_t d : hidden_dims) require(d >= 1, "model: hidden dims must be positive");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "model: dropout_rate must be in [0, 1)");
  require(!heads.empty(), "model: at least one head required");
  for (const auto& [name, head] : heads) {
    require(!name.empty(), "model: head with empty name");
    if (head.kind == HeadKind::kClassification)
      require(head.n_classes >= 2, "model: head '" + name + "' needs n_classes >= 2");
  }
}

LayoutPtr layout_for(const ModelSpec& model) {
  model.validate();
  std::vector<ParamLayout::Entry> entries;
  int64_t offset = 0;
  auto push = [&](std::string name, Shape shape) {
    entries.push_back({std::move(name), shape, offset});
    offset += shape_numel(shape);
  };
  int64_t in_dim = model.input_dim;
  for (size_t i = 0; i < model.hidden_dims.size(); ++i) {
    const int64_t out_dim = model.hidden_dims[i];
    push("enc." + std::to_string(i) + ".W", {in_dim, out_dim});
    push("enc." + std::to_string(i) + ".b", {out_dim});
    in_dim = out_dim;
  }
  for (const auto& [name, head] : model.heads) {
    push("head." + name + ".W", {in_dim, head.output_dim()});
    push("head." + name + ".b", {head.output_dim()});
  }
  return std::make_shared<const ParamLayout>(std::move(entries));
}

ParamVector init_params(const ModelSpec& model, uint64_t seed) {
  ParamVector p = make_params(layout_for(model));
  Rng rng(mix_seed(seed, 0x1717));
  for (const auto& e : p.layout->entries()) {
    if (e.name.ends_with(".b")) continue;  // biases stay zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(e.shape[0]));
    for (int64_t i = 0; i < e.numel(); ++i)
      p.values[static_cast<size_t>(e.offset + i)] = uniform_in(rng, -bound, bound);
  }
  return p;
}

DropoutMasks make_dropout_masks(const ModelSpec& model, int64_t batch_size, uint64_t seed) {
  DropoutMasks masks;
  if (model.dropout_rate == 0.0) return masks;
  Rng rng(mix_seed(seed, 0xd209));
  const double keep = 1.0 - model.dropout_rate;
  for (size_t i = 0; i < model.hidden_dims.size(); ++i) {
    Tensor m = Tensor::zeros({batch_size, model.hidden_dims[i]});
    for (int64_t j = 0; j < m.numel(); ++j)
      m[j] = uniform_unit(rng) < keep ? 1.0 / keep : 0.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

namespace {

NodeId param_matrix(Graph& g, NodeId theta, const ParamLayout::Entry& e) {
  NodeId seg = g.segment(theta, e.offset, e.numel());
  return e.shape.size() == 1 ? seg : g.reshape(seg, e.shape);
}

Tensor one_hot(const std::vector<double>& labels, int64_t n_classes) {
  Tensor t = Tensor::zeros({static_cast<int64_t>(labels.size()), n_classes});
  for (size_t i = 0; i < labels.size(); ++i) {
    const auto cls = static_cast<int64_t>(labels[i]);
    require(cls >= 0 && cls < n_classes && labels[i] == static_cast<double>(cls),
            "forward_loss: label " + std::to_string(labels[i]) + " out of range for " +
                std::to_string(n_classes) + " classes");
    t.at(static_cast<int64_t>(i), cls) = 1.0;
  }
  return t;
}

}  // namespace

NodeId append_forward_loss(Graph& g, NodeId theta, const ModelSpec& model,
                           const std::string& head, const Batch& batch,
                           const DropoutMasks* masks) {
  model.validate();
  auto head_it = model.heads.find(head);
  require(head_it != model.heads.end(), "forward_loss: model has no head '" + head + "'");
  const HeadSpec& head_spec = head_it->second;
  require(batch.size() >= 1, "forward_loss: empty batch");
  require(batch.features.rank() == 2 && batch.features.dim(1) == model.input_dim,
          "forward_loss: features " + shape_str(batch.features.shape()) + ", expected [n," +
              std::to_string(model.input_dim) + "]");
  require(static_cast<int64_t>(batch.labels.size()) == batch.size(),
          "forward_loss: label count does not match batch size");
  if (masks && !masks->empty())
    require(masks->size() == model.hidden_dims.size(),
            "forward_loss: expected one dropout mask per hidden layer");

  const LayoutPtr layout = layout_for(model);
  require(g.node(theta).shape == Shape{layout->total()},
          "forward_loss: theta node has shape " + shape_str(g.node(theta).shape) +
              ", layout needs [" + std::to_string(layout->total()) + "]");

  const int64_t n = batch.size();
  NodeId h = g.constant(batch.features);
  for (size_t i = 0; i < model.hidden_dims.size(); ++i) {
    NodeId w = param_matrix(g, theta, layout->find("enc." + std::to_string(i) + ".W"));
    NodeId b = param_matrix(g, theta, layout->find("enc." + std::to_string(i) + ".b"));
    NodeId pre = g.add(g.matmul(h, w), g.tile_rows(b, n));
    h = model.activation == Activation::kTanh ? g.tanh(pre) : g.relu(pre);
    if (masks && !masks->empty()) h = g.mul(h, g.constant((*masks)[i]));
  }
  NodeId w = param_matrix(g, theta, layout->find("head." + head + ".W"));
  NodeId b = param_matrix(g, theta, layout->find("head." + head + ".b"));
  NodeId out = g.add(g.matmul(h, w), g.tile_rows(b, n));

  if (head_spec.kind == HeadKind::kClassification)
    return g.softmax_xent(out, g.constant(one_hot(batch.labels, head_spec.n_classes)));
  Tensor target({n, 1}, batch.labels);
  return g.mse(out, g.constant(std::move(target)));
}

Graph forward_loss(const ModelSpec& model, const ParamVector& params, const std::string& head,
                   const Batch& batch, const DropoutMasks* masks) {
  require(params.layout && params.layout->total() == layout_for(model)->total(),
          "forward_loss: parameter layout does not match model");
  Graph g;
  NodeId theta = g.placeholder(kThetaName, {params.size()});
  g.set_root(append_forward_loss(g, theta, model, head, batch, masks));
  return g;
}

std::pair<ModelSpec, ParamVector> ensure_head(const ModelSpec& model, const ParamVector& params,
                                              const std::string& head, const HeadSpec& spec,
                                              uint64_t seed) {
  if (model.heads.count(head)) return {model, params};
  ModelSpec extended = model;
  extended.heads[head] = spec;
  ParamVector fresh = init_params(extended, seed);
  ParamVector out = make_params(fresh.layout);
  out.values = fresh.values;
  // Carry over every block the old model already had.
  for (const auto& e : params.layout->entries()) out.set_block(e.name, params.block(e.name));
  return {std::move(extended), std::move(out)};
}

int64_t encoder_param_count(const ParamLayout& layout) {
  int64_t count = 0;
  for (const auto& e : layout.entries())
    if (e.name.starts_with("enc.")) count += e.numel();
  return count;
}

}  // namespace metaopt
