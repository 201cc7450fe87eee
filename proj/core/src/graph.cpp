#include "metaopt/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace metaopt {

namespace {

constexpr std::array kAllOps = {
    OpKind::kPlaceholder, OpKind::kConstant, OpKind::kAdd,      OpKind::kSub,
    OpKind::kMul,         OpKind::kCMul,     OpKind::kScale,    OpKind::kMatMul,
    OpKind::kTranspose,   OpKind::kTanh,     OpKind::kRelu,     OpKind::kHeaviside,
    OpKind::kSoftmax,     OpKind::kSoftmaxXent, OpKind::kMse,   OpKind::kSumAll,
    OpKind::kMeanAll,     OpKind::kRowSum,   OpKind::kColSum,   OpKind::kTileCols,
    OpKind::kTileRows,    OpKind::kSegment,  OpKind::kEmbed,    OpKind::kReshape,
};

void require_rank2(const Shape& s, const char* ctx) {
  require(s.size() == 2, std::string(ctx) + ": expected rank-2 tensor, got " + shape_str(s));
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kPlaceholder: return "placeholder";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kCMul: return "cmul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kHeaviside: return "heaviside";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSoftmaxXent: return "softmax_xent";
    case OpKind::kMse: return "mse";
    case OpKind::kSumAll: return "sum_all";
    case OpKind::kMeanAll: return "mean_all";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kColSum: return "col_sum";
    case OpKind::kTileCols: return "tile_cols";
    case OpKind::kTileRows: return "tile_rows";
    case OpKind::kSegment: return "segment";
    case OpKind::kEmbed: return "embed";
    case OpKind::kReshape: return "reshape";
  }
  return "?";
}

std::span<const OpKind> all_op_kinds() { return kAllOps; }

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_node(NodeId id, const char* ctx) const {
  require(id >= 0 && id < size(), std::string(ctx) + ": node id out of range");
}

NodeId Graph::placeholder(std::string name, Shape shape) {
  require(!name.empty(), "placeholder: empty name");
  require(find_placeholder(name) == kNoNode, "placeholder: duplicate name '" + name + "'");
  Node n{OpKind::kPlaceholder, std::move(shape), {}};
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  Node n{OpKind::kConstant, value.shape(), {}};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_node(a, "add");
  check_node(b, "add");
  require(shape_of(a) == shape_of(b),
          "add: shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  return push(Node{OpKind::kAdd, shape_of(a), {a, b}});
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check_node(a, "sub");
  check_node(b, "sub");
  require(shape_of(a) == shape_of(b),
          "sub: shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  return push(Node{OpKind::kSub, shape_of(a), {a, b}});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_node(a, "mul");
  check_node(b, "mul");
  require(shape_of(a) == shape_of(b),
          "mul: shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  return push(Node{OpKind::kMul, shape_of(a), {a, b}});
}

NodeId Graph::cmul(double c, NodeId a) {
  check_node(a, "cmul");
  Node n{OpKind::kCMul, shape_of(a), {a}};
  n.scalar = c;
  return push(std::move(n));
}

NodeId Graph::scale(NodeId s, NodeId a) {
  check_node(s, "scale");
  check_node(a, "scale");
  require(shape_of(s).empty(), "scale: scale factor must be rank 0, got " + shape_str(shape_of(s)));
  return push(Node{OpKind::kScale, shape_of(a), {s, a}});
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_node(a, "matmul");
  check_node(b, "matmul");
  require_rank2(shape_of(a), "matmul lhs");
  require_rank2(shape_of(b), "matmul rhs");
  require(shape_of(a)[1] == shape_of(b)[0],
          "matmul: inner dimensions differ, " + shape_str(shape_of(a)) + " * " +
              shape_str(shape_of(b)));
  return push(Node{OpKind::kMatMul, Shape{shape_of(a)[0], shape_of(b)[1]}, {a, b}});
}

NodeId Graph::transpose(NodeId a) {
  check_node(a, "transpose");
  require_rank2(shape_of(a), "transpose");
  return push(Node{OpKind::kTranspose, Shape{shape_of(a)[1], shape_of(a)[0]}, {a}});
}

NodeId Graph::tanh(NodeId a) {
  check_node(a, "tanh");
  return push(Node{OpKind::kTanh, shape_of(a), {a}});
}

NodeId Graph::relu(NodeId a) {
  check_node(a, "relu");
  return push(Node{OpKind::kRelu, shape_of(a), {a}});
}

NodeId Graph::heaviside(NodeId a) {
  check_node(a, "heaviside");
  return push(Node{OpKind::kHeaviside, shape_of(a), {a}});
}

NodeId Graph::softmax(NodeId a) {
  check_node(a, "softmax");
  require_rank2(shape_of(a), "softmax");
  return push(Node{OpKind::kSoftmax, shape_of(a), {a}});
}

NodeId Graph::softmax_xent(NodeId logits, NodeId labels) {
  check_node(logits, "softmax_xent");
  check_node(labels, "softmax_xent");
  require_rank2(shape_of(logits), "softmax_xent logits");
  require(shape_of(logits) == shape_of(labels),
          "softmax_xent: logits " + shape_str(shape_of(logits)) + " vs labels " +
              shape_str(shape_of(labels)));
  return push(Node{OpKind::kSoftmaxXent, Shape{}, {logits, labels}});
}

NodeId Graph::mse(NodeId pred, NodeId target) {
  check_node(pred, "mse");
  check_node(target, "mse");
  require(shape_of(pred) == shape_of(target),
          "mse: prediction " + shape_str(shape_of(pred)) + " vs target " +
              shape_str(shape_of(target)));
  return push(Node{OpKind::kMse, Shape{}, {pred, target}});
}

NodeId Graph::sum_all(NodeId a) {
  check_node(a, "sum_all");
  return push(Node{OpKind::kSumAll, Shape{}, {a}});
}

NodeId Graph::mean_all(NodeId a) {
  check_node(a, "mean_all");
  return push(Node{OpKind::kMeanAll, Shape{}, {a}});
}

NodeId Graph::row_sum(NodeId a) {
  check_node(a, "row_sum");
  require_rank2(shape_of(a), "row_sum");
  return push(Node{OpKind::kRowSum, Shape{shape_of(a)[0]}, {a}});
}

NodeId Graph::col_sum(NodeId a) {
  check_node(a, "col_sum");
  require_rank2(shape_of(a), "col_sum");
  return push(Node{OpKind::kColSum, Shape{shape_of(a)[1]}, {a}});
}

NodeId Graph::tile_cols(NodeId v, int64_t cols) {
  check_node(v, "tile_cols");
  require(shape_of(v).size() == 1, "tile_cols: expected rank-1 input");
  require(cols >= 1, "tile_cols: cols must be positive");
  Node n{OpKind::kTileCols, Shape{shape_of(v)[0], cols}, {v}};
  n.extent = cols;
  return push(std::move(n));
}

NodeId Graph::tile_rows(NodeId v, int64_t rows) {
  check_node(v, "tile_rows");
  require(shape_of(v).size() == 1, "tile_rows: expected rank-1 input");
  require(rows >= 1, "tile_rows: rows must be positive");
  Node n{OpKind::kTileRows, Shape{rows, shape_of(v)[0]}, {v}};
  n.extent = rows;
  return push(std::move(n));
}

NodeId Graph::segment(NodeId a, int64_t offset, int64_t len) {
  check_node(a, "segment");
  require(shape_of(a).size() == 1, "segment: expected rank-1 input");
  require(offset >= 0 && len >= 0 && offset + len <= shape_of(a)[0],
          "segment: range [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
              ") out of bounds for length " + std::to_string(shape_of(a)[0]));
  Node n{OpKind::kSegment, Shape{len}, {a}};
  n.offset = offset;
  n.extent = len;
  return push(std::move(n));
}

NodeId Graph::embed(NodeId a, int64_t offset, int64_t total) {
  check_node(a, "embed");
  require(shape_of(a).size() == 1, "embed: expected rank-1 input");
  require(offset >= 0 && offset + shape_of(a)[0] <= total, "embed: segment out of bounds");
  Node n{OpKind::kEmbed, Shape{total}, {a}};
  n.offset = offset;
  n.extent = total;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, Shape shape) {
  check_node(a, "reshape");
  require(shape_numel(shape) == shape_numel(shape_of(a)),
          "reshape: cannot reshape " + shape_str(shape_of(a)) + " to " + shape_str(shape));
  return push(Node{OpKind::kReshape, std::move(shape), {a}});
}

void Graph::set_root(NodeId id) {
  check_node(id, "set_root");
  root_ = id;
}

NodeId Graph::find_placeholder(std::string_view name) const {
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op == OpKind::kPlaceholder && nodes_[i].name == name)
      return static_cast<NodeId>(i);
  return kNoNode;
}

// ---------------------------------------------------------------------------
// Gradient construction

NodeId Graph::grad_node(NodeId out, NodeId wrt) {
  check_node(out, "grad");
  check_node(wrt, "grad");
  require(shape_of(out).empty(),
          "grad: output must be rank 0, got " + shape_str(shape_of(out)));

  const size_t n = static_cast<size_t>(out) + 1;

  // Restrict the backward sweep to nodes lying on a path wrt -> out.
  std::vector<char> descends(n, 0);
  descends[static_cast<size_t>(wrt)] = 1;
  for (size_t i = static_cast<size_t>(wrt) + 1; i < n; ++i)
    for (NodeId in : nodes_[i].inputs)
      if (static_cast<size_t>(in) < n && descends[static_cast<size_t>(in)]) {
        descends[i] = 1;
        break;
      }
  if (!descends[static_cast<size_t>(out)])
    return constant(Tensor::zeros(shape_of(wrt)));

  std::vector<char> reaches(n, 0);
  reaches[static_cast<size_t>(out)] = 1;
  for (size_t i = n; i-- > 0;)
    if (reaches[i])
      for (NodeId in : nodes_[i].inputs) reaches[static_cast<size_t>(in)] = 1;

  std::vector<NodeId> adjoint(n, kNoNode);
  adjoint[static_cast<size_t>(out)] = constant(Tensor::scalar(1.0));

  auto accumulate = [&](NodeId target, NodeId contrib) {
    auto t = static_cast<size_t>(target);
    adjoint[t] = adjoint[t] == kNoNode ? contrib : add(adjoint[t], contrib);
  };

  for (size_t i = n; i-- > static_cast<size_t>(wrt);) {
    if (!descends[i] || !reaches[i] || adjoint[i] == kNoNode) continue;
    const NodeId u = adjoint[i];
    const NodeId self = static_cast<NodeId>(i);
    // Copy: push() may reallocate nodes_.
    const Node nd = nodes_[i];
    auto relevant = [&](int slot) { return descends[static_cast<size_t>(nd.inputs[static_cast<size_t>(slot)])]; };
    switch (nd.op) {
      case OpKind::kPlaceholder:
      case OpKind::kConstant:
        break;
      case OpKind::kAdd:
        if (relevant(0)) accumulate(nd.inputs[0], u);
        if (relevant(1)) accumulate(nd.inputs[1], u);
        break;
      case OpKind::kSub:
        if (relevant(0)) accumulate(nd.inputs[0], u);
        if (relevant(1)) accumulate(nd.inputs[1], cmul(-1.0, u));
        break;
      case OpKind::kMul:
        if (relevant(0)) accumulate(nd.inputs[0], mul(u, nd.inputs[1]));
        if (relevant(1)) accumulate(nd.inputs[1], mul(u, nd.inputs[0]));
        break;
      case OpKind::kCMul:
        if (relevant(0)) accumulate(nd.inputs[0], cmul(nd.scalar, u));
        break;
      case OpKind::kScale:
        if (relevant(0)) accumulate(nd.inputs[0], sum_all(mul(u, nd.inputs[1])));
        if (relevant(1)) accumulate(nd.inputs[1], scale(nd.inputs[0], u));
        break;
      case OpKind::kMatMul:
        if (relevant(0)) accumulate(nd.inputs[0], matmul(u, transpose(nd.inputs[1])));
        if (relevant(1)) accumulate(nd.inputs[1], matmul(transpose(nd.inputs[0]), u));
        break;
      case OpKind::kTranspose:
        if (relevant(0)) accumulate(nd.inputs[0], transpose(u));
        break;
      case OpKind::kTanh:
        // d tanh = 1 - tanh^2, reusing this node's output.
        if (relevant(0)) {
          NodeId ones = constant(Tensor::full(nd.shape, 1.0));
          accumulate(nd.inputs[0], mul(u, sub(ones, mul(self, self))));
        }
        break;
      case OpKind::kRelu:
        if (relevant(0)) accumulate(nd.inputs[0], mul(u, heaviside(nd.inputs[0])));
        break;
      case OpKind::kHeaviside:
        // Zero almost everywhere; contributes nothing.
        break;
      case OpKind::kSoftmax:
        // s * (u - tile(rowsum(u * s)))
        if (relevant(0)) {
          NodeId us = mul(u, self);
          NodeId corr = tile_cols(row_sum(us), nd.shape[1]);
          accumulate(nd.inputs[0], mul(self, sub(u, corr)));
        }
        break;
      case OpKind::kSoftmaxXent: {
        const double inv_rows = 1.0 / static_cast<double>(nodes_[static_cast<size_t>(nd.inputs[0])].shape[0]);
        if (relevant(0)) {
          NodeId sm = softmax(nd.inputs[0]);
          accumulate(nd.inputs[0], scale(u, cmul(inv_rows, sub(sm, nd.inputs[1]))));
        }
        if (relevant(1)) accumulate(nd.inputs[1], scale(u, cmul(-inv_rows, nd.inputs[0])));
        break;
      }
      case OpKind::kMse: {
        const double f = 2.0 / static_cast<double>(shape_numel(nodes_[static_cast<size_t>(nd.inputs[0])].shape));
        if (relevant(0)) accumulate(nd.inputs[0], scale(u, cmul(f, sub(nd.inputs[0], nd.inputs[1]))));
        if (relevant(1)) accumulate(nd.inputs[1], scale(u, cmul(-f, sub(nd.inputs[0], nd.inputs[1]))));
        break;
      }
      case OpKind::kSumAll:
        if (relevant(0)) {
          NodeId ones = constant(Tensor::full(nodes_[static_cast<size_t>(nd.inputs[0])].shape, 1.0));
          accumulate(nd.inputs[0], scale(u, ones));
        }
        break;
      case OpKind::kMeanAll:
        if (relevant(0)) {
          const Shape& in_shape = nodes_[static_cast<size_t>(nd.inputs[0])].shape;
          NodeId fill = constant(Tensor::full(in_shape, 1.0 / static_cast<double>(shape_numel(in_shape))));
          accumulate(nd.inputs[0], scale(u, fill));
        }
        break;
      case OpKind::kRowSum:
        if (relevant(0)) accumulate(nd.inputs[0], tile_cols(u, nodes_[static_cast<size_t>(nd.inputs[0])].shape[1]));
        break;
      case OpKind::kColSum:
        if (relevant(0)) accumulate(nd.inputs[0], tile_rows(u, nodes_[static_cast<size_t>(nd.inputs[0])].shape[0]));
        break;
      case OpKind::kTileCols:
        if (relevant(0)) accumulate(nd.inputs[0], row_sum(u));
        break;
      case OpKind::kTileRows:
        if (relevant(0)) accumulate(nd.inputs[0], col_sum(u));
        break;
      case OpKind::kSegment:
        if (relevant(0))
          accumulate(nd.inputs[0], embed(u, nd.offset, nodes_[static_cast<size_t>(nd.inputs[0])].shape[0]));
        break;
      case OpKind::kEmbed:
        if (relevant(0)) accumulate(nd.inputs[0], segment(u, nd.offset, nodes_[static_cast<size_t>(nd.inputs[0])].shape[0]));
        break;
      case OpKind::kReshape:
        if (relevant(0)) accumulate(nd.inputs[0], reshape(u, nodes_[static_cast<size_t>(nd.inputs[0])].shape));
        break;
    }
  }

  NodeId g = adjoint[static_cast<size_t>(wrt)];
  return g == kNoNode ? constant(Tensor::zeros(shape_of(wrt))) : g;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

Tensor eval_node(const Node& nd, const std::vector<Tensor>& vals, const Bindings& bindings) {
  auto in = [&](int slot) -> const Tensor& {
    return vals[static_cast<size_t>(nd.inputs[static_cast<size_t>(slot)])];
  };
  switch (nd.op) {
    case OpKind::kPlaceholder: {
      auto it = bindings.find(nd.name);
      require(it != bindings.end(), "evaluate: unbound leaf '" + nd.name + "'");
      require(it->second.shape() == nd.shape,
              "evaluate: leaf '" + nd.name + "' bound with shape " + shape_str(it->second.shape()) +
                  ", expected " + shape_str(nd.shape));
      return it->second;
    }
    case OpKind::kConstant:
      return nd.value;
    case OpKind::kAdd: {
      Tensor r = in(0);
      const Tensor& b = in(1);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] += b[i];
      return r;
    }
    case OpKind::kSub: {
      Tensor r = in(0);
      const Tensor& b = in(1);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] -= b[i];
      return r;
    }
    case OpKind::kMul: {
      Tensor r = in(0);
      const Tensor& b = in(1);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] *= b[i];
      return r;
    }
    case OpKind::kCMul: {
      Tensor r = in(0);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] *= nd.scalar;
      return r;
    }
    case OpKind::kScale: {
      const double s = in(0).scalar_value();
      Tensor r = in(1);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] *= s;
      return r;
    }
    case OpKind::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
      Tensor r = Tensor::zeros({n, m});
      for (int64_t i = 0; i < n; ++i)
        for (int64_t p = 0; p < k; ++p) {
          const double av = a.at(i, p);
          if (av == 0.0) continue;
          const double* brow = b.data() + p * m;
          double* rrow = r.data() + i * m;
          for (int64_t j = 0; j < m; ++j) rrow[j] += av * brow[j];
        }
      return r;
    }
    case OpKind::kTranspose: {
      const Tensor& a = in(0);
      Tensor r = Tensor::zeros({a.dim(1), a.dim(0)});
      for (int64_t i = 0; i < a.dim(0); ++i)
        for (int64_t j = 0; j < a.dim(1); ++j) r.at(j, i) = a.at(i, j);
      return r;
    }
    case OpKind::kTanh: {
      Tensor r = in(0);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] = std::tanh(r[i]);
      return r;
    }
    case OpKind::kRelu: {
      Tensor r = in(0);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] = r[i] > 0.0 ? r[i] : 0.0;
      return r;
    }
    case OpKind::kHeaviside: {
      Tensor r = in(0);
      for (int64_t i = 0; i < r.numel(); ++i) r[i] = r[i] > 0.0 ? 1.0 : 0.0;
      return r;
    }
    case OpKind::kSoftmax: {
      const Tensor& z = in(0);
      Tensor r = Tensor::zeros(z.shape());
      const int64_t rows = z.dim(0), cols = z.dim(1);
      for (int64_t i = 0; i < rows; ++i) {
        double mx = z.at(i, 0);
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, z.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
          const double e = std::exp(z.at(i, j) - mx);
          r.at(i, j) = e;
          sum += e;
        }
        for (int64_t j = 0; j < cols; ++j) r.at(i, j) /= sum;
      }
      return r;
    }
    case OpKind::kSoftmaxXent: {
      const Tensor& z = in(0);
      const Tensor& y = in(1);
      const int64_t rows = z.dim(0), cols = z.dim(1);
      double total = 0.0;
      for (int64_t i = 0; i < rows; ++i) {
        double mx = z.at(i, 0);
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, z.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) sum += std::exp(z.at(i, j) - mx);
        const double lse = mx + std::log(sum);
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += y.at(i, j) * z.at(i, j);
        // Rows of y are assumed to sum to 1 (one-hot or soft labels).
        total += lse - dot;
      }
      return Tensor::scalar(total / static_cast<double>(rows));
    }
    case OpKind::kMse: {
      const Tensor& p = in(0);
      const Tensor& t = in(1);
      double total = 0.0;
      for (int64_t i = 0; i < p.numel(); ++i) {
        const double d = p[i] - t[i];
        total += d * d;
      }
      return Tensor::scalar(total / static_cast<double>(p.numel()));
    }
    case OpKind::kSumAll: {
      double s = 0.0;
      for (int64_t i = 0; i < in(0).numel(); ++i) s += in(0)[i];
      return Tensor::scalar(s);
    }
    case OpKind::kMeanAll: {
      double s = 0.0;
      for (int64_t i = 0; i < in(0).numel(); ++i) s += in(0)[i];
      return Tensor::scalar(s / static_cast<double>(in(0).numel()));
    }
    case OpKind::kRowSum: {
      const Tensor& a = in(0);
      Tensor r = Tensor::zeros({a.dim(0)});
      for (int64_t i = 0; i < a.dim(0); ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < a.dim(1); ++j) s += a.at(i, j);
        r[i] = s;
      }
      return r;
    }
    case OpKind::kColSum: {
      const Tensor& a = in(0);
      Tensor r = Tensor::zeros({a.dim(1)});
      for (int64_t i = 0; i < a.dim(0); ++i)
        for (int64_t j = 0; j < a.dim(1); ++j) r[j] += a.at(i, j);
      return r;
    }
    case OpKind::kTileCols: {
      const Tensor& v = in(0);
      Tensor r = Tensor::zeros(nd.shape);
      for (int64_t i = 0; i < nd.shape[0]; ++i)
        for (int64_t j = 0; j < nd.shape[1]; ++j) r.at(i, j) = v[i];
      return r;
    }
    case OpKind::kTileRows: {
      const Tensor& v = in(0);
      Tensor r = Tensor::zeros(nd.shape);
      for (int64_t i = 0; i < nd.shape[0]; ++i)
        for (int64_t j = 0; j < nd.shape[1]; ++j) r.at(i, j) = v[j];
      return r;
    }
    case OpKind::kSegment: {
      const Tensor& a = in(0);
      Tensor r = Tensor::zeros(nd.shape);
      for (int64_t i = 0; i < nd.shape[0]; ++i) r[i] = a[nd.offset + i];
      return r;
    }
    case OpKind::kEmbed: {
      const Tensor& a = in(0);
      Tensor r = Tensor::zeros(nd.shape);
      for (int64_t i = 0; i < a.numel(); ++i) r[nd.offset + i] = a[i];
      return r;
    }
    case OpKind::kReshape:
      return Tensor(nd.shape, in(0).values());
  }
  fail("evaluate: unhandled op");
}

}  // namespace

std::vector<Tensor> evaluate_nodes(const Graph& g, const Bindings& bindings,
                                   std::span<const NodeId> ids) {
  require(!ids.empty(), "evaluate: no nodes requested");
  NodeId max_id = 0;
  for (NodeId id : ids) {
    require(id >= 0 && id < g.size(), "evaluate: node id out of range");
    max_id = std::max(max_id, id);
  }

  const size_t n = static_cast<size_t>(max_id) + 1;
  std::vector<char> needed(n, 0);
  for (NodeId id : ids) needed[static_cast<size_t>(id)] = 1;
  for (size_t i = n; i-- > 0;)
    if (needed[i])
      for (NodeId in : g.node(static_cast<NodeId>(i)).inputs) needed[static_cast<size_t>(in)] = 1;

  std::vector<Tensor> vals(n);
  for (size_t i = 0; i < n; ++i)
    if (needed[i]) vals[i] = eval_node(g.node(static_cast<NodeId>(i)), vals, bindings);

  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (NodeId id : ids) out.push_back(vals[static_cast<size_t>(id)]);
  return out;
}

Tensor evaluate(const Graph& g, const Bindings& bindings) {
  require(g.root() != kNoNode, "evaluate: graph has no root");
  const NodeId ids[] = {g.root()};
  return std::move(evaluate_nodes(g, bindings, ids)[0]);
}

Graph grad(const Graph& g, std::string_view wrt) {
  require(g.root() != kNoNode, "grad: graph has no root");
  Graph out = g;
  NodeId leaf = out.find_placeholder(wrt);
  require(leaf != kNoNode, "grad: no placeholder named '" + std::string(wrt) + "'");
  out.set_root(out.grad_node(out.root(), leaf));
  return out;
}

Tensor grad2(const Graph& g, std::string_view wrt, const Tensor& direction,
             const Bindings& bindings) {
  Graph work = g;
  NodeId leaf = work.find_placeholder(wrt);
  require(leaf != kNoNode, "grad2: no placeholder named '" + std::string(wrt) + "'");
  require(direction.shape() == work.node(leaf).shape,
          "grad2: direction shape " + shape_str(direction.shape()) + " does not match leaf " +
              shape_str(work.node(leaf).shape));
  NodeId g1 = work.grad_node(work.root(), leaf);
  NodeId dotted = work.sum_all(work.mul(g1, work.constant(direction)));
  NodeId g2 = work.grad_node(dotted, leaf);
  work.set_root(g2);
  return evaluate(work, bindings);
}

}  // namespace metaopt
