#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaopt/tensor.hpp"

namespace metaopt {

// Primitive operations. Every derivative rule is expressed in this same set,
// so a gradient graph can be differentiated again for exact higher-order
// derivatives.
enum class OpKind {
  kPlaceholder,  // named leaf, bound at evaluation time
  kConstant,     // tensor baked into the graph
  kAdd,
  kSub,
  kMul,          // elementwise
  kCMul,         // compile-time scalar times tensor
  kScale,        // rank-0 node times tensor
  kMatMul,       // 2-D only
  kTranspose,    // 2-D
  kTanh,
  kRelu,
  kHeaviside,    // relu mask; derivative is zero
  kSoftmax,      // row-wise over a 2-D tensor
  kSoftmaxXent,  // fused mean softmax cross-entropy, rank-0 output
  kMse,          // fused mean squared error, rank-0 output
  kSumAll,
  kMeanAll,
  kRowSum,   // [n,c] -> [n]
  kColSum,   // [n,c] -> [c]
  kTileCols, // [n] -> [n,c]
  kTileRows, // [c] -> [n,c]
  kSegment,  // 1-D slice
  kEmbed,    // 1-D slice scattered into zeros
  kReshape,
};

std::string_view op_name(OpKind op);
std::span<const OpKind> all_op_kinds();

using NodeId = int32_t;
constexpr NodeId kNoNode = -1;

struct Node {
  OpKind op;
  Shape shape;                  // output shape
  std::vector<NodeId> inputs;   // indices of earlier nodes
  double scalar = 0.0;          // kCMul factor
  int64_t offset = 0;           // kSegment / kEmbed
  int64_t extent = 0;           // kSegment length, kEmbed total, kTile* count
  std::string name;             // kPlaceholder
  Tensor value;                 // kConstant payload
};

using Bindings = std::map<std::string, Tensor, std::less<>>;

// Immutable-after-construction DAG of primitives in topological order.
// Gradients are built by appending adjoint nodes (graph-to-graph), never by
// replaying a tape, so applying grad twice yields exact second derivatives.
class Graph {
 public:
  NodeId placeholder(std::string name, Shape shape);
  NodeId constant(Tensor value);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId cmul(double c, NodeId a);
  NodeId scale(NodeId s, NodeId a);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId heaviside(NodeId a);
  NodeId softmax(NodeId a);
  NodeId softmax_xent(NodeId logits, NodeId labels);
  NodeId mse(NodeId pred, NodeId target);
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);
  NodeId row_sum(NodeId a);
  NodeId col_sum(NodeId a);
  NodeId tile_cols(NodeId v, int64_t cols);
  NodeId tile_rows(NodeId v, int64_t rows);
  NodeId segment(NodeId a, int64_t offset, int64_t len);
  NodeId embed(NodeId a, int64_t offset, int64_t total);
  NodeId reshape(NodeId a, Shape shape);

  // Appends nodes computing d(out)/d(wrt) and returns the node holding it.
  // `out` must be rank 0; `wrt` may be any node (leaf or interior). Only the
  // subgraph on paths from wrt to out is differentiated.
  NodeId grad_node(NodeId out, NodeId wrt);

  void set_root(NodeId id);
  NodeId root() const { return root_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  NodeId find_placeholder(std::string_view name) const;  // kNoNode if absent

 private:
  NodeId push(Node n);
  const Shape& shape_of(NodeId id) const { return nodes_[static_cast<size_t>(id)].shape; }
  void check_node(NodeId id, const char* ctx) const;

  std::vector<Node> nodes_;
  NodeId root_ = kNoNode;
};

// Forward evaluation of the nodes reachable from the root; deterministic for
// fixed bindings. Throws on unbound leaves and shape mismatches.
Tensor evaluate(const Graph& g, const Bindings& bindings);

// Evaluates several nodes of one graph in a single pass.
std::vector<Tensor> evaluate_nodes(const Graph& g, const Bindings& bindings,
                                   std::span<const NodeId> ids);

// New graph computing the gradient of g's (scalar) root with respect to the
// placeholder `wrt`. The result is built only from registered primitives and
// can itself be differentiated.
Graph grad(const Graph& g, std::string_view wrt);

// Exact Hessian-vector product d2(root)/d(wrt)2 * direction at the given
// bindings, via grad-of-grad.
Tensor grad2(const Graph& g, std::string_view wrt, const Tensor& direction,
             const Bindings& bindings);

}  // namespace metaopt
