#include "layerforge/graph.hpp"

namespace layerforge {

Var Graph::check(Var v) const {
  if (v.graph != this || v.node < 0 || v.node >= size()) {
    throw ConfigError("graph: Var does not belong to this tape");
  }
  return v;
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  grads_.emplace_back();
  return Var{this, size() - 1};
}

Var Graph::param(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  grads_.emplace_back();
  return Var{this, size() - 1};
}

Var Graph::emit(Tensor value, const std::vector<Var>& inputs,
                std::function<void(Graph&, int)> backprop) {
  bool needs = false;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (Var v : inputs) {
    check(v);
    ids.push_back(v.node);
    needs = needs || nodes_[static_cast<std::size_t>(v.node)].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), std::move(ids),
                        needs ? std::move(backprop) : nullptr, needs});
  grads_.emplace_back();
  return Var{this, size() - 1};
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.node)].value;
}

Tensor& Graph::grad_buffer(int node) {
  Tensor& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty() && nodes_[static_cast<std::size_t>(node)].value.size() > 0) {
    g = Tensor(nodes_[static_cast<std::size_t>(node)].value.shape());
  }
  return g;
}

const Tensor& Graph::grad(Var v) {
  check(v);
  return grad_buffer(v.node);
}

void Graph::add_grad(Var v, const Tensor& g) {
  Tensor& dst = grad_buffer(v.node);
  if (!dst.same_shape(g)) {
    throw DimensionError("graph: gradient shape " + shape_str(g.shape()) +
                         " does not match value " + shape_str(dst.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Graph::add_grad(Var v, Tensor&& g) { add_grad(v, static_cast<const Tensor&>(g)); }

void Graph::backward(Var loss) {
  check(loss);
  if (ran_backward_) throw ConfigError("graph: backward() already ran on this tape");
  ran_backward_ = true;
  const Node& top = nodes_[static_cast<std::size_t>(loss.node)];
  if (top.value.size() != 1) {
    throw DimensionError("graph: backward() root must be scalar, got " +
                         shape_str(top.value.shape()));
  }
  if (!top.needs_grad) return;
  grad_buffer(loss.node)[0] = real(1);
  for (int n = loss.node; n >= 0; --n) {
    const Node& node = nodes_[static_cast<std::size_t>(n)];
    if (!node.needs_grad || !node.backprop) continue;
    const Tensor& g = grads_[static_cast<std::size_t>(n)];
    if (g.empty()) continue;  // not reachable from the root
    node.backprop(*this, n);
  }
}

}  // namespace layerforge
