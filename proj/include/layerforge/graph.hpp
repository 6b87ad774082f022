#pragma once

#include <functional>
#include <vector>

#include "layerforge/tensor.hpp"

namespace layerforge {

class Graph;

// Handle to one tape node.
struct Var {
  Graph* graph = nullptr;
  int node = -1;
  bool valid() const { return graph != nullptr && node >= 0; }
};

// Reverse-mode tape. Nodes append in evaluation order; backward() sweeps once
// in reverse, accumulating gradients in fixed node order (bitwise
// reproducible). One tape per thread; a tape is single use after backward().
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf with no gradient tracking.
  Var constant(Tensor value);
  // Differentiable leaf.
  Var param(Tensor value);

  const Tensor& value(Var v) const;
  // Zeros until backward() touches the node.
  const Tensor& grad(Var v);

  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.node)].needs_grad; }

  // loss must be a single-element tensor
  void backward(Var loss);

  // Appends a node. backprop reads grad_of(node) and accumulates into its
  // inputs via add_grad; it runs only when some input needs a gradient.
  Var emit(Tensor value, const std::vector<Var>& inputs,
           std::function<void(Graph&, int)> backprop);

  const Tensor& grad_of(int node) const { return grads_[static_cast<std::size_t>(node)]; }
  void add_grad(Var v, const Tensor& g);
  void add_grad(Var v, Tensor&& g);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    std::function<void(Graph&, int)> backprop;
    bool needs_grad = false;
  };

  Tensor& grad_buffer(int node);
  Var check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  Tensor empty_grad_;
  bool ran_backward_ = false;
};

}  // namespace layerforge
