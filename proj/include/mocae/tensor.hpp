#pragma once
// Dense row-major n-dimensional tensors and a tape-based reverse-mode
// differentiation graph. A graph lives for one forward/backward pass.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mocae/common.hpp"

namespace mocae {

template <class S>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> sh, S fill = S(0))
      : shape(std::move(sh)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                             std::multiplies<>()),
             fill) {}

  static Tensor scalar(S v) {
    Tensor t{std::vector<std::size_t>{}};
    t.data.assign(1, v);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  bool is_scalar() const { return shape.empty() && data.size() == 1; }

  template <class... Ix>
  S& at(Ix... ix) {
    return data[flat_index(ix...)];
  }
  template <class... Ix>
  S at(Ix... ix) const {
    return data[flat_index(ix...)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
      os << shape[i] << (i + 1 < shape.size() ? "," : "");
    os << ']';
    return os.str();
  }

private:
  template <class... Ix>
  std::size_t flat_index(Ix... ix) const {
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    std::size_t flat = 0;
    for (std::size_t d = 0; d < sizeof...(ix); ++d) flat = flat * shape[d] + idx[d];
    return flat;
  }
};

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

// One-shot backward tape. Node ids are indices into a flat vector; every
// node's inputs precede it, so a single reverse sweep is a valid backward
// pass that touches each node exactly once.
template <class S>
class Graph {
public:
  using BackFn = std::function<void(Graph&, int)>;

  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    std::vector<int> inputs;
    BackFn back;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  int leaf(Tensor<S> v, bool requires_grad = false) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int make(Tensor<S> v, std::vector<int> inputs, BackFn back) {
    Node n;
    n.value = std::move(v);
    for (int id : inputs)
      if (nodes_[static_cast<std::size_t>(id)].requires_grad) n.requires_grad = true;
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Tensor<S>& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Tensor<S>& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulate into a node's gradient, allocating on first touch.
  void accum(int id, const Tensor<S>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.numel() == 0) n.grad = Tensor<S>(n.value.shape);
    S* dst = n.grad.data.data();
    const S* src = g.data.data();
    for (std::size_t i = 0; i < g.data.size(); ++i) dst[i] += src[i];
  }

  // Seeds d(output)/d(output) = 1 and sweeps the tape in reverse.
  void backward(int output) {
    Node& out = nodes_[static_cast<std::size_t>(output)];
    if (!out.value.is_scalar())
      throw ShapeError("backward: output node must be scalar, got " +
                       out.value.shape_str());
    for (Node& n : nodes_)
      if (n.requires_grad && n.grad.numel() == 0) n.grad = Tensor<S>(n.value.shape);
    if (out.requires_grad) out.grad.data[0] = S(1);
    for (int id = output; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.requires_grad && n.back) n.back(*this, id);
    }
  }

  // Gradients of all differentiable leaves, keyed by node id.
  std::map<int, Tensor<S>> leaf_gradients() const {
    std::map<int, Tensor<S>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_leaf && nodes_[i].requires_grad) {
        if (nodes_[i].grad.numel() > 0)
          out[static_cast<int>(i)] = nodes_[i].grad;
        else
          out[static_cast<int>(i)] = Tensor<S>(nodes_[i].value.shape);
      }
    return out;
  }

private:
  std::vector<Node> nodes_;
};

}  // namespace mocae
