#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "ctsel/ad/tensor.hpp"

namespace ctsel::ad {

class Tape;

/// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class LeafKind { constant, weight, input };

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backward. A tape is
/// single-threaded; distinct tapes are independent.
class Tape {
 public:
  /// Receives the node id and the gradient of its output, and accumulates into
  /// the gradients of its inputs.
  using BackwardFn = std::function<void(Tape&, std::uint32_t self, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Non-differentiable leaf that references caller-owned storage.
  Var constant_ref(const Tensor& value);
  /// Trainable weight leaf referencing caller-owned storage; it must outlive
  /// the tape and stay unmodified until backward completes.
  Var weight(const Tensor& value);
  /// Differentiable input leaf (e.g. treatments) owned by the tape.
  Var input(Tensor value);

  /// Record an op result. If none of `inputs` requires grad, `backward` is
  /// dropped and the result is a constant.
  Var record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return value(v.id); }
  const Tensor& value(std::uint32_t id) const;
  bool requires_grad(Var v) const { return requires_grad(v.id); }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  LeafKind kind(Var v) const { return nodes_[v.id].kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Add `g` into the gradient buffer of node `id` (no-op for constants).
  void accumulate(std::uint32_t id, const Tensor& g);
  /// Mutable gradient buffer of a node that requires grad (zero-initialised).
  Tensor& grad_buffer(std::uint32_t id);

  /// Reverse pass from a scalar node. Clears gradients from any earlier pass.
  void backward(Var loss);
  /// Gradient of the last backward pass with respect to `v`; zeros when `v`
  /// did not influence the loss.
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    LeafKind kind = LeafKind::constant;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
};

}  // namespace ctsel::ad
