#include "ctsel/ad/tape.hpp"

#include <algorithm>

#include "ctsel/common/error.hpp"

namespace ctsel::ad {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::push(Node node) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  return Var{this, id};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.borrowed = &value;
  return push(std::move(n));
}

Var Tape::weight(const Tensor& value) {
  Node n;
  n.borrowed = &value;
  n.requires_grad = true;
  n.kind = LeafKind::weight;
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  n.kind = LeafKind::input;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<std::uint32_t> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced on tape (node " + std::to_string(size()) + ")");
  Node n;
  n.owned = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](std::uint32_t i) { return requires_grad(i); });
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  return push(std::move(n));
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Tensor& v = value(id);
    n.grad = Tensor(v.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(std::uint32_t id, const Tensor& g) {
  if (!requires_grad(id)) return;
  Tensor& buf = grad_buffer(id);
  if (buf.size() != g.size())
    throw ShapeError("gradient shape " + g.shape_string() + " does not match node shape " + buf.shape_string());
  double* dst = buf.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  if (value(loss.id).size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + value(loss.id).shape_string());
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!requires_grad(loss.id)) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, id, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  return Tensor(value(v.id).shape(), 0.0);
}

}  // namespace ctsel::ad
