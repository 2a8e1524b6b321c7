#include "noble/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace noble {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

template <typename Real>
Tape<Real>*& current_tape() {
  static thread_local Tape<Real>* tape = nullptr;
  return tape;
}

thread_local std::uint64_t flop_count = 0;

}  // namespace

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  validate_shape(shape);
  auto node = std::make_shared<TensorNode<Real>>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_to_string(shape) + " does not hold " + std::to_string(values.size()) +
                     " values");
  }
  auto node = std::make_shared<TensorNode<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

template <typename Real>
std::span<Real> Tensor<Real>::ensure_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), Real(0));
  return node_->grad;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  auto node = std::make_shared<TensorNode<Real>>(*node_);
  return Tensor(std::move(node));
}

template <typename Real>
void Tape<Real>::record(std::string_view op_name, BackwardFn backward) {
  if (backward_done_) throw std::logic_error("cannot record on a tape after backward(); call reset() first");
  entries_.push_back({op_name, std::move(backward)});
}

template <typename Real>
void Tape<Real>::backward(Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (backward_done_) throw std::logic_error("backward() called twice without reset()");
  backward_done_ = true;
  auto grad = loss.ensure_grad();
  grad[0] += Real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

template <typename Real>
void Tape<Real>::reset() {
  entries_.clear();
  backward_done_ = false;
}

template <typename Real>
std::vector<std::string_view> Tape<Real>::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op_name);
  return names;
}

template <typename Real>
Tape<Real>* Tape<Real>::current() {
  return current_tape<Real>();
}

template <typename Real>
TapeScope<Real>::TapeScope(Tape<Real>& tape) : tape_(tape) {
  tape_.previous_ = current_tape<Real>();
  current_tape<Real>() = &tape_;
}

template <typename Real>
TapeScope<Real>::~TapeScope() {
  current_tape<Real>() = tape_.previous_;
  tape_.previous_ = nullptr;
}

void FlopCounter::add(std::uint64_t flops) { flop_count += flops; }
std::uint64_t FlopCounter::value() { return flop_count; }
void FlopCounter::reset() { flop_count = 0; }

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;

}  // namespace noble
