#pragma once

// Dense row-major tensors with a reverse-mode gradient tape.
//
// A Tensor is a shared handle to a node holding shape, data and (optionally)
// gradient storage. Operations in ops.hpp record a backward closure on the
// thread's active Tape when at least one input requires a gradient. With no
// active tape, operations run forward only.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace noble {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numeric mode of a graph. Training runs in `standard` (float); gradient
/// checks run in `check` (double).
enum class Precision { standard, check };

template <Precision P>
struct precision_traits;
template <>
struct precision_traits<Precision::standard> {
  using type = float;
};
template <>
struct precision_traits<Precision::check> {
  using type = double;
};
template <Precision P>
using real_t = typename precision_traits<P>::type;

template <typename Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
};

template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<Real> data() { return node_->data; }
  std::span<const Real> data() const { return node_->data; }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<Real> grad() { return node_->grad; }
  std::span<const Real> grad() const { return node_->grad; }
  /// Allocates zeroed gradient storage if absent.
  std::span<Real> ensure_grad();
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Deep copy, detached from any graph.
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<Real>> node) : node_(std::move(node)) {}

  std::shared_ptr<TensorNode<Real>> node_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Entries are appended in execution order, so each entry's inputs were
/// produced by earlier entries or are leaves. backward() runs the entries in
/// reverse exactly once; a second call before reset() is rejected.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op_name, BackwardFn backward);
  void backward(Tensor<Real>& loss);
  /// Drops recorded entries so the tape can be reused for a new pass.
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool backward_done() const { return backward_done_; }
  std::vector<std::string_view> op_names() const;

  /// Active tape for this thread, or nullptr.
  static Tape* current();

 private:
  template <typename>
  friend class TapeScope;

  struct Entry {
    std::string_view op_name;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  bool backward_done_ = false;
  Tape* previous_ = nullptr;
};

/// Makes a tape current for the enclosing scope.
template <typename Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>& tape_;
};

/// Thread-local count of floating point work done by kernels. The modeled
/// training clock is derived from it.
struct FlopCounter {
  static void add(std::uint64_t flops);
  static std::uint64_t value();
  static void reset();
};

}  // namespace noble
