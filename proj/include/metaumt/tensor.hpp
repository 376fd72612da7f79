#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace metaumt {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when absent
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves and constants
};

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// use clone() or detach() for an independent value.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : impl_(std::make_shared<TensorStorage<T>>()) {
    impl_->data.assign(metaumt::numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  BasicTensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorStorage<T>>()) {
    if (data.size() != metaumt::numel(shape)) {
      throw ShapeError("tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                       metaumt::to_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

  static BasicTensor parameter(Shape shape, std::vector<T> data) {
    BasicTensor t(std::move(shape), std::move(data));
    t.impl_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::vector<T>& data() { return impl_->data; }
  const std::vector<T>& data() const { return impl_->data; }
  T item() const {
    if (numel() != 1) throw ShapeError("item: tensor with shape " + metaumt::to_string(shape()) + " is not scalar");
    return impl_->data[0];
  }
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<T>& grad() { return impl_->grad; }
  const std::vector<T>& grad() const { return impl_->grad; }
  std::vector<T>& ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T{0});
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), T{0}); }
  void clear_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  std::uint64_t tape_id() const { return impl_->tape_id; }

  /// Value copy with no gradient and no tape membership.
  BasicTensor detach() const {
    BasicTensor out(impl_->shape, impl_->data);
    return out;
  }

  /// Value copy that keeps leaf/parameter status but drops the gradient.
  BasicTensor clone() const {
    BasicTensor out(impl_->shape, impl_->data);
    out.impl_->requires_grad = impl_->tape_id == 0 && impl_->requires_grad;
    return out;
  }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }
  TensorStorage<T>* storage() const { return impl_.get(); }
  std::shared_ptr<TensorStorage<T>> handle() const { return impl_; }

 private:
  template <typename>
  friend class Tape;

  std::shared_ptr<TensorStorage<T>> impl_;
};

using Tensor = BasicTensor<float>;

/// Records the forward pass as an ordered list of nodes. Leaves (parameters)
/// accumulate gradients across backward() calls; intermediate gradients are
/// reset at the start of every backward().
template <typename T>
class Tape {
 public:
  struct Node {
    const char* kind;
    std::shared_ptr<TensorStorage<T>> output;
    std::function<void()> backward;
  };

  explicit Tape(bool recording = true) : id_(next_id()), recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  void check_input(const BasicTensor<T>& t, const char* op) const {
    if (!t.defined()) throw TapeError(std::string(op) + ": undefined input tensor");
    if (t.tape_id() != 0 && t.tape_id() != id_) {
      throw TapeError(std::string(op) + ": input tensor belongs to a different tape");
    }
  }

  /// Whether an op with these inputs must record a node.
  template <typename... Ts>
  bool needs_grad(const Ts&... inputs) const {
    return recording_ && (inputs.requires_grad() || ...);
  }

  /// Registers `out` as produced by a node; `backward` reads out's grad and
  /// accumulates into the inputs' grads.
  void record(const char* kind, BasicTensor<T>& out, std::function<void()> backward) {
    out.impl_->requires_grad = true;
    out.impl_->tape_id = id_;
    nodes_.push_back(Node{kind, out.impl_, std::move(backward)});
  }

  void backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1 || loss.rank() != 0) {
      throw ShapeError("backward: loss must be a scalar of shape [], got " +
                       (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    }
    if (loss.tape_id() != id_) throw TapeError("backward: loss is not on this tape");
    for (auto& n : nodes_) n.output->grad.assign(n.output->data.size(), T{0});
    loss.impl_->grad[0] = T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  }

  void clear() { nodes_.clear(); }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::uint64_t id_;
  bool recording_;
  std::vector<Node> nodes_;
};

/// Tape that never records; for inference and pseudo-pair generation.
template <typename T>
class NoGradTape : public Tape<T> {
 public:
  NoGradTape() : Tape<T>(false) {}
};

}  // namespace metaumt
