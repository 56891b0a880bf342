#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mhanet/error.hpp"

namespace mhanet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is first written
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // nonzero when produced by a recorded op

  std::span<T> ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor. Copies share storage; ops never mutate their
/// inputs, so a tensor is immutable once created except for its gradient and
/// explicit writes through mutable_data() (optimizer updates, tests).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  /// Extent along `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy of the values, detached from any tape.
  BasicTensor detach() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return BasicTensor<U>(impl_->shape, std::move(out), impl_->requires_grad);
  }

  TensorStorage<T>& storage() const { return *impl_; }
  const std::shared_ptr<TensorStorage<T>>& storage_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorStorage<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Ordered record of the differentiable ops executed while the tape is the
/// thread's current tape. Confined to the thread that created it.
template <typename T>
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Installs a tape as the current one for this thread for its lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* current() noexcept;

  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool consumed() const noexcept { return consumed_; }

  /// Registers `out` as produced from `inputs`; `backprop` reads out's grad
  /// and accumulates into the inputs' grads.
  void record(const BasicTensor<T>& out,
              std::vector<std::shared_ptr<TensorStorage<T>>> inputs,
              std::function<void()> backprop);

  void backward(const BasicTensor<T>& loss);

 private:
  struct Entry {
    std::shared_ptr<TensorStorage<T>> output;
    std::vector<std::shared_ptr<TensorStorage<T>>> inputs;
    std::function<void()> backprop;
  };

  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

/// Reverse-mode pass over the current thread's tape.
template <typename T>
void backward(const BasicTensor<T>& loss);

}  // namespace mhanet
