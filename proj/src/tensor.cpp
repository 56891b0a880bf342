#include "mhanet/tensor.hpp"

#include <atomic>
#include <sstream>

namespace mhanet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorStorage<T>>()) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) fail(ErrorKind::Dimension, "tensor extent is zero on axis ", i);
  }
  if (mhanet::numel(shape) != data.size()) {
    fail(ErrorKind::Dimension, "shape ", shape_str(shape), " holds ", mhanet::numel(shape),
         " values but ", data.size(), " were given");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = mhanet::numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t BasicTensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) fail(ErrorKind::Dimension, "axis ", axis, " out of range for rank ", r);
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) fail(ErrorKind::Usage, "item() on tensor of shape ", shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) fail(ErrorKind::Dimension, "index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= impl_->shape[axis]) fail(ErrorKind::Dimension, "index out of bounds on axis ", axis);
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(impl_->shape, impl_->data, false);
}

namespace {
std::atomic<std::uint64_t> next_tape_id{1};

template <typename T>
Tape<T>*& current_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
}  // namespace

template <typename T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
Tape<T>::Scope::Scope(Tape& tape) : previous_(current_tape<T>()) {
  current_tape<T>() = &tape;
}

template <typename T>
Tape<T>::Scope::~Scope() {
  current_tape<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::current() noexcept {
  return current_tape<T>();
}

template <typename T>
void Tape<T>::record(const BasicTensor<T>& out,
                     std::vector<std::shared_ptr<TensorStorage<T>>> inputs,
                     std::function<void()> backprop) {
  if (consumed_) fail(ErrorKind::Usage, "recording onto a tape that already ran backward");
  out.storage().requires_grad = true;
  out.storage().tape_id = id_;
  entries_.push_back(Entry{out.storage_ptr(), std::move(inputs), std::move(backprop)});
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorKind::Usage, "backward needs a scalar loss");
  }
  if (consumed_) fail(ErrorKind::Usage, "tape already consumed; run a new forward pass first");
  if (loss.storage().tape_id != id_) {
    fail(ErrorKind::Usage, "loss was not produced on this tape");
  }
  consumed_ = true;
  loss.storage().ensure_grad()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backprop();
  }
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in->requires_grad && in->tape_id == 0) in->ensure_grad();
    }
  }
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  auto* tape = Tape<T>::current();
  if (tape == nullptr) fail(ErrorKind::Usage, "backward called without an open tape");
  tape->backward(loss);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace mhanet
