#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "mhanet/ops.hpp"
#include "mhanet/random.hpp"
#include "mhanet/tensor.hpp"

namespace mhanet::testing {

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = false) {
  Rng rng(seed);
  std::vector<T> data(numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return BasicTensor<T>(std::move(shape), std::move(data), requires_grad);
}

/// sum(out * R) for a fixed random R, so every output element carries a
/// distinct upstream gradient.
template <typename T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& out, std::uint64_t seed = 777) {
  return sum(mul(out, random_tensor<T>(out.shape(), seed, 0.5, 1.5)));
}

template <typename T>
struct GradProblem {
  std::vector<BasicTensor<T>> inputs;  // perturbed in place by finite differences
  std::function<BasicTensor<T>()> loss;
};

struct GradErrors {
  double rel64 = 0.0;  // 64-bit autodiff vs 64-bit central differences
  double rel32 = 0.0;  // 32-bit autodiff vs the same 64-bit differences
  std::size_t worst_input = 0;
  std::size_t zero_inputs = 0;  // inputs whose true gradient vanishes identically
};

inline double norm2(const std::vector<double>& a) {
  double n = 0.0;
  for (double v : a) n += v * v;
  return std::sqrt(n);
}

inline double norm_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / scale;
}

template <typename T>
std::vector<std::vector<double>> autodiff(GradProblem<T>& p) {
  for (auto& x : p.inputs) {
    x.zero_grad();
    x.set_requires_grad(true);
  }
  Tape<T> tape;
  {
    typename Tape<T>::Scope scope(tape);
    const auto loss = p.loss();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> out;
  for (const auto& x : p.inputs) out.emplace_back(x.grad().begin(), x.grad().end());
  return out;
}

/// Central differences of p.loss() with step h, outside any tape.
inline std::vector<std::vector<double>> central_differences(GradProblem<double>& p, double h) {
  std::vector<std::vector<double>> out;
  for (auto& x : p.inputs) {
    std::vector<double> g(x.numel());
    auto data = x.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = p.loss().item();
      data[i] = saved - h;
      const double down = p.loss().item();
      data[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// `make` is called as make(std::type_identity<T>{}) for T = double and
/// float and must build the same problem at both precisions.
template <typename Make>
GradErrors check_gradients(Make&& make, double h = 1e-3) {
  auto p64 = make(std::type_identity<double>{});
  auto p32 = make(std::type_identity<float>{});
  const auto a64 = autodiff(p64);
  const auto a32 = autodiff(p32);
  const auto fd = central_differences(p64, h);
  double global = 0.0;
  for (const auto& g : fd) global += norm2(g) * norm2(g);
  global = std::sqrt(global);
  GradErrors e;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    double r64 = norm_rel(a64[i], fd[i]);
    double r32 = norm_rel(a32[i], fd[i]);
    // A parameter feeding straight into a normalization has an identically
    // zero gradient; 32-bit rounding noise there is measured against the
    // gradient of the whole problem.
    if (norm2(fd[i]) <= 1e-9 * global && norm2(a64[i]) <= 1e-9 * global) {
      ++e.zero_inputs;
      r64 = norm2(a64[i]) / std::max(global, 1e-8);
      r32 = norm2(a32[i]) / std::max(global, 1e-8);
    }
    if (r64 > e.rel64) e.worst_input = i;
    e.rel64 = std::max(e.rel64, r64);
    e.rel32 = std::max(e.rel32, r32);
  }
  return e;
}

}  // namespace mhanet::testing
