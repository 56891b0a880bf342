#pragma once

#include <Eigen/Dense>
#include <array>
#include <nlohmann/json.hpp>
#include <cstddef>
#include <span>
#include <vector>

#include "mhanet/data.hpp"
#include "mhanet/tensor.hpp"

namespace mhanet {

/// Fitted common-spatial-pattern filters. Rows of `filters` are spatial
/// filters w with Sigma_0 w = lambda (Sigma_0 + Sigma_1) w, normalized so
/// that w' (Sigma_0 + Sigma_1) w = 1 and the largest-magnitude coefficient
/// is positive.
struct CSPModel {
  std::size_t c_raw = 0;
  std::size_t c_out = 0;
  double shrinkage = 0.0;
  Eigen::MatrixXd filters;           // [c_out x c_raw]
  std::vector<double> eigenvalues;   // sorted by max(lambda, 1 - lambda), descending
  std::array<Eigen::MatrixXd, 2> class_covariances;

  /// wᵀΣ₀w / wᵀ(Σ₀+Σ₁)w for an arbitrary direction.
  double variance_ratio(const Eigen::VectorXd& w) const;

  nlohmann::json to_json() const;
  static CSPModel from_json(const nlohmann::json& j);
};

/// Trace-normalized covariance of one demeaned [channels x samples] window.
Eigen::MatrixXd window_covariance(std::span<const float> raw, std::size_t channels,
                                  std::size_t samples);

CSPModel fit_csp(const WindowSet& train, std::size_t c_out, double shrinkage = 0.05);

/// filters · raw for one [c_raw x T] window, returned as [c_out, 1, T].
/// Filters are rounded to 32-bit before use, so a model restored from a
/// checkpoint projects identically.
Tensor apply_csp(const CSPModel& model, const Tensor& raw);

/// Projects into a caller-provided [c_out x T] buffer.
void project_window(const CSPModel& model, std::span<const float> raw, std::size_t samples,
                    std::span<float> out);

/// A CSPModel holding only filters, as restored from a checkpoint.
CSPModel csp_from_filters(std::size_t c_out, std::size_t c_raw, std::span<const float> filters);

/// Reference classifier: log-variance of CSP components fed to a two-class
/// Fisher linear discriminant.
class CspLdaBaseline {
 public:
  CspLdaBaseline(const CSPModel& csp, const WindowSet& train);
  int predict(const Window& window, std::size_t samples) const;
  double accuracy(const WindowSet& set) const;

 private:
  Eigen::VectorXd features(const Window& window, std::size_t samples) const;

  CSPModel csp_;
  Eigen::VectorXd weights_;
  double threshold_ = 0.0;
};

}  // namespace mhanet
