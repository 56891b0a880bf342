#include "mhanet/csp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mhanet/error.hpp"

namespace mhanet {

namespace {

Eigen::MatrixXd shrink(const Eigen::MatrixXd& cov, double shrinkage) {
  const auto n = cov.rows();
  const double mu = cov.trace() / static_cast<double>(n);
  return (1.0 - shrinkage) * cov + shrinkage * mu * Eigen::MatrixXd::Identity(n, n);
}

void require_psd(const Eigen::MatrixXd& cov, const char* what) {
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    fail(ErrorKind::Numerical, "CSP: ", what, " covariance is not symmetric (", asym, ")");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  if (lo < -1e-10 * std::max(1.0, std::abs(cov.trace()))) {
    fail(ErrorKind::Numerical, "CSP: ", what, " covariance is not positive semi-definite (min eigenvalue ",
         lo, ")");
  }
}

}  // namespace

Eigen::MatrixXd window_covariance(std::span<const float> raw, std::size_t channels,
                                  std::size_t samples) {
  if (raw.size() != channels * samples) {
    fail(ErrorKind::Dimension, "window has ", raw.size(), " values, expected ", channels * samples);
  }
  Eigen::MatrixXd x(channels, samples);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < samples; ++t)
      x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = raw[c * samples + t];
  x.colwise() -= x.rowwise().mean();
  Eigen::MatrixXd cov = x * x.transpose();
  const double tr = cov.trace();
  if (!(tr > 0.0)) fail(ErrorKind::Data, "CSP: window has zero variance");
  return cov / tr;
}

double CSPModel::variance_ratio(const Eigen::VectorXd& w) const {
  const double num = w.dot(class_covariances[0] * w);
  const double den = w.dot((class_covariances[0] + class_covariances[1]) * w);
  return num / den;
}

CSPModel fit_csp(const WindowSet& train, std::size_t c_out, double shrinkage) {
  if (train.empty()) fail(ErrorKind::Data, "CSP: empty training set");
  const std::size_t c = train.channels;
  if (c_out == 0 || c_out % 2 != 0 || c_out > c) {
    fail(ErrorKind::Config, "CSP: c_out=", c_out, " must be even, positive and <= ", c);
  }
  if (!(shrinkage >= 0.0 && shrinkage < 1.0)) {
    fail(ErrorKind::Config, "CSP: shrinkage ", shrinkage, " outside [0,1)");
  }
  std::array<Eigen::MatrixXd, 2> cov{Eigen::MatrixXd::Zero(c, c), Eigen::MatrixXd::Zero(c, c)};
  std::array<std::size_t, 2> count{0, 0};
  for (const auto& w : train.windows) {
    if (w.label != 0 && w.label != 1) fail(ErrorKind::Data, "CSP: label ", w.label, " not in {0,1}");
    cov[w.label] += window_covariance(w.raw, c, train.samples);
    ++count[w.label];
  }
  for (int k = 0; k < 2; ++k) {
    if (count[k] == 0) fail(ErrorKind::Data, "CSP: class ", k, " absent from training windows");
    cov[k] /= static_cast<double>(count[k]);
    cov[k] = shrink(cov[k], shrinkage);
    cov[k] = 0.5 * (cov[k] + cov[k].transpose());
    require_psd(cov[k], k == 0 ? "class 0" : "class 1");
  }

  const Eigen::MatrixXd composite = cov[0] + cov[1];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> comp(composite);
  const Eigen::VectorXd d = comp.eigenvalues();
  if (!(d.minCoeff() > 1e-12 * d.maxCoeff())) {
    fail(ErrorKind::Numerical, "CSP: composite covariance is singular; increase shrinkage");
  }
  const Eigen::MatrixXd whitening =
      d.cwiseSqrt().cwiseInverse().asDiagonal() * comp.eigenvectors().transpose();
  Eigen::MatrixXd s0 = whitening * cov[0] * whitening.transpose();
  s0 = 0.5 * (s0 + s0.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rot(s0);
  const Eigen::VectorXd lambda = rot.eigenvalues();  // ascending
  const Eigen::MatrixXd all = rot.eigenvectors().transpose() * whitening;

  std::vector<Eigen::Index> picked;
  const auto half = static_cast<Eigen::Index>(c_out / 2);
  const auto n = static_cast<Eigen::Index>(c);
  for (Eigen::Index i = 0; i < half; ++i) picked.push_back(n - 1 - i);
  for (Eigen::Index i = 0; i < half; ++i) picked.push_back(i);
  auto discriminability = [&](Eigen::Index i) { return std::max(lambda(i), 1.0 - lambda(i)); };
  std::stable_sort(picked.begin(), picked.end(), [&](Eigen::Index a, Eigen::Index b) {
    return discriminability(a) > discriminability(b);
  });

  CSPModel model;
  model.c_raw = c;
  model.c_out = c_out;
  model.shrinkage = shrinkage;
  model.class_covariances = cov;
  model.filters.resize(static_cast<Eigen::Index>(c_out), n);
  for (std::size_t r = 0; r < picked.size(); ++r) {
    Eigen::RowVectorXd row = all.row(picked[r]);
    Eigen::Index arg = 0;
    row.cwiseAbs().maxCoeff(&arg);
    if (row(arg) < 0.0) row = -row;
    model.filters.row(static_cast<Eigen::Index>(r)) = row;
    model.eigenvalues.push_back(lambda(picked[r]));
  }
  return model;
}

void project_window(const CSPModel& model, std::span<const float> raw, std::size_t samples,
                    std::span<float> out) {
  if (raw.size() != model.c_raw * samples) {
    fail(ErrorKind::Dimension, "CSP: window has ", raw.size() / std::max<std::size_t>(samples, 1),
         " channels, model expects ", model.c_raw);
  }
  if (out.size() != model.c_out * samples) {
    fail(ErrorKind::Dimension, "CSP: output buffer has wrong size");
  }
  std::vector<double> acc(samples);
  for (std::size_t o = 0; o < model.c_out; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t c = 0; c < model.c_raw; ++c) {
      const double w = static_cast<float>(
          model.filters(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c)));
      const float* row = raw.data() + c * samples;
      for (std::size_t t = 0; t < samples; ++t) acc[t] += w * row[t];
    }
    for (std::size_t t = 0; t < samples; ++t) out[o * samples + t] = static_cast<float>(acc[t]);
  }
}

Tensor apply_csp(const CSPModel& model, const Tensor& raw) {
  if (raw.rank() != 2 || raw.dim(0) != model.c_raw) {
    fail(ErrorKind::Dimension, "CSP: expected raw [", model.c_raw, ",T], got ",
         shape_str(raw.shape()));
  }
  const std::size_t samples = raw.dim(1);
  std::vector<float> out(model.c_out * samples);
  project_window(model, raw.data(), samples, out);
  return Tensor(Shape{model.c_out, 1, samples}, std::move(out));
}

CSPModel csp_from_filters(std::size_t c_out, std::size_t c_raw, std::span<const float> filters) {
  if (filters.size() != c_out * c_raw) {
    fail(ErrorKind::Dimension, "CSP: ", filters.size(), " filter values for ", c_out, "x", c_raw);
  }
  CSPModel m;
  m.c_out = c_out;
  m.c_raw = c_raw;
  m.filters.resize(static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(c_raw));
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_raw; ++c)
      m.filters(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c)) = filters[o * c_raw + c];
  return m;
}

nlohmann::json CSPModel::to_json() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(filters.size()));
  for (Eigen::Index r = 0; r < filters.rows(); ++r)
    for (Eigen::Index c = 0; c < filters.cols(); ++c) flat.push_back(filters(r, c));
  return nlohmann::json{{"c_raw", c_raw},
                        {"c_out", c_out},
                        {"shrinkage", shrinkage},
                        {"filters", flat},
                        {"eigenvalues", eigenvalues}};
}

CSPModel CSPModel::from_json(const nlohmann::json& j) {
  try {
    CSPModel m;
    m.c_raw = j.at("c_raw").get<std::size_t>();
    m.c_out = j.at("c_out").get<std::size_t>();
    m.shrinkage = j.at("shrinkage").get<double>();
    const auto flat = j.at("filters").get<std::vector<double>>();
    if (flat.size() != m.c_raw * m.c_out) {
      fail(ErrorKind::Format, "CSP JSON: filters hold ", flat.size(), " values, expected ",
           m.c_raw * m.c_out);
    }
    m.filters.resize(static_cast<Eigen::Index>(m.c_out), static_cast<Eigen::Index>(m.c_raw));
    for (std::size_t r = 0; r < m.c_out; ++r)
      for (std::size_t c = 0; c < m.c_raw; ++c)
        m.filters(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * m.c_raw + c];
    m.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "CSP JSON: ", e.what());
  }
}

CspLdaBaseline::CspLdaBaseline(const CSPModel& csp, const WindowSet& train) : csp_(csp) {
  const auto dim = static_cast<Eigen::Index>(csp.c_out);
  std::array<std::vector<Eigen::VectorXd>, 2> feats;
  for (const auto& w : train.windows) feats[w.label].push_back(features(w, train.samples));
  if (feats[0].empty() || feats[1].empty()) fail(ErrorKind::Data, "LDA: a class is absent");
  std::array<Eigen::VectorXd, 2> mu{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(dim, dim);
  for (int k = 0; k < 2; ++k) {
    for (const auto& f : feats[k]) mu[k] += f;
    mu[k] /= static_cast<double>(feats[k].size());
    for (const auto& f : feats[k]) scatter += (f - mu[k]) * (f - mu[k]).transpose();
  }
  scatter /= static_cast<double>(feats[0].size() + feats[1].size() - 2);
  scatter += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
  weights_ = scatter.ldlt().solve(mu[1] - mu[0]);
  threshold_ = weights_.dot(0.5 * (mu[0] + mu[1]));
}

Eigen::VectorXd CspLdaBaseline::features(const Window& window, std::size_t samples) const {
  std::vector<float> projected(csp_.c_out * samples);
  project_window(csp_, window.raw, samples, projected);
  Eigen::VectorXd f(static_cast<Eigen::Index>(csp_.c_out));
  for (std::size_t o = 0; o < csp_.c_out; ++o) {
    const float* row = projected.data() + o * samples;
    const double mean = std::accumulate(row, row + samples, 0.0) / static_cast<double>(samples);
    double var = 0.0;
    for (std::size_t t = 0; t < samples; ++t) var += (row[t] - mean) * (row[t] - mean);
    f(static_cast<Eigen::Index>(o)) = std::log(var / static_cast<double>(samples) + 1e-12);
  }
  return f;
}

int CspLdaBaseline::predict(const Window& window, std::size_t samples) const {
  return weights_.dot(features(window, samples)) > threshold_ ? 1 : 0;
}

double CspLdaBaseline::accuracy(const WindowSet& set) const {
  if (set.empty()) fail(ErrorKind::Data, "LDA: empty evaluation set");
  std::size_t correct = 0;
  for (const auto& w : set.windows) correct += predict(w, set.samples) == w.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace mhanet
