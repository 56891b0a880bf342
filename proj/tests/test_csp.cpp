#include <doctest.h>

#include <cmath>

#include "mhanet/csp.hpp"
#include "mhanet/error.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace mhanet;
using namespace mhanet::testing;

namespace {

Window window_from(const std::vector<std::vector<double>>& rows, int label) {
  Window w;
  w.label = label;
  for (const auto& r : rows)
    for (double v : r) w.raw.push_back(static_cast<float>(v));
  return w;
}

// Two orthogonal zero-mean sequences of equal energy.
const std::vector<double> kA{1, -1, 1, -1};
const std::vector<double> kB{1, 1, -1, -1};

std::vector<double> scaled(const std::vector<double>& v, double s) {
  auto out = v;
  for (auto& x : out) x *= s;
  return out;
}

WindowSet diag_toy() {
  WindowSet set;
  set.channels = 2;
  set.samples = 4;
  // class 0: diag(4,1), class 1: diag(1,4)
  set.windows.push_back(window_from({scaled(kA, 2.0), kB}, 0));
  set.windows.push_back(window_from({kA, scaled(kB, 2.0)}, 1));
  return set;
}

// Roots of det(A - l (A+B)) = 0 for 2x2 symmetric A, B.
std::array<double, 2> closed_form_2x2(const Eigen::Matrix2d& a, const Eigen::Matrix2d& b) {
  const Eigen::Matrix2d s = a + b;
  const double qa = s(0, 0) * s(1, 1) - s(0, 1) * s(0, 1);
  const double qb = -(a(0, 0) * s(1, 1) + a(1, 1) * s(0, 0) - 2.0 * a(0, 1) * s(0, 1));
  const double qc = a(0, 0) * a(1, 1) - a(0, 1) * a(0, 1);
  const double disc = std::sqrt(qb * qb - 4.0 * qa * qc);
  return {(-qb + disc) / (2.0 * qa), (-qb - disc) / (2.0 * qa)};
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

double sample_variance_ratio(const Eigen::VectorXd& w, const WindowSet& set) {
  std::array<double, 2> var{0.0, 0.0};
  std::array<std::size_t, 2> n{0, 0};
  for (const auto& win : set.windows) {
    std::vector<double> proj(set.samples, 0.0);
    for (std::size_t c = 0; c < set.channels; ++c)
      for (std::size_t t = 0; t < set.samples; ++t)
        proj[t] += w(static_cast<Eigen::Index>(c)) * win.raw[c * set.samples + t];
    double mean = 0.0;
    for (double v : proj) mean += v;
    mean /= static_cast<double>(proj.size());
    double acc = 0.0;
    for (double v : proj) acc += (v - mean) * (v - mean);
    var[win.label] += acc / static_cast<double>(proj.size());
    ++n[win.label];
  }
  const double v0 = var[0] / static_cast<double>(n[0]);
  const double v1 = var[1] / static_cast<double>(n[1]);
  return v0 / (v0 + v1);
}

}  // namespace

TEST_CASE("window covariance is demeaned and trace normalized") {
  std::vector<float> raw{1, 2, 3, 4, 2, 4, 6, 8};  // second row = 2 x first
  const auto cov = window_covariance(raw, 2, 4);
  CHECK(cov.trace() == doctest::Approx(1.0));
  CHECK(cov(0, 0) == doctest::Approx(0.2));
  CHECK(cov(1, 1) == doctest::Approx(0.8));
  CHECK(cov(0, 1) == doctest::Approx(0.4));
  std::vector<float> flat{3, 3, 3, 3, 1, 1, 1, 1};
  CHECK_THROWS_AS(window_covariance(flat, 2, 4), Error);
}

TEST_CASE("diagonal 2x2 toy gives axis-aligned filters with lambda 0.8") {
  const auto model = fit_csp(diag_toy(), 2, 0.0);
  REQUIRE(model.eigenvalues.size() == 2);
  const auto roots = closed_form_2x2(model.class_covariances[0], model.class_covariances[1]);
  CHECK(roots[0] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(roots[1] == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(model.eigenvalues[0] == doctest::Approx(roots[0]).epsilon(1e-9));
  CHECK(model.eigenvalues[1] == doctest::Approx(roots[1]).epsilon(1e-9));
  // first filter keeps channel 0, second keeps channel 1
  CHECK(std::abs(model.filters(0, 1)) < 1e-9);
  CHECK(std::abs(model.filters(1, 0)) < 1e-9);
  CHECK(model.filters(0, 0) > 0.0);
  CHECK(model.filters(1, 1) > 0.0);
}

TEST_CASE("non-diagonal 2x2 eigenvalues match the quadratic closed form") {
  Eigen::MatrixXd m0(2, 2), m1(2, 2);
  m0 << 1.5, 0.3, -0.2, 0.7;
  m1 << 0.6, -0.4, 0.5, 1.4;
  const auto set = mixed_gaussian_windows({m0, m1}, 32, 40, 3);
  const auto model = fit_csp(set, 2, 0.1);
  const auto roots = closed_form_2x2(model.class_covariances[0], model.class_covariances[1]);
  std::array<double, 2> got{model.eigenvalues[0], model.eigenvalues[1]};
  std::sort(got.begin(), got.end(), std::greater<>());
  CHECK(got[0] == doctest::Approx(roots[0]).epsilon(1e-9));
  CHECK(got[1] == doctest::Approx(roots[1]).epsilon(1e-9));
}

TEST_CASE("identical class distributions give eigenvalues near one half") {
  const Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(6, 6);
  const auto set = mixed_gaussian_windows({mix, mix}, 128, 200, 11);
  const auto model = fit_csp(set, 6, 0.05);
  for (double l : model.eigenvalues) CHECK(std::abs(l - 0.5) <= 0.05);
}

TEST_CASE("disjoint subspaces: top filter ratio on held-out windows is at least 0.9") {
  const auto mix = disjoint_subspace_mixing(6, 2, 4.0);
  const auto train = mixed_gaussian_windows(mix, 64, 60, 21);
  const auto held_out = mixed_gaussian_windows(mix, 64, 60, 22);
  const auto model = fit_csp(train, 2, 0.05);
  // the top filter is the one with the largest class-0 ratio
  const Eigen::Index top = model.eigenvalues[0] >= model.eigenvalues[1] ? 0 : 1;
  const Eigen::VectorXd w = model.filters.row(top).transpose();
  CHECK(sample_variance_ratio(w, held_out) >= 0.9);
  const Eigen::VectorXd other = model.filters.row(1 - top).transpose();
  CHECK(sample_variance_ratio(other, held_out) <= 0.1);
}

TEST_CASE("eigenvalues are ordered by discriminability and satisfy the eigen relation") {
  Rng rng(8);
  std::array<Eigen::MatrixXd, 2> mix;
  for (auto& m : mix) {
    m = Eigen::MatrixXd(8, 8);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  }
  const auto set = mixed_gaussian_windows(mix, 48, 30, 9);
  const auto model = fit_csp(set, 6, 0.05);
  for (std::size_t i = 1; i < model.eigenvalues.size(); ++i) {
    const double prev = std::max(model.eigenvalues[i - 1], 1 - model.eigenvalues[i - 1]);
    const double cur = std::max(model.eigenvalues[i], 1 - model.eigenvalues[i]);
    CHECK(prev >= cur);
  }
  for (std::size_t i = 0; i < model.eigenvalues.size(); ++i) {
    const double l = model.eigenvalues[i];
    CHECK(l > 0.0);
    CHECK(l < 1.0);
    const Eigen::VectorXd w = model.filters.row(static_cast<Eigen::Index>(i)).transpose();
    CHECK(eigen_residual(model.class_covariances[0], model.class_covariances[1], w, l) < 1e-4);
    // normalization and sign convention
    CHECK(w.dot((model.class_covariances[0] + model.class_covariances[1]) * w) ==
          doctest::Approx(1.0).epsilon(1e-9));
    Eigen::Index arg = 0;
    w.cwiseAbs().maxCoeff(&arg);
    CHECK(w(arg) > 0.0);
  }
  for (const auto& c : model.class_covariances) {
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-6);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    CHECK(eig.eigenvalues().minCoeff() >= 0.0);
  }
}

TEST_CASE("top eigenvalue beats a brute-force direction search") {
  Eigen::MatrixXd m0(3, 3), m1(3, 3);
  m0 << 2.0, 0.3, 0.1, 0.0, 0.5, 0.2, 0.4, 0.1, 1.0;
  m1 << 0.4, 0.0, 0.3, 0.2, 1.8, 0.1, 0.1, 0.6, 0.9;
  const auto set = mixed_gaussian_windows({m0, m1}, 64, 50, 31);
  const auto model = fit_csp(set, 2, 0.05);
  const double top = *std::max_element(model.eigenvalues.begin(), model.eigenvalues.end());
  const double brute =
      brute_force_best_ratio(model.class_covariances[0], model.class_covariances[1], 10000, 4);
  CHECK(top >= brute - 1e-3);
  CHECK(top <= 1.0);
}

TEST_CASE("scaling every window leaves filters and ratios unchanged") {
  const auto mix = disjoint_subspace_mixing(5, 2, 2.0);
  auto set = mixed_gaussian_windows(mix, 40, 30, 41);
  const auto base = fit_csp(set, 4, 0.05);
  for (auto& w : set.windows)
    for (auto& v : w.raw) v *= 37.5f;
  const auto scaled_model = fit_csp(set, 4, 0.05);
  for (Eigen::Index r = 0; r < 4; ++r) {
    const Eigen::VectorXd a = base.filters.row(r).transpose();
    const Eigen::VectorXd b = scaled_model.filters.row(r).transpose();
    CHECK(cosine(a, b) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(base.variance_ratio(a) - scaled_model.variance_ratio(b)) < 1e-5);
  }
}

TEST_CASE("fit_csp rejects bad inputs") {
  auto toy = diag_toy();
  CHECK_THROWS_AS(fit_csp(WindowSet{}, 2, 0.0), Error);
  try {
    fit_csp(toy, 3, 0.0);
    FAIL("odd c_out accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  try {
    fit_csp(toy, 4, 0.0);
    FAIL("c_out above channel count accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  try {
    fit_csp(toy, 2, 1.0);
    FAIL("shrinkage 1 accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  toy.windows.pop_back();
  try {
    fit_csp(toy, 2, 0.0);
    FAIL("missing class accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
}

TEST_CASE("apply_csp: identity, common-mode rejection and matrix-product oracle") {
  const auto raw = random_tensor<float>({3, 10}, 5);
  std::vector<float> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  const auto id = apply_csp(csp_from_filters(3, 3, eye), raw);
  CHECK(id.shape() == Shape{3, 1, 10});
  for (std::size_t i = 0; i < 30; ++i) CHECK(id.data()[i] == raw.data()[i]);

  std::vector<float> twin(20);
  for (std::size_t t = 0; t < 10; ++t) twin[t] = twin[10 + t] = static_cast<float>(std::sin(0.3 * t));
  const std::vector<float> diff{1, -1};
  const auto zero = apply_csp(csp_from_filters(1, 2, diff), Tensor({2, 10}, twin));
  for (float v : zero.data()) CHECK(v == 0.0f);

  const auto filt = random_tensor<float>({4, 3}, 6);
  const auto out = apply_csp(csp_from_filters(4, 3, filt.data()), raw);
  CHECK(out.shape() == Shape{4, 1, 10});
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t t = 0; t < 10; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 3; ++c) acc += double(filt.data()[o * 3 + c]) * raw.data()[c * 10 + t];
      CHECK(out.data()[o * 10 + t] == doctest::Approx(acc).epsilon(1e-6));
    }

  try {
    apply_csp(csp_from_filters(4, 3, filt.data()), random_tensor<float>({2, 10}, 7));
    FAIL("channel mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("CSP JSON round trip") {
  const auto mix = disjoint_subspace_mixing(4, 1, 3.0);
  const auto model = fit_csp(mixed_gaussian_windows(mix, 32, 20, 51), 2, 0.05);
  const auto j = model.to_json();
  CHECK(j.at("filters").size() == 8);
  const auto back = CSPModel::from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.c_raw == 4);
  CHECK(back.c_out == 2);
  CHECK(back.shrinkage == model.shrinkage);
  CHECK(back.filters == model.filters);
  CHECK(back.eigenvalues == model.eigenvalues);
  auto bad = j;
  bad["filters"].erase(0);
  CHECK_THROWS_AS(CSPModel::from_json(bad), Error);
  CHECK_THROWS_AS(CSPModel::from_json(nlohmann::json{{"c_raw", 2}}), Error);
}

TEST_CASE("CSP+LDA separates disjoint subspaces and is at chance on identical classes") {
  const auto mix = disjoint_subspace_mixing(6, 2, 3.0);
  const auto train = mixed_gaussian_windows(mix, 64, 80, 61);
  const auto test = mixed_gaussian_windows(mix, 64, 80, 62);
  const auto csp = fit_csp(train, 4, 0.05);
  CHECK(CspLdaBaseline(csp, train).accuracy(test) >= 0.95);

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
  const auto same_train = mixed_gaussian_windows({eye, eye}, 64, 80, 63);
  const auto same_test = mixed_gaussian_windows({eye, eye}, 64, 200, 64);
  const auto same = fit_csp(same_train, 4, 0.05);
  const double acc = CspLdaBaseline(same, same_train).accuracy(same_test);
  // 3 sigma binomial bound around chance
  CHECK(std::abs(acc - 0.5) <= 3.0 * std::sqrt(0.25 / 400.0));
}
