#include <Eigen/Eigenvalues>
#include <numbers>

#include "doctest.h"
#include "eegpolicy/error.hpp"
#include "eegpolicy/preprocess.hpp"
#include "eegpolicy/spectral.hpp"
#include "support.hpp"

using namespace eegpolicy;

namespace {

// Dense concentration operator: A(i,j) = sin(2 pi W (i-j)) / (pi (i-j)), A(i,i) = 2W.
Eigen::MatrixXd concentration_matrix(std::size_t n, double nw) {
  const double w = nw / static_cast<double>(n);
  Eigen::MatrixXd A(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      A(i, j) = i == j ? 2.0 * w : std::sin(2.0 * std::numbers::pi * w * d) / (std::numbers::pi * d);
    }
  return A;
}

Spectrum grid_spectrum(double df, std::size_t n, const std::function<double(double)>& f) {
  Spectrum s;
  for (std::size_t i = 0; i < n; ++i) {
    s.freqs.push_back(df * static_cast<double>(i));
    s.psd.push_back(f(s.freqs.back()));
  }
  return s;
}

double trapezoid(const std::function<double(double)>& f, double lo, double hi, std::size_t steps) {
  const double h = (hi - lo) / static_cast<double>(steps);
  double acc = 0.5 * (f(lo) + f(hi));
  for (std::size_t i = 1; i < steps; ++i) acc += f(lo + h * static_cast<double>(i));
  return acc * h;
}

}  // namespace

TEST_CASE("DPSS tapers are orthonormal and sign-normalized") {
  for (auto [n, nw, k] : {std::tuple{500u, 4.0, 7u}, std::tuple{512u, 4.0, 7u}, std::tuple{128u, 2.5, 4u}}) {
    const auto t = dpss_tapers(n, nw, k);
    const Eigen::MatrixXd G = t.tapers * t.tapers.transpose();
    CHECK((G - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
    for (std::size_t r = 0; r < k; ++r) {
      Eigen::Index first = 0;
      while (std::abs(t.tapers(static_cast<Eigen::Index>(r), first)) < 1e-12) ++first;
      CHECK(t.tapers(static_cast<Eigen::Index>(r), first) > 0.0);
    }
    for (std::size_t r = 1; r < k; ++r) CHECK(t.concentrations[r] <= t.concentrations[r - 1]);
  }
}

TEST_CASE("DPSS concentrations agree with a dense eigen-decomposition") {
  const std::size_t n = 512, k = 7;
  const auto t = dpss_tapers(n, 4.0, k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(concentration_matrix(n, 4.0));
  const Eigen::VectorXd lam = es.eigenvalues().reverse();
  for (std::size_t r = 0; r < k; ++r) {
    CHECK(t.concentrations[r] > 0.90);
    CHECK(t.concentrations[r] == doctest::Approx(lam(static_cast<Eigen::Index>(r))).epsilon(1e-6));
    // taper is an eigenvector of the dense operator up to sign
    const Eigen::VectorXd v = es.eigenvectors().col(static_cast<Eigen::Index>(n - 1 - r));
    CHECK(std::abs(std::abs(v.dot(t.tapers.row(static_cast<Eigen::Index>(r)).transpose())) - 1.0) < 1e-6);
  }
}

TEST_CASE("DPSS taper count out of range") {
  CHECK_THROWS_AS(dpss_tapers(500, 4.0, 8), Error);
  CHECK_THROWS_AS(dpss_tapers(500, 4.0, 0), Error);
  CHECK_THROWS_AS(dpss_tapers(5, 4.0, 7), Error);
}

TEST_CASE("multitaper PSD: zero signal, tone peak, length mismatch") {
  const auto t = dpss_tapers(500, 4.0, 7);
  std::vector<double> zero(500, 0.0);
  for (double v : multitaper_psd(zero, t, 250.0).psd) CHECK(v == 0.0);
  std::vector<double> x(500);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * 10.0 * static_cast<double>(i) / 250.0);
  const auto s = multitaper_psd(x, t, 250.0);
  const auto peak = std::max_element(s.psd.begin(), s.psd.end()) - s.psd.begin();
  const double df = s.freqs[1] - s.freqs[0];
  CHECK(std::abs(s.freqs[static_cast<std::size_t>(peak)] - 10.0) <= df);
  CHECK(s.freqs.back() == doctest::Approx(125.0));
  std::vector<double> short_x(499, 1.0);
  CHECK_THROWS_AS(multitaper_psd(short_x, t, 250.0), Error);
}

TEST_CASE("multitaper PSD integrates to the mean square of white noise") {
  const auto t = dpss_tapers(500, 4.0, 7);
  Rng rng = make_rng(41);
  double total = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> x(500);
    for (auto& v : x) v = standard_normal(rng);
    total += band_power(multitaper_psd(x, t, 250.0), {0.0, 125.0});
  }
  CHECK(total / 100.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("Simpson: exact on f^2 and cubics, flat bands, trimming") {
  const auto s = grid_spectrum(0.25, 5, [](double f) { return f * f; });
  CHECK(std::abs(band_power(s, {0, 1}) - 1.0 / 3.0) <= 1e-15);
  const auto cubic = grid_spectrum(0.5, 41, [](double f) { return 2 * f * f * f - f * f + 3; });
  auto exact = [](double a, double b) {
    auto F = [](double f) { return 0.5 * f * f * f * f - f * f * f / 3.0 + 3 * f; };
    return F(b) - F(a);
  };
  CHECK(std::abs(band_power(cubic, {2, 12}) - exact(2, 12)) <= 1e-12 * exact(2, 12));
  const auto flat = grid_spectrum(0.5, 201, [](double) { return 2.5; });
  CHECK(std::abs(band_power(flat, {8, 12}) - 10.0) <= 1e-12);
  const auto trimmed = integrate_band(flat, {8, 12.5});
  CHECK(trimmed.trimmed_trailing_point);
  CHECK(trimmed.points == 9);
  CHECK_THROWS_AS(band_power(flat, {90, 120}), Error);
}

TEST_CASE("Simpson agrees with a fine trapezoid oracle on a smooth PSD") {
  auto f = [](double x) { return 1.0 / (1.0 + 0.05 * x * x) + 0.3 * std::exp(-0.5 * (x - 10) * (x - 10)); };
  const auto s = grid_spectrum(0.5, 251, f);
  for (Band b : {Band{4, 7}, Band{8, 12}, Band{1, 50}}) {
    const double oracle = trapezoid(f, b.lo, b.hi, 100 * static_cast<std::size_t>((b.hi - b.lo) / 0.5));
    CHECK(std::abs(band_power(s, b) - oracle) <= 1e-3 * oracle);
  }
}

TEST_CASE("relative band power: flat spectrum, band = total, narrowband theta") {
  const auto flat = grid_spectrum(0.5, 251, [](double) { return 3.0; });
  CHECK(std::abs(relative_band_power(flat, kAlpha) - 4.0 / 49.0) <= 1e-9);
  CHECK(relative_band_power(flat, kTotal, kTotal) == doctest::Approx(1.0).epsilon(1e-15));
  const auto theta = grid_spectrum(0.5, 251, [](double f) { return std::exp(-8.0 * (f - 5.5) * (f - 5.5)); });
  CHECK(relative_band_power(theta, kTheta) > 0.99);
  const auto zero = grid_spectrum(0.5, 251, [](double) { return 0.0; });
  CHECK_THROWS_AS(relative_band_power(zero, kAlpha), Error);
}

TEST_CASE("feature names") {
  CHECK(feature_name("FC2", Condition::eyes_closed, "theta") == "fc2.close.theta");
  CHECK(feature_name("Oz", Condition::eyes_open, "alpha") == "oz.open.alpha");
}

namespace {
EpochSet epochs_for(Condition c, int block, std::uint64_t seed, std::size_t ne = 4) {
  const auto rec = testsupport::synthetic_recording(common_channels_54(), 250.0, 2.0 * static_cast<double>(ne), c, block, "s", seed);
  return segment_epochs(rec, 2.0);
}
}  // namespace

TEST_CASE("extract_features: 216 columns in [0,1], ordered channel/condition/band") {
  const std::vector<EpochSet> sets{epochs_for(Condition::eyes_open, 1, 1), epochs_for(Condition::eyes_closed, 2, 2),
                                   epochs_for(Condition::eyes_closed, 3, 3), epochs_for(Condition::eyes_open, 4, 4)};
  const auto row = extract_features(sets, common_channels_54());
  REQUIRE(row.values.size() == 216);
  CHECK(row.names[0] == feature_name(common_channels_54()[0], Condition::eyes_open, "theta"));
  CHECK(row.names[1] == feature_name(common_channels_54()[0], Condition::eyes_open, "alpha"));
  CHECK(row.names[2] == feature_name(common_channels_54()[0], Condition::eyes_closed, "theta"));
  CHECK(row.names[4] == feature_name(common_channels_54()[1], Condition::eyes_open, "theta"));
  for (std::size_t i = 0; i < row.values.size(); i += 2) {
    CHECK(row.values[i] >= 0.0);
    CHECK(row.values[i] + row.values[i + 1] <= 1.0);
  }
  // stronger alpha with eyes closed
  CHECK(row.values[3] > row.values[1]);
  CHECK(extract_features(sets, common_channels_54()).values == row.values);
}

TEST_CASE("extract_features: identical epochs, scale invariance, missing condition") {
  auto open = epochs_for(Condition::eyes_open, 1, 7, 1);
  auto closed = epochs_for(Condition::eyes_closed, 2, 8, 1);
  const auto single = extract_features({open, closed}, common_channels_54());
  auto open3 = open, closed3 = closed;
  for (int k = 0; k < 2; ++k) {
    open3.epochs.push_back(open.epochs[0]);
    open3.keep_mask.push_back(true);
    closed3.epochs.push_back(closed.epochs[0]);
    closed3.keep_mask.push_back(true);
  }
  const auto triple = extract_features({open3, closed3}, common_channels_54());
  for (std::size_t i = 0; i < single.values.size(); ++i) CHECK(triple.values[i] == doctest::Approx(single.values[i]).epsilon(1e-12));
  auto scaled_open = open, scaled_closed = closed;
  scaled_open.epochs[0] *= 37.0;
  scaled_closed.epochs[0] *= 37.0;
  const auto scaled = extract_features({scaled_open, scaled_closed}, common_channels_54());
  for (std::size_t i = 0; i < single.values.size(); ++i) CHECK(scaled.values[i] == doctest::Approx(single.values[i]).epsilon(1e-10));
  CHECK_THROWS_AS(extract_features({open}, common_channels_54()), Error);
  closed.keep_mask[0] = false;
  CHECK_THROWS_AS(extract_features({open, closed}, common_channels_54()), Error);
}
