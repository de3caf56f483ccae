#include "eegpolicy/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

namespace eegpolicy::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

double median(std::vector<double> x) {
  if (x.empty()) return 0.0;
  const std::size_t mid = x.size() / 2;
  std::nth_element(x.begin(), x.begin() + mid, x.end());
  const double upper = x[mid];
  if (x.size() % 2 == 1) return upper;
  const double lower = *std::max_element(x.begin(), x.begin() + mid);
  return 0.5 * (lower + upper);
}

double mad(std::span<const double> x) {
  const double med = median(std::vector<double>(x.begin(), x.end()));
  std::vector<double> dev(x.size());
  std::transform(x.begin(), x.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
  return median(std::move(dev));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n < 2) return 0.0;
  const double ma = mean(a.first(n));
  const double mb = mean(b.first(n));
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::vector<double> robust_z(std::span<const double> x) {
  const double med = median(std::vector<double>(x.begin(), x.end()));
  const double spread = kMadToSigma * mad(x);
  std::vector<double> z(x.size(), 0.0);
  if (spread <= 0.0) return z;
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - med) / spread;
  return z;
}

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<>(), z); }

double normal_upper_tail(double z) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(), z));
}

double student_t_upper_tail(double t, double dof) {
  if (!std::isfinite(t)) return t > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<>(dof), t));
}

}  // namespace eegpolicy::stats
