#include <Eigen/Eigenvalues>
#include <cmath>

#include "eegpolicy/error.hpp"
#include "eegpolicy/spectral.hpp"
#include "internal/fft.hpp"

namespace eegpolicy {

TaperSet dpss_tapers(std::size_t n, double nw, std::size_t k) {
  if (!(nw > 0.0)) throw Error(Errc::domain, "nw", "time-bandwidth must be positive");
  if (k < 1 || static_cast<double>(k) > 2.0 * nw - 1.0)
    throw Error(Errc::domain, "k", "taper count must lie in [1, 2*nw - 1]");
  if (n < k) throw Error(Errc::domain, "n", "need at least k samples");

  const double w = nw / static_cast<double>(n);
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::VectorXd diag(N), off(std::max<Eigen::Index>(N - 1, 0));
  for (Eigen::Index i = 0; i < N; ++i) {
    const double a = (static_cast<double>(N - 1) - 2.0 * static_cast<double>(i)) / 2.0;
    diag(i) = a * a * std::cos(2.0 * M_PI * w);
  }
  for (Eigen::Index i = 1; i < N; ++i)
    off(i - 1) = static_cast<double>(i) * static_cast<double>(N - i) / 2.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw Error(Errc::degenerate, "dpss", "eigen-solver failed");

  TaperSet ts;
  ts.time_bandwidth = nw;
  ts.tapers.resize(static_cast<Eigen::Index>(k), N);
  for (std::size_t j = 0; j < k; ++j) {
    // eigenvalues come back ascending
    Eigen::VectorXd v = solver.eigenvectors().col(N - 1 - static_cast<Eigen::Index>(j));
    v.normalize();
    for (Eigen::Index i = 0; i < N; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0) v = -v;
        break;
      }
    }
    ts.tapers.row(static_cast<Eigen::Index>(j)) = v.transpose();
  }

  // Energy concentration in [-W, W]: t' A t with the sinc Toeplitz kernel.
  std::vector<double> kernel(n);
  kernel[0] = 2.0 * w;
  for (std::size_t d = 1; d < n; ++d) {
    const double dd = static_cast<double>(d);
    kernel[d] = std::sin(2.0 * M_PI * w * dd) / (M_PI * dd);
  }
  for (std::size_t j = 0; j < k; ++j) {
    const auto t = ts.tapers.row(static_cast<Eigen::Index>(j));
    double acc = 0.0;
    for (Eigen::Index a = 0; a < N; ++a) {
      double row = 0.0;
      for (Eigen::Index b = 0; b < N; ++b) row += kernel[static_cast<std::size_t>(std::abs(a - b))] * t(b);
      acc += t(a) * row;
    }
    ts.concentrations.push_back(acc);
  }
  return ts;
}

Spectrum multitaper_psd(std::span<const double> x, const TaperSet& tapers, double fs) {
  const std::size_t n = tapers.length();
  if (x.size() != n) throw Error(Errc::length_mismatch, "signal", "length differs from taper length");
  if (!(fs > 0.0)) throw Error(Errc::domain, "sample_rate", "must be positive");
  detail::RealFft fft(n);
  const std::size_t bins = n / 2 + 1;
  Spectrum s;
  s.freqs.resize(bins);
  s.psd.assign(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) s.freqs[b] = static_cast<double>(b) * fs / static_cast<double>(n);

  std::vector<double> y(n);
  std::vector<std::complex<double>> spec;
  for (std::size_t k = 0; k < tapers.count(); ++k) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * tapers.tapers(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
    fft.forward(y, spec);
    for (std::size_t b = 0; b < bins; ++b) s.psd[b] += std::norm(spec[b]);
  }
  const double scale = 1.0 / (fs * static_cast<double>(tapers.count()));
  for (std::size_t b = 0; b < bins; ++b) {
    const bool edge = b == 0 || (n % 2 == 0 && b == bins - 1);
    s.psd[b] *= scale * (edge ? 1.0 : 2.0);
  }
  return s;
}

BandIntegral integrate_band(const Spectrum& spec, Band band) {
  if (spec.freqs.size() < 2) throw Error(Errc::invalid_argument, "spectrum", "too few grid points");
  const double df = spec.freqs[1] - spec.freqs[0];
  const double eps = 1e-9 * df;
  if (band.lo > band.hi) throw Error(Errc::domain, "band", "lo > hi");
  if (band.lo < spec.freqs.front() - eps || band.hi > spec.freqs.back() + eps)
    throw Error(Errc::domain, "band", "band lies outside the frequency grid");
  std::size_t first = spec.freqs.size(), last = 0;
  for (std::size_t i = 0; i < spec.freqs.size(); ++i) {
    if (spec.freqs[i] >= band.lo - eps && spec.freqs[i] <= band.hi + eps) {
      first = std::min(first, i);
      last = i;
    }
  }
  if (first == spec.freqs.size() || last < first + 2)
    throw Error(Errc::domain, "band", "band spans fewer than 3 grid points");
  BandIntegral out;
  std::size_t count = last - first + 1;
  if (count % 2 == 0) {
    --last;
    --count;
    out.trimmed_trailing_point = true;
  }
  out.points = count;
  double sum = spec.psd[first] + spec.psd[last];
  for (std::size_t i = first + 1; i < last; ++i) sum += ((i - first) % 2 == 1 ? 4.0 : 2.0) * spec.psd[i];
  out.value = sum * df / 3.0;
  return out;
}

double band_power(const Spectrum& spec, Band band) { return integrate_band(spec, band).value; }

double relative_band_power(const Spectrum& spec, Band band, Band total) {
  if (band.lo < total.lo || band.hi > total.hi)
    throw Error(Errc::domain, "band", "band must lie inside the total range");
  const double denom = band_power(spec, total);
  if (!(denom > 0.0)) throw Error(Errc::degenerate, "total_power", "total band power is zero");
  return band_power(spec, band) / denom;
}

}  // namespace eegpolicy
