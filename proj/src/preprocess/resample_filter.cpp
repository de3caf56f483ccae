#include <cmath>

#include "eegpolicy/error.hpp"
#include "eegpolicy/preprocess.hpp"
#include "internal/fft.hpp"

namespace eegpolicy {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

double blackman(double u) {
  // u in [-1, 1]
  if (std::abs(u) > 1.0) return 0.0;
  const double t = M_PI * (u + 1.0);
  return 0.42 - 0.5 * std::cos(t) + 0.08 * std::cos(2.0 * t);
}

// Odd length, Hamming-windowed sinc low-pass with unit DC gain.
std::vector<double> lowpass_kernel(double cutoff_hz, double fs, std::size_t taps) {
  std::vector<double> h(taps);
  const double fc = cutoff_hz / fs;
  const double mid = static_cast<double>(taps - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double k = static_cast<double>(i) - mid;
    const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(taps - 1));
    h[i] = 2.0 * fc * sinc(2.0 * fc * k) * w;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> convolve_full(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

}  // namespace

Recording resample(const Recording& rec, double target_rate) {
  if (!(target_rate > 0.0)) throw Error(Errc::domain, "target_rate", "must be positive");
  if (!(rec.sample_rate > 0.0)) throw Error(Errc::domain, "sample_rate_hz", "must be positive");
  if (target_rate > rec.sample_rate)
    throw Error(Errc::invalid_argument, "target_rate", "upsampling is not supported");
  if (target_rate == rec.sample_rate) return rec;

  const double ratio = target_rate / rec.sample_rate;
  const auto n_in = static_cast<long>(rec.num_samples());
  const auto n_out = static_cast<long>(std::floor(static_cast<double>(n_in) * ratio + 1e-9));
  // Anti-alias cutoff at 90% of the new Nyquist, in cycles per input sample.
  const double fc = 0.5 * ratio * 0.9;
  const double zero_crossings = 24.0;
  const double half_width = zero_crossings / (2.0 * fc);
  const long reach = static_cast<long>(std::ceil(half_width));

  Recording out = rec;
  out.sample_rate = target_rate;
  out.data.resize(rec.data.rows(), n_out);

  // kernel taps depend only on the fractional offset; reuse per output sample across channels
  std::vector<double> taps(static_cast<std::size_t>(2 * reach + 1));
  for (long k = 0; k < n_out; ++k) {
    const double u = static_cast<double>(k) / ratio;
    const long center = static_cast<long>(std::floor(u));
    double sum = 0.0;
    for (long j = center - reach; j <= center + reach; ++j) {
      const double d = u - static_cast<double>(j);
      const double w = 2.0 * fc * sinc(2.0 * fc * d) * blackman(d / (half_width + 1.0));
      taps[static_cast<std::size_t>(j - center + reach)] = w;
      sum += w;
    }
    for (Eigen::Index c = 0; c < rec.data.rows(); ++c) {
      const double* x = rec.data.row(c).data();
      double acc = 0.0;
      for (long j = center - reach; j <= center + reach; ++j) {
        double v;
        if (j < 0)
          v = 2.0 * x[0] - x[std::min(-j, n_in - 1)];
        else if (j >= n_in)
          v = 2.0 * x[n_in - 1] - x[std::max(2 * (n_in - 1) - j, 0L)];
        else
          v = x[j];
        acc += taps[static_cast<std::size_t>(j - center + reach)] * v;
      }
      out.data(c, k) = acc / sum;
    }
  }
  return out;
}

std::vector<double> design_fir(const FilterSpec& spec, double fs) {
  const double nyquist = fs / 2.0;
  if (!(spec.high_pass_hz > 0.0 && spec.high_pass_hz < spec.low_pass_hz && spec.low_pass_hz < nyquist))
    throw Error(Errc::domain, "high_pass_hz/low_pass_hz", "need 0 < high_pass < low_pass < Nyquist");
  if (!(spec.notch_hz > spec.high_pass_hz && spec.notch_hz < nyquist))
    throw Error(Errc::domain, "notch_hz", "notch must lie in (high_pass, Nyquist)");
  const double tw = spec.transition_hz > 0.0 ? spec.transition_hz : std::min(1.0, spec.high_pass_hz);
  // Hamming main-lobe width is about 3.3 / N cycles per sample.
  auto taps = static_cast<std::size_t>(std::ceil(3.3 * fs / tw));
  if (taps % 2 == 0) ++taps;

  const auto lp_hi = lowpass_kernel(std::min(spec.low_pass_hz + tw / 2.0, nyquist * 0.999), fs, taps);
  const auto lp_lo = lowpass_kernel(std::max(spec.high_pass_hz - tw / 2.0, tw / 4.0), fs, taps);
  std::vector<double> band(taps);
  for (std::size_t i = 0; i < taps; ++i) band[i] = lp_hi[i] - lp_lo[i];

  const double lo = spec.notch_hz - spec.notch_half_width_hz;
  const double hi = std::min(spec.notch_hz + spec.notch_half_width_hz, nyquist * 0.999);
  if (lo <= 0.0) throw Error(Errc::domain, "notch_half_width_hz", "notch band reaches DC");
  const auto n_hi = lowpass_kernel(hi, fs, taps);
  const auto n_lo = lowpass_kernel(lo, fs, taps);
  std::vector<double> notch(taps);
  for (std::size_t i = 0; i < taps; ++i) notch[i] = -(n_hi[i] - n_lo[i]);
  notch[taps / 2] += 1.0;

  return convolve_full(band, notch);
}

Recording apply_filters(const Recording& rec, const FilterSpec& spec) {
  const auto kernel = design_fir(spec, rec.sample_rate);
  Recording out = rec;
  for (Eigen::Index c = 0; c < rec.data.rows(); ++c) {
    std::span<const double> row(rec.data.row(c).data(), static_cast<std::size_t>(rec.data.cols()));
    const auto y = detail::convolve_same(row, kernel);
    for (Eigen::Index s = 0; s < rec.data.cols(); ++s) out.data(c, s) = y[static_cast<std::size_t>(s)];
  }
  return out;
}

Recording apply_filters(const Recording& rec, double notch, double high_pass, double low_pass) {
  FilterSpec spec;
  spec.notch_hz = notch;
  spec.high_pass_hz = high_pass;
  spec.low_pass_hz = low_pass;
  return apply_filters(rec, spec);
}

}  // namespace eegpolicy
