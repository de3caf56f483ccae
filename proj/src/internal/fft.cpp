#include "internal/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace eegpolicy::detail {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  std::lock_guard lock(planner_mutex());
  auto* in = fftw_alloc_real(n);
  auto* out = fftw_alloc_complex(n / 2 + 1);
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), out, in, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void RealFft::forward(std::span<const double> in, std::vector<std::complex<double>>& out) const {
  auto* buf_in = fftw_alloc_real(n_);
  auto* buf_out = fftw_alloc_complex(n_ / 2 + 1);
  std::fill(buf_in, buf_in + n_, 0.0);
  std::copy_n(in.begin(), std::min(in.size(), n_), buf_in);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), buf_in, buf_out);
  out.resize(n_ / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {buf_out[k][0], buf_out[k][1]};
  fftw_free(buf_in);
  fftw_free(buf_out);
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::vector<double>& out) const {
  auto* buf_in = fftw_alloc_complex(n_ / 2 + 1);
  auto* buf_out = fftw_alloc_real(n_);
  for (std::size_t k = 0; k < n_ / 2 + 1; ++k) {
    buf_in[k][0] = in[k].real();
    buf_in[k][1] = in[k].imag();
  }
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), buf_in, buf_out);
  out.assign(buf_out, buf_out + n_);
  fftw_free(buf_in);
  fftw_free(buf_out);
}

std::vector<double> convolve_same(std::span<const double> x, std::span<const double> kernel) {
  const std::size_t n = x.size();
  const std::size_t k = kernel.size();
  const std::size_t half = k / 2;
  if (n == 0) return {};

  // odd reflection about the end samples, then edge hold if the signal is short
  const std::size_t pad = half;
  std::vector<double> ext(n + 2 * pad);
  auto at = [&](long i) -> double {
    const long last = static_cast<long>(n) - 1;
    if (i < 0) {
      const long j = std::min(-i, last);
      return 2.0 * x[0] - x[static_cast<std::size_t>(j)];
    }
    if (i > last) {
      const long j = std::max(2 * last - i, 0L);
      return 2.0 * x[n - 1] - x[static_cast<std::size_t>(j)];
    }
    return x[static_cast<std::size_t>(i)];
  };
  for (std::size_t i = 0; i < ext.size(); ++i) ext[i] = at(static_cast<long>(i) - static_cast<long>(pad));

  std::size_t fft_n = 1;
  while (fft_n < ext.size() + k - 1) fft_n <<= 1;
  RealFft fft(fft_n);
  std::vector<std::complex<double>> xs, ks;
  fft.forward(ext, xs);
  fft.forward(kernel, ks);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] *= ks[i];
  std::vector<double> full;
  fft.inverse(xs, full);
  std::vector<double> out(n);
  const double scale = 1.0 / static_cast<double>(fft_n);
  // full[j] corresponds to sum_m ext[j - m] kernel[m]; center of kernel at half
  for (std::size_t i = 0; i < n; ++i) out[i] = full[i + pad + half] * scale;
  return out;
}

}  // namespace eegpolicy::detail
