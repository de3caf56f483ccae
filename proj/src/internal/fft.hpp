#pragma once

#include <complex>
#include <span>
#include <vector>

namespace eegpolicy::detail {

// Real-to-complex transform of a fixed length. Plans are created under a global
// lock (the FFTW planner is not thread-safe); execution is.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  // out has n/2 + 1 bins.
  void forward(std::span<const double> in, std::vector<std::complex<double>>& out) const;
  // Unnormalized inverse (result scaled by n).
  void inverse(std::span<const std::complex<double>> in, std::vector<double>& out) const;

 private:
  std::size_t n_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Linear convolution of a signal with a centered odd-length kernel, 'same' output,
// odd-reflection padding at both ends.
std::vector<double> convolve_same(std::span<const double> x, std::span<const double> kernel);

}  // namespace eegpolicy::detail
