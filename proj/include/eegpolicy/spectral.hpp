#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/preprocess.hpp"

namespace eegpolicy {

struct TaperSet {
  Eigen::MatrixXd tapers;  // k x n, orthonormal rows
  double time_bandwidth = 0.0;
  std::vector<double> concentrations;  // non-increasing

  std::size_t count() const { return static_cast<std::size_t>(tapers.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(tapers.cols()); }
};

// Discrete prolate spheroidal sequences from the symmetric tridiagonal operator.
TaperSet dpss_tapers(std::size_t n, double nw, std::size_t k);

struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> psd;
  std::string channel;
};

// One-sided multitaper PSD; integrates (over [0, Nyquist]) to the mean square.
Spectrum multitaper_psd(std::span<const double> signal, const TaperSet& tapers, double sample_rate);

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr Band kTheta{4.0, 7.0};
inline constexpr Band kAlpha{8.0, 12.0};
inline constexpr Band kTotal{1.0, 50.0};

struct BandIntegral {
  double value = 0.0;
  std::size_t points = 0;
  // An even number of grid points fell inside the band; the last one was dropped.
  bool trimmed_trailing_point = false;
};

// Composite Simpson integral of psd over grid points in [lo, hi].
BandIntegral integrate_band(const Spectrum& spec, Band band);
double band_power(const Spectrum& spec, Band band);
double relative_band_power(const Spectrum& spec, Band band, Band total = kTotal);

struct FeatureOptions {
  double time_bandwidth = 4.0;
  std::size_t tapers = 7;
  Band theta = kTheta;
  Band alpha = kAlpha;
  Band total = kTotal;
};

// "<channel>.<open|close>.<theta|alpha>", lower-case channel.
std::string feature_name(const std::string& channel, Condition c, const std::string& band);

struct BandFeatureRow {
  std::string subject_id;
  std::vector<std::string> names;
  std::vector<double> values;
};

// Pools kept epochs per condition, averages the PSD over epochs and takes relative
// theta and alpha power per channel. Column order: channel, then condition, then band.
BandFeatureRow extract_features(const std::vector<EpochSet>& epoch_sets,
                                const std::vector<std::string>& channels,
                                const FeatureOptions& options = {});

}  // namespace eegpolicy
