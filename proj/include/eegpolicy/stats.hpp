#pragma once

#include <span>
#include <vector>

namespace eegpolicy::stats {

inline constexpr double kMadToSigma = 1.4826;

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // population (divides by n)
double median(std::vector<double> x);
// Median absolute deviation, unscaled.
double mad(std::span<const double> x);
double pearson(std::span<const double> a, std::span<const double> b);
double rms(std::span<const double> x);

// Robust z-scores: (x - median) / (1.4826 * MAD). Zero MAD yields zeros.
std::vector<double> robust_z(std::span<const double> x);

double normal_cdf(double z);
double normal_upper_tail(double z);
double student_t_upper_tail(double t, double dof);

}  // namespace eegpolicy::stats
