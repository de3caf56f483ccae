#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eegpolicy/eeg_io.hpp"

namespace eegpolicy {

// Resample with a windowed-sinc anti-alias/interpolation kernel. Downsampling only.
Recording resample(const Recording& rec, double target_rate);

struct FilterSpec {
  double notch_hz = 60.0;
  double notch_half_width_hz = 2.0;
  double high_pass_hz = 1.0;
  double low_pass_hz = 50.0;
  // Transition width of the windowed-sinc kernels; 0 picks min(1 Hz, high_pass).
  double transition_hz = 0.0;
};

// Linear-phase FIR kernel (odd length, centered) combining band-pass and notch.
std::vector<double> design_fir(const FilterSpec& spec, double sample_rate);
Recording apply_filters(const Recording& rec, const FilterSpec& spec);
Recording apply_filters(const Recording& rec, double notch, double high_pass, double low_pass);

struct BadChannelCriteria {
  double deviation_z = 5.0;
  double min_correlation = 0.4;
  double predictability_correlation = 0.75;
  double noisiness_z = 5.0;
  double correlation_window_s = 1.0;
  double noisiness_split_hz = 40.0;
  std::size_t ransac_trials = 50;
  double ransac_fraction = 0.25;
  std::uint64_t seed = 435656;
};

enum class BadCriterion { deviation, correlation, predictability, noisiness };
const char* to_string(BadCriterion c) noexcept;

struct ChannelScores {
  double deviation_z = 0.0;
  double min_window_correlation = 1.0;
  // NaN when positions are unavailable.
  double predictability = 1.0;
  double noisiness_z = 0.0;
};

struct BadChannelReport {
  std::map<std::string, ChannelScores> scores;
  std::set<std::string> flagged;
  std::map<std::string, std::vector<BadCriterion>> reasons;
  bool predictability_evaluated = false;
};

BadChannelReport detect_bad_channels(const Recording& rec, const BadChannelCriteria& cfg = {});

// Spherical-spline interpolation weights (n_targets x n_sources) from unit positions.
Eigen::MatrixXd spherical_spline_matrix(const std::vector<std::array<double, 3>>& sources,
                                        const std::vector<std::array<double, 3>>& targets);

Recording interpolate_bad_channels(const Recording& rec, const BadChannelReport& report);
Recording interpolate_channels(const Recording& rec, const std::set<std::string>& bad);

struct EpochSet {
  std::vector<std::string> channel_names;
  double sample_rate = 0.0;
  Condition condition = Condition::eyes_open;
  int block_index = 0;
  std::string subject_id;
  std::vector<SignalMatrix> epochs;
  std::vector<bool> keep_mask;
  // Learned peak-to-peak thresholds (microvolts), keyed by channel; empty before rejection.
  std::map<std::string, double> per_channel_thresholds;

  std::size_t size() const { return epochs.size(); }
  std::size_t kept() const;
  std::size_t samples_per_epoch() const { return epochs.empty() ? 0 : epochs.front().cols(); }
  void validate() const;
};

EpochSet segment_epochs(const Recording& rec, double length_s);

struct RejectionOptions {
  std::size_t folds = 10;
  // Empty: 30 log-spaced values over the observed peak-to-peak range.
  std::vector<double> threshold_grid;
  // Epoch is dropped when more than this fraction of channels exceed their threshold.
  double bad_channel_fraction = 0.10;
  std::uint64_t seed = 97;
};

struct RejectionReport {
  // Grid points skipped for a channel because a training fold had no surviving epochs.
  std::map<std::string, std::vector<double>> skipped_thresholds;
  std::map<std::string, std::vector<double>> cv_error;  // per channel, per grid point (NaN if skipped)
  std::size_t rejected = 0;
};

EpochSet reject_epochs(const EpochSet& es, const RejectionOptions& options,
                       RejectionReport* report = nullptr);
EpochSet reject_epochs(const EpochSet& es, std::size_t folds, const std::vector<double>& grid);

EpochSet rereference_common_average(const EpochSet& es);
Recording rereference_common_average(const Recording& rec);

Recording select_common_channels(const Recording& rec, const std::vector<std::string>& wanted);
EpochSet select_common_channels(const EpochSet& es, const std::vector<std::string>& wanted);

void save_epochs(const EpochSet& es, const std::filesystem::path& header_path);
EpochSet load_epochs(const std::filesystem::path& header_path);

struct SiteConfig {
  double target_rate = 250.0;
  FilterSpec filters;
  BadChannelCriteria criteria;
  double epoch_length_s = 2.0;
  RejectionOptions rejection;
  std::vector<std::string> channels = common_channels_54();
};

SiteConfig default_site_config();
SiteConfig site_config_from_json(const std::string& json_text);

struct QcReport {
  std::string subject_id;
  int block_index = 0;
  Condition condition = Condition::eyes_open;
  BadChannelReport bad_channels;
  std::map<std::string, double> thresholds;
  std::size_t epochs_total = 0;
  std::size_t epochs_rejected = 0;
  double rms_before = 0.0;
  double rms_after = 0.0;
  double bad_epoch_fraction_rule = 0.10;
};

// Full chain: resample, filter, detect + interpolate, epoch, reject, re-reference,
// select common channels.
EpochSet preprocess_recording(const Recording& rec, const SiteConfig& cfg, QcReport* qc = nullptr);
std::string qc_to_json(const QcReport& qc);

}  // namespace eegpolicy
