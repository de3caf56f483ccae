#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eegpolicy {

// channels x samples, row-major so that a channel is contiguous.
using SignalMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Condition { eyes_open, eyes_closed };

const char* to_string(Condition c) noexcept;
Condition condition_from_string(const std::string& s);
// "open" / "close", as used in feature names.
const char* short_name(Condition c) noexcept;

struct Channel {
  std::string name;
  // Unit-sphere coordinates (x right, y front, z up); absent until a montage is applied.
  std::optional<std::array<double, 3>> position;
};

struct Recording {
  std::vector<Channel> channels;
  double sample_rate = 0.0;
  SignalMatrix data;
  Condition condition = Condition::eyes_open;
  int block_index = 0;
  std::string subject_id;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return static_cast<std::size_t>(data.cols()); }
  std::vector<std::string> channel_names() const;
  // Row of the named channel, or -1.
  int channel_index(const std::string& name) const;

  // Throws Error on any broken invariant (shape, rate, unit-norm positions, names).
  void validate() const;
};

// Raw recordings live as <stem>.json (header) + <stem>.bin (float32 LE, channel-major).
// CSV input has a header row of channel names; sample rate and condition come from
// the arguments in that case.
Recording load_recording(const std::filesystem::path& path);
Recording load_recording_csv(const std::filesystem::path& path, double sample_rate,
                             Condition condition = Condition::eyes_open, int block_index = 0);
void save_recording(const Recording& rec, const std::filesystem::path& header_path);
void save_recording_csv(const Recording& rec, const std::filesystem::path& path);

// Standard 10-10 positions keyed by lower-cased channel name.
struct Montage {
  std::vector<std::string> names;
  std::vector<std::array<double, 3>> positions;

  std::optional<std::array<double, 3>> find(const std::string& channel) const;
};

Montage load_montage(const std::filesystem::path& path);
const Montage& standard_1010_montage();
// Geometric construction the bundled montage file was generated from.
Montage built_in_standard_1010();
std::filesystem::path default_data_dir();

// Fills positions for every channel present in the montage; returns the names
// that were not found.
std::vector<std::string> apply_montage(Recording& rec, const Montage& montage);

// The 54 channels shared by every acquisition site.
const std::vector<std::string>& common_channels_54();

enum class ColumnKind { continuous, categorical };

struct FeatureMatrix {
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd X;
  Eigen::VectorXd W;  // 0/1
  Eigen::VectorXd Y;
  std::vector<std::string> column_names;
  std::vector<ColumnKind> column_kinds;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
  int column_index(const std::string& name) const;
  void validate() const;
  FeatureMatrix subset(const std::vector<std::size_t>& rows) const;
};

struct FeatureTableOptions {
  // Defaults to <path>.schema.json when that file exists.
  std::optional<std::filesystem::path> schema_path;
  // Rows with empty / NA cells are dropped and counted; otherwise they are an error.
  bool drop_incomplete_rows = true;
};

struct FeatureTable {
  FeatureMatrix matrix;
  std::size_t dropped_rows = 0;
};

FeatureTable load_feature_table(const std::filesystem::path& path,
                                const FeatureTableOptions& options = {});
void save_feature_table(const FeatureMatrix& fm, const std::filesystem::path& path);

// subject_id plus named numeric columns, no W/Y (EEG feature export).
struct CovariateTable {
  std::vector<std::string> subject_ids;
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;
};
void save_covariate_table(const CovariateTable& t, const std::filesystem::path& path);
CovariateTable load_covariate_table(const std::filesystem::path& path);

}  // namespace eegpolicy
