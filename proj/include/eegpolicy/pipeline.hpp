#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/forest.hpp"
#include "eegpolicy/preprocess.hpp"

namespace eegpolicy {

// Minority-outcome rows are drawn with replacement until both classes have equal counts.
FeatureMatrix upsample_minority(const FeatureMatrix& fm, std::uint64_t seed);

struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
// Seeded shuffle; round(fraction * n) rows go to training.
TrainTestSplit train_test_split(std::size_t n, double train_fraction, std::uint64_t seed);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Preprocess every recording in a directory; writes <stem>.json/.bin epochs and
// <stem>.qc.json. Returns the written epoch headers.
std::vector<std::filesystem::path> preprocess_directory(const std::filesystem::path& in_dir,
                                                        const std::filesystem::path& out_dir,
                                                        const SiteConfig& cfg);
// Groups epoch files by subject and writes one row of 216 relative band powers each.
CovariateTable eeg_features_from_directory(const std::filesystem::path& epoch_dir,
                                           const std::vector<std::string>& channels);
// Joins EEG features with a clinical table (subject_id, W, Y, ...) into a feature CSV.
// Returns the number of clinical subjects without EEG features.
std::size_t join_features(const CovariateTable& eeg, const std::filesystem::path& clinical_csv,
                          const std::filesystem::path& out_csv);

struct PipelineConfig {
  bool preprocess = true;
  bool features = true;
  bool forest = true;
  bool scores = true;
  bool policy = true;
  bool value = true;
  bool simulate = false;

  std::filesystem::path raw_dir;
  std::filesystem::path site_config;  // optional
  std::filesystem::path clinical_csv;
  std::filesystem::path features_csv;  // used when the EEG stages are off
  std::filesystem::path out_dir = "eegpolicy_out";

  double train_fraction = 0.7;
  bool upsample = true;
  std::uint64_t seed = 42;
  ForestParams forest_params;
  std::size_t nuisance_folds = 10;

  // simulate stage
  std::filesystem::path spec_path;  // empty: built-in default spec
  std::string effect = "strong";
  std::vector<std::size_t> train_sizes{200, 500};
  std::size_t replicates = 20;
  std::size_t n_test = 10000;
  std::size_t sim_trees = 500;

  void validate() const;
};

PipelineConfig pipeline_config_from_json(const std::string& text);

struct StageRecord {
  std::string name;
  std::string status;  // ran, cached, skipped, failed
  double seconds = 0.0;
  std::string note;
};

struct RunReport {
  std::vector<StageRecord> stages;
  std::filesystem::path manifest;
  bool ok = true;
  std::string failed_stage;
  std::string error;
};

// Runs the enabled stages in order, reusing outputs whose recorded input hashes
// still match. The manifest is written after every stage.
RunReport run_pipeline(const PipelineConfig& cfg);

// Command-line entry point: 0 success, 1 validation error, 2 stage failure.
int run_cli(int argc, char** argv);

}  // namespace eegpolicy
