#include <algorithm>
#include <cctype>

#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/spectral.hpp"

namespace eegpolicy {

namespace {
std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}
}  // namespace

std::string feature_name(const std::string& channel, Condition c, const std::string& band) {
  return lower(channel) + "." + short_name(c) + "." + band;
}

BandFeatureRow extract_features(const std::vector<EpochSet>& sets, const std::vector<std::string>& channels,
                                const FeatureOptions& options) {
  if (sets.empty()) throw Error(Errc::invalid_argument, "epoch_sets", "no epoch sets");
  BandFeatureRow row;
  row.subject_id = sets.front().subject_id;
  const std::size_t len = sets.front().samples_per_epoch();
  const double fs = sets.front().sample_rate;
  for (const auto& s : sets) {
    s.validate();
    if (s.samples_per_epoch() != len && s.size() > 0)
      throw Error(Errc::length_mismatch, "epochs", "epoch sets differ in epoch length");
    if (s.sample_rate != fs) throw Error(Errc::length_mismatch, "sample_rate", "epoch sets differ in rate");
  }
  const TaperSet tapers = dpss_tapers(len, options.time_bandwidth, options.tapers);

  const Condition conditions[2] = {Condition::eyes_open, Condition::eyes_closed};
  // (set, row) pairs of surviving epochs per condition
  std::vector<std::pair<std::size_t, std::size_t>> pool[2];
  for (int ci = 0; ci < 2; ++ci) {
    for (std::size_t s = 0; s < sets.size(); ++s)
      if (sets[s].condition == conditions[ci])
        for (std::size_t e = 0; e < sets[s].size(); ++e)
          if (sets[s].keep_mask[e]) pool[ci].emplace_back(s, e);
    if (pool[ci].empty())
      throw Error(Errc::degenerate, to_string(conditions[ci]), "no surviving epochs for condition");
  }

  // channel row index per set, case-insensitive
  std::vector<std::vector<Eigen::Index>> rows(sets.size(), std::vector<Eigen::Index>(channels.size(), -1));
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (std::size_t c = 0; c < channels.size(); ++c) {
      for (std::size_t i = 0; i < sets[s].channel_names.size(); ++i)
        if (lower(sets[s].channel_names[i]) == lower(channels[c])) rows[s][c] = static_cast<Eigen::Index>(i);
      if (rows[s][c] < 0 && !sets[s].epochs.empty()) throw Error(Errc::not_found, channels[c], "channel missing from epochs");
    }

  const std::size_t nc = channels.size();
  std::vector<double> values(nc * 4);
  parallel_for(nc * 2, [&](std::size_t job) {
    const std::size_t c = job / 2;
    const int ci = static_cast<int>(job % 2);
    Spectrum avg;
    for (const auto& [s, e] : pool[ci]) {
      const auto& m = sets[s].epochs[e];
      const auto r = rows[s][c];
      Spectrum sp = multitaper_psd({m.row(r).data(), len}, tapers, fs);
      if (avg.psd.empty()) {
        avg = std::move(sp);
      } else {
        for (std::size_t b = 0; b < avg.psd.size(); ++b) avg.psd[b] += sp.psd[b];
      }
    }
    for (double& p : avg.psd) p /= static_cast<double>(pool[ci].size());
    avg.channel = channels[c];
    values[c * 4 + static_cast<std::size_t>(ci) * 2 + 0] = relative_band_power(avg, options.theta, options.total);
    values[c * 4 + static_cast<std::size_t>(ci) * 2 + 1] = relative_band_power(avg, options.alpha, options.total);
  });

  for (std::size_t c = 0; c < nc; ++c)
    for (int ci = 0; ci < 2; ++ci) {
      row.names.push_back(feature_name(channels[c], conditions[ci], "theta"));
      row.names.push_back(feature_name(channels[c], conditions[ci], "alpha"));
    }
  row.values = std::move(values);
  return row;
}

}  // namespace eegpolicy
