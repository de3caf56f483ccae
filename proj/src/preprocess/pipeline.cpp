#include <algorithm>
#include <cmath>

#include "eegpolicy/error.hpp"
#include "eegpolicy/preprocess.hpp"
#include "eegpolicy/stats.hpp"
#include "json.hpp"

namespace eegpolicy {

using json = nlohmann::json;

SiteConfig default_site_config() { return SiteConfig{}; }

SiteConfig site_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, "site_config", e.what());
  }
  if (!j.is_object()) throw Error(Errc::parse, "site_config", "not a JSON object");
  SiteConfig cfg;
  try {
    cfg.target_rate = j.value("target_rate_hz", cfg.target_rate);
    cfg.epoch_length_s = j.value("epoch_length_s", cfg.epoch_length_s);
    if (j.contains("filters")) {
      const auto& f = j["filters"];
      cfg.filters.notch_hz = f.value("notch_hz", cfg.filters.notch_hz);
      cfg.filters.notch_half_width_hz = f.value("notch_half_width_hz", cfg.filters.notch_half_width_hz);
      cfg.filters.high_pass_hz = f.value("high_pass_hz", cfg.filters.high_pass_hz);
      cfg.filters.low_pass_hz = f.value("low_pass_hz", cfg.filters.low_pass_hz);
      cfg.filters.transition_hz = f.value("transition_hz", cfg.filters.transition_hz);
    }
    if (j.contains("bad_channels")) {
      const auto& b = j["bad_channels"];
      auto& c = cfg.criteria;
      c.deviation_z = b.value("deviation_z", c.deviation_z);
      c.min_correlation = b.value("min_correlation", c.min_correlation);
      c.predictability_correlation = b.value("predictability_correlation", c.predictability_correlation);
      c.noisiness_z = b.value("noisiness_z", c.noisiness_z);
      c.correlation_window_s = b.value("correlation_window_s", c.correlation_window_s);
      c.noisiness_split_hz = b.value("noisiness_split_hz", c.noisiness_split_hz);
      c.ransac_trials = b.value("ransac_trials", c.ransac_trials);
      c.ransac_fraction = b.value("ransac_fraction", c.ransac_fraction);
      c.seed = b.value("seed", c.seed);
    }
    if (j.contains("rejection")) {
      const auto& r = j["rejection"];
      cfg.rejection.folds = r.value("folds", cfg.rejection.folds);
      cfg.rejection.threshold_grid = r.value("threshold_grid", cfg.rejection.threshold_grid);
      cfg.rejection.bad_channel_fraction = r.value("bad_channel_fraction", cfg.rejection.bad_channel_fraction);
      cfg.rejection.seed = r.value("seed", cfg.rejection.seed);
    }
    if (j.contains("channels")) cfg.channels = j["channels"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse, "site_config", e.what());
  }
  if (!(cfg.target_rate > 0.0)) throw Error(Errc::domain, "target_rate_hz", "must be positive");
  return cfg;
}

namespace {

double signal_rms(const SignalMatrix& m) {
  return m.size() == 0 ? 0.0 : std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

}  // namespace

EpochSet preprocess_recording(const Recording& input, const SiteConfig& cfg, QcReport* qc) {
  input.validate();
  Recording rec = input;
  bool missing_positions = false;
  for (const auto& c : rec.channels)
    if (!c.position) missing_positions = true;
  if (missing_positions) apply_montage(rec, standard_1010_montage());

  QcReport report;
  report.subject_id = rec.subject_id;
  report.block_index = rec.block_index;
  report.condition = rec.condition;
  report.bad_epoch_fraction_rule = cfg.rejection.bad_channel_fraction;
  report.rms_before = signal_rms(rec.data);

  rec = resample(rec, cfg.target_rate);
  rec = apply_filters(rec, cfg.filters);

  report.bad_channels = detect_bad_channels(rec, cfg.criteria);
  if (!report.bad_channels.flagged.empty()) {
    bool positioned = true;
    for (const auto& c : rec.channels)
      if (!c.position) positioned = false;
    if (!positioned)
      throw Error(Errc::invalid_argument, "positions", "bad channels found but some channels lack positions");
    rec = interpolate_bad_channels(rec, report.bad_channels);
  }

  EpochSet es = segment_epochs(rec, cfg.epoch_length_s);
  report.epochs_total = es.size();
  if (es.size() >= 4) {
    RejectionOptions opts = cfg.rejection;
    opts.folds = std::max<std::size_t>(2, std::min(opts.folds, es.size() / 2));
    RejectionReport rr;
    es = reject_epochs(es, opts, &rr);
    report.epochs_rejected = rr.rejected;
    report.thresholds = es.per_channel_thresholds;
  }
  es = rereference_common_average(es);
  es = select_common_channels(es, cfg.channels);

  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t e = 0; e < es.size(); ++e)
    if (es.keep_mask[e]) {
      ss += es.epochs[e].squaredNorm();
      count += static_cast<std::size_t>(es.epochs[e].size());
    }
  report.rms_after = count ? std::sqrt(ss / static_cast<double>(count)) : 0.0;
  if (qc) *qc = report;
  return es;
}

std::string qc_to_json(const QcReport& qc) {
  json j;
  j["subject_id"] = qc.subject_id;
  j["block_index"] = qc.block_index;
  j["condition"] = to_string(qc.condition);
  j["flagged_channels"] = std::vector<std::string>(qc.bad_channels.flagged.begin(), qc.bad_channels.flagged.end());
  json reasons = json::object();
  for (const auto& [name, list] : qc.bad_channels.reasons) {
    json arr = json::array();
    for (auto r : list) arr.push_back(to_string(r));
    reasons[name] = arr;
  }
  j["flag_reasons"] = reasons;
  json scores = json::object();
  for (const auto& [name, s] : qc.bad_channels.scores) {
    json o;
    o["deviation_z"] = std::isfinite(s.deviation_z) ? json(s.deviation_z) : json(nullptr);
    o["min_window_correlation"] = s.min_window_correlation;
    o["predictability"] = std::isfinite(s.predictability) ? json(s.predictability) : json(nullptr);
    o["noisiness_z"] = s.noisiness_z;
    scores[name] = o;
  }
  j["channel_scores"] = scores;
  j["predictability_evaluated"] = qc.bad_channels.predictability_evaluated;
  j["thresholds_uv"] = qc.thresholds;
  j["epochs_total"] = qc.epochs_total;
  j["epochs_rejected"] = qc.epochs_rejected;
  j["bad_epoch_channel_fraction"] = qc.bad_epoch_fraction_rule;
  j["rms_before_uv"] = qc.rms_before;
  j["rms_after_uv"] = qc.rms_after;
  return j.dump(2);
}

}  // namespace eegpolicy
