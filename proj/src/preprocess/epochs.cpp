#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/preprocess.hpp"
#include "eegpolicy/random.hpp"
#include "eegpolicy/stats.hpp"
#include "json.hpp"

namespace eegpolicy {

using json = nlohmann::json;

std::size_t EpochSet::kept() const {
  return static_cast<std::size_t>(std::count(keep_mask.begin(), keep_mask.end(), true));
}

void EpochSet::validate() const {
  if (keep_mask.size() != epochs.size())
    throw Error(Errc::length_mismatch, "keep_mask", "length differs from epoch count");
  for (const auto& e : epochs) {
    if (e.rows() != static_cast<Eigen::Index>(channel_names.size()))
      throw Error(Errc::length_mismatch, "epochs", "channel count differs from channel_names");
    if (e.cols() != epochs.front().cols())
      throw Error(Errc::length_mismatch, "epochs", "epochs differ in length");
  }
}

EpochSet segment_epochs(const Recording& rec, double length_s) {
  if (!(length_s > 0.0)) throw Error(Errc::domain, "length_s", "must be positive");
  const double exact = length_s * rec.sample_rate;
  const auto len = static_cast<long long>(std::llround(exact));
  if (len <= 0 || std::abs(exact - static_cast<double>(len)) > 1e-9)
    throw Error(Errc::domain, "length_s", "epoch length is not a whole number of samples");
  const auto n = static_cast<long long>(rec.num_samples());
  if (n < len) throw Error(Errc::invalid_argument, "length_s", "recording is shorter than one epoch");

  EpochSet es;
  es.channel_names = rec.channel_names();
  es.sample_rate = rec.sample_rate;
  es.condition = rec.condition;
  es.block_index = rec.block_index;
  es.subject_id = rec.subject_id;
  for (long long start = 0; start + len <= n; start += len)
    es.epochs.emplace_back(rec.data.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)));
  es.keep_mask.assign(es.epochs.size(), true);
  return es;
}

namespace {

double peak_to_peak(const SignalMatrix& e, Eigen::Index c) {
  return e.row(c).maxCoeff() - e.row(c).minCoeff();
}

// 30 log-spaced thresholds spanning the observed peak-to-peak range.
std::vector<double> data_driven_grid(const EpochSet& es) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& e : es.epochs)
    for (Eigen::Index c = 0; c < e.rows(); ++c) {
      const double p = peak_to_peak(e, c);
      if (p > 0.0) lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  if (!(hi > 0.0)) return {1.0};
  const std::size_t n = 30;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  grid.back() = hi;
  return grid;
}

}  // namespace

EpochSet reject_epochs(const EpochSet& es, const RejectionOptions& options, RejectionReport* report) {
  es.validate();
  const std::size_t ne = es.size();
  const std::size_t nc = es.channel_names.size();
  const std::size_t k = options.folds;
  if (k < 2) throw Error(Errc::invalid_argument, "folds", "need at least 2 folds");
  if (ne < 2 * k) throw Error(Errc::invalid_argument, "folds", "need at least 2 epochs per fold");
  const auto grid = options.threshold_grid.empty() ? data_driven_grid(es) : options.threshold_grid;
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw Error(Errc::invalid_argument, "threshold_grid", "grid must be sorted ascending");

  // Contiguous folds over a seeded shuffle.
  Rng rng = make_rng(options.seed, 0);
  const auto perm = random_permutation(ne, rng);
  std::vector<std::size_t> fold_of(ne);
  for (std::size_t i = 0; i < ne; ++i) fold_of[perm[i]] = i * k / ne;

  const auto len = static_cast<Eigen::Index>(es.samples_per_epoch());
  std::vector<double> thresholds(nc, 0.0);
  std::vector<std::vector<double>> cv_error(nc, std::vector<double>(grid.size()));
  std::vector<std::vector<double>> skipped(nc);
  std::vector<std::string> failures(nc);

  parallel_for(nc, [&](std::size_t c) {
    const auto ch = static_cast<Eigen::Index>(c);
    std::vector<double> ptp(ne);
    for (std::size_t e = 0; e < ne; ++e) ptp[e] = peak_to_peak(es.epochs[e], ch);

    // Pointwise median of each validation fold does not depend on the threshold.
    std::vector<Eigen::VectorXd> val_median(k, Eigen::VectorXd(len));
    std::vector<double> buf;
    for (std::size_t f = 0; f < k; ++f) {
      for (Eigen::Index s = 0; s < len; ++s) {
        buf.clear();
        for (std::size_t e = 0; e < ne; ++e)
          if (fold_of[e] == f) buf.push_back(es.epochs[e](ch, s));
        val_median[f](s) = stats::median(buf);
      }
    }

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = grid.size();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double total = 0.0;
      bool ok = true;
      for (std::size_t f = 0; f < k && ok; ++f) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(len);
        std::size_t count = 0;
        for (std::size_t e = 0; e < ne; ++e) {
          if (fold_of[e] == f || ptp[e] > grid[g]) continue;
          sum += es.epochs[e].row(ch).transpose();
          ++count;
        }
        if (count == 0) {
          ok = false;
          break;
        }
        const Eigen::VectorXd diff = sum / static_cast<double>(count) - val_median[f];
        total += std::sqrt(diff.squaredNorm() / static_cast<double>(len));
      }
      if (!ok) {
        cv_error[c][g] = std::numeric_limits<double>::quiet_NaN();
        skipped[c].push_back(grid[g]);
        continue;
      }
      cv_error[c][g] = total / static_cast<double>(k);
      // <= keeps the largest threshold among exact ties
      if (cv_error[c][g] <= best) {
        best = cv_error[c][g];
        best_index = g;
      }
    }
    if (best_index == grid.size())
      failures[c] = "no threshold leaves surviving epochs in every training fold";
    else
      thresholds[c] = grid[best_index];
  });
  for (std::size_t c = 0; c < nc; ++c)
    if (!failures[c].empty()) throw Error(Errc::degenerate, es.channel_names[c], failures[c]);

  EpochSet out = es;
  std::size_t rejected = 0;
  for (std::size_t e = 0; e < ne; ++e) {
    std::size_t exceed = 0;
    for (std::size_t c = 0; c < nc; ++c)
      if (peak_to_peak(es.epochs[e], static_cast<Eigen::Index>(c)) > thresholds[c]) ++exceed;
    const bool bad = static_cast<double>(exceed) > options.bad_channel_fraction * static_cast<double>(nc);
    if (bad) {
      out.keep_mask[e] = false;
      ++rejected;
    }
  }
  out.per_channel_thresholds.clear();
  for (std::size_t c = 0; c < nc; ++c) out.per_channel_thresholds[es.channel_names[c]] = thresholds[c];
  if (report) {
    report->rejected = rejected;
    for (std::size_t c = 0; c < nc; ++c) {
      report->cv_error[es.channel_names[c]] = cv_error[c];
      if (!skipped[c].empty()) report->skipped_thresholds[es.channel_names[c]] = skipped[c];
    }
  }
  return out;
}

EpochSet reject_epochs(const EpochSet& es, std::size_t folds, const std::vector<double>& grid) {
  RejectionOptions opts;
  opts.folds = folds;
  opts.threshold_grid = grid;
  return reject_epochs(es, opts);
}

EpochSet rereference_common_average(const EpochSet& es) {
  if (es.channel_names.size() < 2) throw Error(Errc::invalid_argument, "channels", "need at least 2 channels");
  EpochSet out = es;
  for (auto& e : out.epochs) {
    const Eigen::RowVectorXd mu = e.colwise().mean();
    e.rowwise() -= mu;
  }
  return out;
}

Recording rereference_common_average(const Recording& rec) {
  if (rec.num_channels() < 2) throw Error(Errc::invalid_argument, "channels", "need at least 2 channels");
  Recording out = rec;
  const Eigen::RowVectorXd mu = out.data.colwise().mean();
  out.data.rowwise() -= mu;
  return out;
}

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::vector<Eigen::Index> resolve_channels(const std::vector<std::string>& have,
                                           const std::vector<std::string>& wanted) {
  std::vector<Eigen::Index> rows;
  for (const auto& w : wanted) {
    Eigen::Index found = -1;
    for (std::size_t i = 0; i < have.size(); ++i)
      if (have[i] == w) found = static_cast<Eigen::Index>(i);
    if (found < 0)
      for (std::size_t i = 0; i < have.size(); ++i)
        if (lower(have[i]) == lower(w)) found = static_cast<Eigen::Index>(i);
    if (found < 0) throw Error(Errc::not_found, w, "channel not present");
    rows.push_back(found);
  }
  return rows;
}

}  // namespace

Recording select_common_channels(const Recording& rec, const std::vector<std::string>& wanted) {
  const auto rows = resolve_channels(rec.channel_names(), wanted);
  Recording out = rec;
  out.channels.clear();
  out.data.resize(static_cast<Eigen::Index>(rows.size()), rec.data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.channels.push_back(rec.channels[static_cast<std::size_t>(rows[i])]);
    out.channels.back().name = wanted[i];
    out.data.row(static_cast<Eigen::Index>(i)) = rec.data.row(rows[i]);
  }
  return out;
}

EpochSet select_common_channels(const EpochSet& es, const std::vector<std::string>& wanted) {
  const auto rows = resolve_channels(es.channel_names, wanted);
  EpochSet out = es;
  out.channel_names = wanted;
  for (std::size_t e = 0; e < es.epochs.size(); ++e) {
    SignalMatrix m(static_cast<Eigen::Index>(rows.size()), es.epochs[e].cols());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = es.epochs[e].row(rows[i]);
    out.epochs[e] = std::move(m);
  }
  std::map<std::string, double> th;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = es.per_channel_thresholds.find(es.channel_names[static_cast<std::size_t>(rows[i])]);
    if (it != es.per_channel_thresholds.end()) th[wanted[i]] = it->second;
  }
  out.per_channel_thresholds = th;
  return out;
}

// Epoch files: <stem>.json header + <stem>.bin with float64 little-endian values,
// epoch-major then channel-major.
void save_epochs(const EpochSet& es, const std::filesystem::path& header_path) {
  es.validate();
  auto bin_path = header_path;
  bin_path.replace_extension(".bin");
  json h;
  h["channel_names"] = es.channel_names;
  h["sample_rate_hz"] = es.sample_rate;
  h["condition"] = to_string(es.condition);
  h["block_index"] = es.block_index;
  h["subject_id"] = es.subject_id;
  h["n_epochs"] = es.size();
  h["samples_per_epoch"] = es.samples_per_epoch();
  h["keep_mask"] = es.keep_mask;
  h["per_channel_thresholds"] = es.per_channel_thresholds;
  h["data_file"] = bin_path.filename().string();
  std::ofstream hout(header_path);
  if (!hout) throw Error(Errc::io, header_path.string(), "cannot write");
  hout << h.dump(2) << "\n";

  std::ofstream bout(bin_path, std::ios::binary);
  if (!bout) throw Error(Errc::io, bin_path.string(), "cannot write");
  std::vector<char> buf;
  for (const auto& e : es.epochs) {
    buf.resize(static_cast<std::size_t>(e.size()) * 8);
    std::size_t p = 0;
    for (Eigen::Index r = 0; r < e.rows(); ++r)
      for (Eigen::Index s = 0; s < e.cols(); ++s) {
        std::uint64_t bits;
        const double v = e(r, s);
        std::memcpy(&bits, &v, 8);
        for (int b = 0; b < 8; ++b) buf[p++] = static_cast<char>((bits >> (8 * b)) & 0xFF);
      }
    bout.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
}

EpochSet load_epochs(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw Error(Errc::io, header_path.string(), "cannot open header");
  json h;
  try {
    in >> h;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, "header", e.what());
  }
  EpochSet es;
  std::size_t ne = 0, len = 0;
  try {
    es.channel_names = h.at("channel_names").get<std::vector<std::string>>();
    es.sample_rate = h.at("sample_rate_hz").get<double>();
    es.condition = condition_from_string(h.at("condition").get<std::string>());
    es.block_index = h.value("block_index", 0);
    es.subject_id = h.value("subject_id", "");
    ne = h.at("n_epochs").get<std::size_t>();
    len = h.at("samples_per_epoch").get<std::size_t>();
    es.keep_mask = h.at("keep_mask").get<std::vector<bool>>();
    if (h.contains("per_channel_thresholds"))
      es.per_channel_thresholds = h["per_channel_thresholds"].get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, "header", e.what());
  }
  const auto bin_path = header_path.parent_path() / h.value("data_file", header_path.stem().string() + ".bin");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(Errc::io, bin_path.string(), "cannot open data file");
  const std::size_t nc = es.channel_names.size();
  std::vector<char> buf(nc * len * 8);
  for (std::size_t e = 0; e < ne; ++e) {
    bin.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (bin.gcount() != static_cast<std::streamsize>(buf.size()))
      throw Error(Errc::length_mismatch, bin_path.string(), "data file shorter than header declares");
    SignalMatrix m(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(len));
    std::size_t p = 0;
    for (std::size_t r = 0; r < nc; ++r)
      for (std::size_t s = 0; s < len; ++s) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[p++])) << (8 * b);
        double v;
        std::memcpy(&v, &bits, 8);
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = v;
      }
    es.epochs.push_back(std::move(m));
  }
  es.validate();
  return es;
}

}  // namespace eegpolicy
