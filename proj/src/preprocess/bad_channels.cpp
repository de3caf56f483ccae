#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/preprocess.hpp"
#include "eegpolicy/random.hpp"
#include "eegpolicy/stats.hpp"
#include "internal/fft.hpp"

namespace eegpolicy {

const char* to_string(BadCriterion c) noexcept {
  switch (c) {
    case BadCriterion::deviation: return "deviation";
    case BadCriterion::correlation: return "correlation";
    case BadCriterion::predictability: return "predictability";
    case BadCriterion::noisiness: return "noisiness";
  }
  return "unknown";
}

namespace {

constexpr int kSplineOrder = 4;
constexpr int kLegendreTerms = 50;

double spline_g(double cosang) {
  cosang = std::clamp(cosang, -1.0, 1.0);
  // Legendre recurrence
  double p_prev = 1.0, p = cosang, g = 0.0;
  for (int n = 1; n <= kLegendreTerms; ++n) {
    const double dn = n;
    g += (2.0 * dn + 1.0) / std::pow(dn * (dn + 1.0), kSplineOrder) * p;
    const double next = ((2.0 * dn + 1.0) * cosang * p - dn * p_prev) / (dn + 1.0);
    p_prev = p;
    p = next;
  }
  return g / (4.0 * M_PI);
}

double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Robust z with a mean-absolute-deviation fallback so a single outlier among
// identical values still stands out.
std::vector<double> robust_z_with_fallback(const std::vector<double>& x) {
  const double med = stats::median(x);
  double scale = stats::kMadToSigma * stats::mad(x);
  if (!(scale > 0.0)) {
    double s = 0.0;
    for (double v : x) s += std::abs(v - med);
    scale = 1.2533 * s / static_cast<double>(x.size());
  }
  std::vector<double> z(x.size(), 0.0);
  if (!(scale > 0.0)) return z;
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - med) / scale;
  return z;
}

std::span<const double> row_span(const SignalMatrix& m, Eigen::Index r) {
  return {m.row(r).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

Eigen::MatrixXd spherical_spline_matrix(const std::vector<std::array<double, 3>>& sources,
                                        const std::vector<std::array<double, 3>>& targets) {
  const auto ns = static_cast<Eigen::Index>(sources.size());
  const auto nt = static_cast<Eigen::Index>(targets.size());
  if (ns == 0) throw Error(Errc::invalid_argument, "sources", "no source positions");
  Eigen::MatrixXd A(ns + 1, ns + 1);
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (Eigen::Index j = 0; j < ns; ++j) A(i, j) = spline_g(dot3(sources[i], sources[j]));
    A(i, ns) = 1.0;
    A(ns, i) = 1.0;
  }
  A(ns, ns) = 0.0;
  Eigen::MatrixXd B(nt, ns + 1);
  for (Eigen::Index t = 0; t < nt; ++t) {
    for (Eigen::Index j = 0; j < ns; ++j) B(t, j) = spline_g(dot3(targets[t], sources[j]));
    B(t, ns) = 1.0;
  }
  const Eigen::MatrixXd pinv = A.completeOrthogonalDecomposition().pseudoInverse();
  return (B * pinv).leftCols(ns);
}

BadChannelReport detect_bad_channels(const Recording& rec_in, const BadChannelCriteria& cfg) {
  rec_in.validate();
  const std::size_t nc = rec_in.num_channels();
  if (nc < 4) throw Error(Errc::invalid_argument, "channels", "need at least 4 channels");

  // Work in name order so the report does not depend on channel order.
  std::vector<std::size_t> order(nc);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rec_in.channels[a].name < rec_in.channels[b].name;
  });
  SignalMatrix data(nc, rec_in.data.cols());
  std::vector<std::string> names(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    data.row(static_cast<Eigen::Index>(i)) = rec_in.data.row(static_cast<Eigen::Index>(order[i]));
    names[i] = rec_in.channels[order[i]].name;
  }
  const auto ns = static_cast<std::size_t>(data.cols());

  BadChannelReport report;
  std::vector<ChannelScores> scores(nc);
  std::vector<std::vector<BadCriterion>> reasons(nc);

  // deviation
  std::vector<double> amplitude(nc);
  std::vector<bool> flat(nc, false);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto row = row_span(data, static_cast<Eigen::Index>(c));
    amplitude[c] = stats::kMadToSigma * stats::mad(row);
    const double sd = std::sqrt(stats::variance(row));
    flat[c] = !(sd > 1e-10) || !(amplitude[c] > 1e-12);
  }
  const auto dev_z = robust_z_with_fallback(amplitude);
  for (std::size_t c = 0; c < nc; ++c) {
    scores[c].deviation_z = flat[c] ? std::numeric_limits<double>::infinity() : dev_z[c];
    if (flat[c] || std::abs(dev_z[c]) > cfg.deviation_z) reasons[c].push_back(BadCriterion::deviation);
  }

  // correlation: max |r| with any other channel, minimized over windows
  const auto win = static_cast<std::size_t>(std::llround(cfg.correlation_window_s * rec_in.sample_rate));
  if (win >= 2 && ns >= win) {
    const std::size_t nwin = ns / win;
    std::vector<double> min_corr(nc, 1.0);
    for (std::size_t w = 0; w < nwin; ++w) {
      Eigen::MatrixXd block = data.middleCols(static_cast<Eigen::Index>(w * win), static_cast<Eigen::Index>(win));
      Eigen::VectorXd mu = block.rowwise().mean();
      block.colwise() -= mu;
      Eigen::VectorXd norm = block.rowwise().norm();
      const Eigen::MatrixXd cov = block * block.transpose();
      for (std::size_t a = 0; a < nc; ++a) {
        double best = 0.0;
        for (std::size_t b = 0; b < nc; ++b) {
          if (a == b) continue;
          const double d = norm(a) * norm(b);
          const double r = d > 0.0 ? std::abs(cov(a, b)) / d : 0.0;
          best = std::max(best, r);
        }
        min_corr[a] = std::min(min_corr[a], best);
      }
    }
    for (std::size_t c = 0; c < nc; ++c) {
      scores[c].min_window_correlation = min_corr[c];
      if (min_corr[c] < cfg.min_correlation) reasons[c].push_back(BadCriterion::correlation);
    }
  }

  // noisiness: power ratio above / below the split frequency
  if (rec_in.sample_rate / 2.0 > cfg.noisiness_split_hz && ns >= 8) {
    detail::RealFft fft(ns);
    std::vector<double> ratio(nc, 0.0);
    std::vector<std::complex<double>> spec;
    for (std::size_t c = 0; c < nc; ++c) {
      fft.forward(row_span(data, static_cast<Eigen::Index>(c)), spec);
      double hi = 0.0, lo = 0.0;
      for (std::size_t k = 1; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * rec_in.sample_rate / static_cast<double>(ns);
        (f > cfg.noisiness_split_hz ? hi : lo) += std::norm(spec[k]);
      }
      ratio[c] = lo > 0.0 ? hi / lo : 0.0;
    }
    const auto nz = robust_z_with_fallback(ratio);
    for (std::size_t c = 0; c < nc; ++c) {
      scores[c].noisiness_z = nz[c];
      if (!flat[c] && nz[c] > cfg.noisiness_z) reasons[c].push_back(BadCriterion::noisiness);
    }
  }

  // predictability (RANSAC over random subsets of the remaining good channels)
  bool have_positions = true;
  for (std::size_t c = 0; c < nc; ++c)
    if (!rec_in.channels[order[c]].position) have_positions = false;
  std::vector<std::size_t> pool;
  for (std::size_t c = 0; c < nc; ++c)
    if (reasons[c].empty()) pool.push_back(c);
  const auto subset_size = std::max<std::size_t>(
      3, static_cast<std::size_t>(std::llround(cfg.ransac_fraction * static_cast<double>(pool.size()))));
  if (have_positions && pool.size() >= subset_size + 1 && cfg.ransac_trials > 0) {
    report.predictability_evaluated = true;
    std::vector<std::array<double, 3>> pos(nc);
    for (std::size_t c = 0; c < nc; ++c) pos[c] = *rec_in.channels[order[c]].position;

    Rng rng = make_rng(cfg.seed, 0);
    std::vector<std::vector<std::size_t>> subsets(cfg.ransac_trials);
    std::vector<Eigen::MatrixXd> weights(cfg.ransac_trials);
    std::vector<std::vector<bool>> in_subset(cfg.ransac_trials, std::vector<bool>(nc, false));
    for (std::size_t t = 0; t < cfg.ransac_trials; ++t) {
      auto perm = random_permutation(pool.size(), rng);
      for (std::size_t k = 0; k < subset_size; ++k) subsets[t].push_back(pool[perm[k]]);
      std::sort(subsets[t].begin(), subsets[t].end());
      std::vector<std::array<double, 3>> src;
      for (auto s : subsets[t]) {
        src.push_back(pos[s]);
        in_subset[t][s] = true;
      }
      weights[t] = spherical_spline_matrix(src, pos);
    }
    // Per channel: median prediction over trials that did not use the channel itself.
    SignalMatrix predicted(nc, static_cast<Eigen::Index>(ns));
    const std::size_t chunk = 256;
    const std::size_t nchunks = (ns + chunk - 1) / chunk;
    parallel_for(nchunks, [&](std::size_t q) {
      const std::size_t begin = q * chunk;
      const std::size_t len = std::min(chunk, ns - begin);
      std::vector<Eigen::MatrixXd> preds(cfg.ransac_trials);
      for (std::size_t t = 0; t < cfg.ransac_trials; ++t) {
        Eigen::MatrixXd src(static_cast<Eigen::Index>(subsets[t].size()), static_cast<Eigen::Index>(len));
        for (std::size_t k = 0; k < subsets[t].size(); ++k)
          src.row(static_cast<Eigen::Index>(k)) =
              data.row(static_cast<Eigen::Index>(subsets[t][k])).segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len));
        preds[t] = weights[t] * src;
      }
      std::vector<double> vals;
      for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t s = 0; s < len; ++s) {
          vals.clear();
          for (std::size_t t = 0; t < cfg.ransac_trials; ++t)
            if (!in_subset[t][c]) vals.push_back(preds[t](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)));
          if (vals.empty())
            for (std::size_t t = 0; t < cfg.ransac_trials; ++t)
              vals.push_back(preds[t](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)));
          predicted(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(begin + s)) = stats::median(vals);
        }
      }
    });
    for (std::size_t c = 0; c < nc; ++c) {
      const double r = stats::pearson(row_span(data, static_cast<Eigen::Index>(c)),
                                      row_span(predicted, static_cast<Eigen::Index>(c)));
      scores[c].predictability = r;
      if (r < cfg.predictability_correlation) reasons[c].push_back(BadCriterion::predictability);
    }
  } else {
    for (auto& s : scores) s.predictability = std::numeric_limits<double>::quiet_NaN();
  }

  for (std::size_t c = 0; c < nc; ++c) {
    report.scores[names[c]] = scores[c];
    if (!reasons[c].empty()) {
      report.flagged.insert(names[c]);
      report.reasons[names[c]] = reasons[c];
    }
  }
  return report;
}

Recording interpolate_channels(const Recording& rec, const std::set<std::string>& bad) {
  if (bad.empty()) return rec;
  std::vector<std::array<double, 3>> src, dst;
  std::vector<Eigen::Index> src_rows, dst_rows;
  for (const auto& name : bad)
    if (rec.channel_index(name) < 0) throw Error(Errc::not_found, name, "flagged channel not in recording");
  for (std::size_t c = 0; c < rec.num_channels(); ++c) {
    const auto& ch = rec.channels[c];
    if (!ch.position) throw Error(Errc::invalid_argument, ch.name, "channel has no position");
    if (bad.count(ch.name)) {
      dst.push_back(*ch.position);
      dst_rows.push_back(static_cast<Eigen::Index>(c));
    } else {
      src.push_back(*ch.position);
      src_rows.push_back(static_cast<Eigen::Index>(c));
    }
  }
  if (src.empty()) throw Error(Errc::invalid_argument, "flagged", "every channel is flagged");
  const Eigen::MatrixXd w = spherical_spline_matrix(src, dst);
  Recording out = rec;
  for (std::size_t t = 0; t < dst_rows.size(); ++t) {
    auto row = out.data.row(dst_rows[t]);
    row.setZero();
    for (std::size_t s = 0; s < src_rows.size(); ++s)
      row += w(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) * rec.data.row(src_rows[s]);
  }
  return out;
}

Recording interpolate_bad_channels(const Recording& rec, const BadChannelReport& report) {
  return interpolate_channels(rec, report.flagged);
}

}  // namespace eegpolicy
