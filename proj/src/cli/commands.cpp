#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "eegpolicy/csv.hpp"
#include "eegpolicy/effects.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/pipeline.hpp"
#include "eegpolicy/random.hpp"
#include "eegpolicy/policy.hpp"
#include "eegpolicy/serialize.hpp"
#include "eegpolicy/sim.hpp"
#include "json.hpp"

namespace eegpolicy {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Thrown for bad user input discovered before any stage runs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump_to(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io, p.string(), "cannot write");
  out << text;
}

bool has_ext(const fs::path& p, const char* ext) { return p.extension() == ext; }

// Options that may also come from the JSON config. A value given on the command line
// wins; otherwise the subcommand section, then the top level of the config.
class Binder {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& dst, const std::string& help) {
    auto* opt = app->add_option(flag, dst, help);
    std::string key = flag.substr(flag.find_first_not_of('-'));
    std::replace(key.begin(), key.end(), '-', '_');
    fills_[app].push_back([opt, key, &dst](const json& sec) {
      if (opt->count() == 0 && sec.contains(key)) dst = sec.at(key).get<T>();
    });
    return opt;
  }
  CLI::Option* flag(CLI::App* app, const std::string& flag, bool& dst, const std::string& help) {
    auto* opt = app->add_flag(flag, dst, help);
    std::string key = flag.substr(flag.find_first_not_of('-'));
    std::replace(key.begin(), key.end(), '-', '_');
    fills_[app].push_back([opt, key, &dst](const json& sec) {
      if (opt->count() == 0 && sec.contains(key)) dst = sec.at(key).get<bool>();
    });
    return opt;
  }
  void apply(CLI::App* app, const json& config) const {
    auto it = fills_.find(app);
    if (it == fills_.end()) return;
    json sec = json::object();
    for (const auto& [k, v] : config.items())
      if (!v.is_object()) sec[k] = v;
    if (config.contains(app->get_name()) && config[app->get_name()].is_object())
      for (const auto& [k, v] : config[app->get_name()].items()) sec[k] = v;
    try {
      for (const auto& f : it->second) f(sec);
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }

 private:
  std::map<CLI::App*, std::vector<std::function<void(const json&)>>> fills_;
};

void require(const std::string& value, const std::string& name) {
  if (value.empty()) throw UsageError("missing required option --" + name);
}

void require_file(const std::string& path, const std::string& name) {
  require(path, name);
  if (!fs::exists(path)) throw UsageError("--" + name + ": file not found: " + path);
}

struct ForestFlags {
  std::size_t num_trees = 2000;
  std::size_t min_node_size = 5;
  std::size_t mtry = 0;
  double subsample_ratio = 0.5;
  double honesty_ratio = 0.5;
  std::size_t max_depth = 0;
  std::size_t nuisance_folds = 10;
  double known_propensity = -1.0;

  void attach(Binder& b, CLI::App* app) {
    b.add(app, "--num-trees", num_trees, "Trees in the causal forest");
    b.add(app, "--min-node-size", min_node_size, "Minimum count per arm in each child");
    b.add(app, "--mtry", mtry, "Variables tried per split (0: ceil(sqrt(d)))");
    b.add(app, "--subsample-ratio", subsample_ratio, "Fraction of rows drawn per tree");
    b.add(app, "--honesty-ratio", honesty_ratio, "Fraction of the subsample used to grow");
    b.add(app, "--max-depth", max_depth, "Maximum tree depth (0: unlimited)");
    b.add(app, "--nuisance-folds", nuisance_folds, "Cross-fitting folds for m and e");
    b.add(app, "--known-propensity", known_propensity, "Use this assignment probability instead of fitting e");
  }
  CausalForestOptions options(std::uint64_t seed) const {
    CausalForestOptions o;
    o.params.num_trees = num_trees;
    o.params.min_node_size = min_node_size;
    o.params.mtry = mtry;
    o.params.subsample_ratio = subsample_ratio;
    o.params.honesty_ratio = honesty_ratio;
    if (max_depth > 0) o.params.max_depth = max_depth;
    o.params.seed = seed;
    o.nuisance_folds = nuisance_folds;
    if (known_propensity >= 0.0) o.known_propensity = known_propensity;
    return o;
  }
};

// Per-row DR scores keyed by subject id.
struct ScoreTable {
  std::vector<std::string> ids;
  std::map<std::string, std::vector<double>> cols;
};

ScoreTable read_scores(const fs::path& path) {
  ScoreTable s;
  static const char* names[] = {"W", "Y", "tau_hat", "e_hat", "m_hat", "gamma", "gamma0", "gamma1"};
  if (has_ext(path, ".json")) {
    const auto j = json::parse(slurp(path));
    s.ids = j.at("subject_id").get<std::vector<std::string>>();
    for (const char* n : names)
      if (j.contains(n)) s.cols[n] = j[n].get<std::vector<double>>();
  } else {
    const auto t = csv::read(path);
    const int idc = t.column("subject_id");
    if (idc < 0) throw Error(Errc::missing_column, "subject_id", "scores table");
    for (const auto& r : t.rows) s.ids.push_back(r[static_cast<std::size_t>(idc)]);
    for (const char* n : names) {
      const int c = t.column(n);
      if (c < 0) continue;
      auto& v = s.cols[n];
      for (const auto& r : t.rows) v.push_back(std::stod(r[static_cast<std::size_t>(c)]));
    }
  }
  for (const char* n : {"gamma0", "gamma1"})
    if (!s.cols.count(n)) throw Error(Errc::missing_column, n, "scores table");
  for (const auto& [n, v] : s.cols)
    if (v.size() != s.ids.size()) throw Error(Errc::length_mismatch, n, "scores column length");
  return s;
}

std::string scores_text(const fs::path& path, const std::vector<std::string>& ids, const Eigen::VectorXd& W,
                        const Eigen::VectorXd& Y, const DoublyRobustScores& s) {
  const std::vector<std::pair<const char*, const Eigen::VectorXd*>> cols{
      {"W", &W},        {"Y", &Y},           {"tau_hat", &s.tau_hat}, {"e_hat", &s.e_hat},
      {"m_hat", &s.m_hat}, {"gamma", &s.gamma}, {"gamma0", &s.gamma0}, {"gamma1", &s.gamma1}};
  if (has_ext(path, ".json")) {
    json j;
    j["subject_id"] = ids;
    for (const auto& [n, v] : cols) j[n] = std::vector<double>(v->data(), v->data() + v->size());
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "subject_id";
  for (const auto& c : cols) out << ',' << c.first;
  out << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << csv::escape(ids[i]);
    for (const auto& c : cols) out << ',' << csv::format_double((*c.second)(static_cast<Eigen::Index>(i)));
    out << '\n';
  }
  return out.str();
}

FeatureMatrix load_features(const fs::path& path) {
  const auto t = load_feature_table(path);
  if (t.dropped_rows) std::cerr << "note: " << t.dropped_rows << " rows with missing values dropped\n";
  return t.matrix;
}

// Feature rows in the order of `ids`; every id must exist.
FeatureMatrix rows_for(const FeatureMatrix& fm, const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < fm.rows(); ++i) where.emplace(fm.subject_ids[i], i);
  std::vector<std::size_t> rows;
  for (const auto& id : ids) {
    auto it = where.find(id);
    if (it == where.end()) throw Error(Errc::not_found, id, "subject missing from the feature table");
    rows.push_back(it->second);
  }
  return fm.subset(rows);
}

// Model rows carry no ids; take them from the feature table when it matches the model
// (same rows), otherwise number them.
std::vector<std::string> model_ids(const CausalForestModel& model, const std::string& features_path) {
  std::vector<std::string> ids;
  if (!features_path.empty()) {
    const auto fm = load_features(features_path);
    if (fm.rows() == model.size() && fm.X.isApprox(model.X, 0.0)) return fm.subject_ids;
    std::cerr << "note: feature table rows differ from the model rows; using row numbers as ids\n";
  }
  for (std::size_t i = 0; i < model.size(); ++i) ids.push_back("row" + std::to_string(i));
  return ids;
}

Eigen::MatrixXd columns_by_name(const FeatureMatrix& fm, const std::vector<std::string>& names) {
  if (names.empty()) return fm.X;
  Eigen::MatrixXd X(fm.X.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const int c = fm.column_index(names[j]);
    if (c < 0) throw Error(Errc::missing_column, names[j], "policy feature missing from the feature table");
    X.col(static_cast<Eigen::Index>(j)) = fm.X.col(c);
  }
  return X;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const char* residualizer_name(Residualizer r) {
  switch (r) {
    case Residualizer::none: return "none";
    case Residualizer::least_squares: return "least_squares";
    case Residualizer::lasso: return "lasso";
  }
  return "lasso";
}

Residualizer residualizer_from(const std::string& s) {
  if (s == "none") return Residualizer::none;
  if (s == "least_squares" || s == "ls" || s == "ols") return Residualizer::least_squares;
  if (s == "lasso") return Residualizer::lasso;
  throw UsageError("unknown residualizer: " + s);
}

std::vector<int> apply_policy(const std::string& text, const FeatureMatrix& fm, std::string& method) {
  const auto j = json::parse(text);
  method = j.value("method", "tree");
  if (method == "tree") {
    auto tree = policy_tree_from_json(text);
    return tree.act(columns_by_name(fm, tree.feature_names));
  }
  const auto names = j.value("feature_names", std::vector<std::string>{});
  const auto X = columns_by_name(fm, names);
  if (method == "qlearn") {
    QPolicy q;
    q.lambda = j.at("lambda");
    q.intercept = j.at("intercept");
    q.main_effects = from_vec(j.at("main_effects").get<std::vector<double>>());
    q.treatment = j.at("treatment");
    q.interactions = from_vec(j.at("interactions").get<std::vector<double>>());
    return q.act(X);
  }
  if (method == "olearn") {
    OPolicy o;
    o.intercept = j.at("intercept");
    o.coefficients = from_vec(j.at("coefficients").get<std::vector<double>>());
    return o.act(X);
  }
  throw Error(Errc::parse, "method", "unknown policy method " + method);
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) {
      try {
        out.push_back(std::stoul(tok));
      } catch (const std::exception&) {
        throw UsageError("bad size list: " + s);
      }
    }
  if (out.empty()) throw UsageError("empty size list");
  return out;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Treatment-effect estimation and policy learning from resting-state EEG"};
  app.require_subcommand(1);
  Binder bind;

  std::uint64_t seed = 42;
  std::size_t threads = 0;
  std::string config_path;
  auto* seed_opt = app.add_option("--seed", seed, "Master random seed");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (0: all cores)");
  app.add_option("--config", config_path, "JSON config; flags override its keys");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Clean raw recordings into epoch files");
  std::string pre_in, pre_out, site_config;
  bind.add(pre, "--in", pre_in, "Directory of raw recordings");
  bind.add(pre, "--out", pre_out, "Output directory for epochs and QC reports");
  bind.add(pre, "--site-config", site_config, "Per-site filter and threshold overrides");

  // features
  auto* feat = app.add_subcommand("features", "Relative band power features from epoch files");
  std::string feat_in, feat_out, feat_clinical, feat_site;
  bind.add(feat, "--in", feat_in, "Directory of preprocessed epochs");
  bind.add(feat, "--out", feat_out, "Output CSV");
  bind.add(feat, "--clinical", feat_clinical, "Clinical CSV with subject_id, W, Y to join");
  bind.add(feat, "--site-config", feat_site, "Site config supplying the channel list");

  // fit-forest
  auto* fit = app.add_subcommand("fit-forest", "Fit an honest causal forest");
  std::string fit_features, fit_out, fit_tune;
  ForestFlags fit_flags;
  bind.add(fit, "--features", fit_features, "Feature table with W and Y");
  bind.add(fit, "--out", fit_out, "Model file");
  bind.add(fit, "--tune", fit_tune, "Tuning grid JSON {mtry, min_node_size, subsample_ratio}");
  fit_flags.attach(bind, fit);

  // ate
  auto* ate_cmd = app.add_subcommand("ate", "Doubly robust average treatment effect");
  std::string ate_model, ate_features, ate_scores_out, ate_out;
  bind.add(ate_cmd, "--model", ate_model, "Model file");
  bind.add(ate_cmd, "--features", ate_features, "Feature table the model was fitted on (subject ids)");
  bind.add(ate_cmd, "--scores-out", ate_scores_out, "Write per-subject scores (.csv or .json)");
  bind.add(ate_cmd, "--out", ate_out, "Write the estimate as JSON");

  // blp-test
  auto* blp_cmd = app.add_subcommand("blp-test", "Best linear predictor calibration test");
  std::string blp_model, blp_out;
  bind.add(blp_cmd, "--model", blp_model, "Model file");
  bind.add(blp_cmd, "--out", blp_out, "Output table (.csv or .json)");

  // importance
  auto* imp = app.add_subcommand("importance", "Depth-weighted split-frequency importance");
  std::string imp_model, imp_features, imp_out;
  std::size_t imp_depth = 4;
  bind.add(imp, "--model", imp_model, "Model file");
  bind.add(imp, "--features", imp_features, "Feature table for column names");
  bind.add(imp, "--max-depth", imp_depth, "Deepest layer counted");
  bind.add(imp, "--out", imp_out, "Output CSV");

  // policy
  auto* pol = app.add_subcommand("policy", "Learn a treatment policy");
  std::string pol_scores, pol_features, pol_method = "tree", pol_out, pol_resid = "lasso";
  std::size_t pol_folds = 10;
  bind.add(pol, "--scores", pol_scores, "Per-subject scores from `ate --scores-out`");
  bind.add(pol, "--features", pol_features, "Feature table");
  bind.add(pol, "--method", pol_method, "tree | qlearn | olearn")->check(CLI::IsMember({"tree", "qlearn", "olearn"}));
  bind.add(pol, "--out", pol_out, "Policy JSON");
  bind.add(pol, "--residualizer", pol_resid, "O-learning residualizer: lasso | least_squares | none");
  bind.add(pol, "--folds", pol_folds, "Lasso cross-validation folds");

  // value
  auto* val = app.add_subcommand("value", "Doubly robust value of a policy");
  std::string val_policy, val_features, val_scores, val_train, val_out;
  bind.add(val, "--policy", val_policy, "Policy JSON");
  bind.add(val, "--features", val_features, "Feature table of the evaluation subjects");
  bind.add(val, "--scores", val_scores, "Scores of the evaluation subjects");
  bind.add(val, "--train-features", val_train, "Training feature table, checked for id overlap");
  bind.add(val, "--out", val_out, "Output JSON");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Simulation benchmark of the three policy learners");
  std::string sim_spec, sim_sizes = "200,500", sim_effect = "strong", sim_out;
  std::size_t sim_reps = 20, sim_test = 10000, sim_trees = 500;
  bool sim_full = false;
  bind.add(sim_cmd, "--spec", sim_spec, "Generator spec JSON (default: built-in)");
  bind.add(sim_cmd, "--train-n", sim_sizes, "Comma-separated training sizes");
  bind.add(sim_cmd, "--effect", sim_effect, "strong | weak")->check(CLI::IsMember({"strong", "weak"}));
  bind.add(sim_cmd, "--replicates", sim_reps, "Replicates per training size");
  bind.add(sim_cmd, "--n-test", sim_test, "Test-set size");
  bind.add(sim_cmd, "--trees", sim_trees, "Causal forest trees per fit");
  bind.flag(sim_cmd, "--full-scale", sim_full, "Use the full-scale benchmark settings");
  bind.add(sim_cmd, "--out", sim_out, "Report directory");
  bool sim_write_spec = false;
  bind.flag(sim_cmd, "--write-spec", sim_write_spec, "Also write the generator spec used");

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline from a config");
  std::string run_raw, run_clinical, run_features, run_site, run_out;
  bind.add(run, "--raw-dir", run_raw, "Directory of raw recordings");
  bind.add(run, "--clinical", run_clinical, "Clinical CSV");
  bind.add(run, "--features", run_features, "Existing feature table (skips EEG stages)");
  bind.add(run, "--site-config", run_site, "Site config JSON");
  bind.add(run, "--out", run_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  json config = json::object();
  try {
    if (!config_path.empty()) {
      try {
        config = json::parse(slurp(config_path));
      } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
      }
      if (!config.is_object()) throw UsageError("config must be a JSON object");
      if (seed_opt->count() == 0 && config.contains("seed")) seed = config["seed"].get<std::uint64_t>();
      if (threads_opt->count() == 0 && config.contains("threads")) threads = config["threads"].get<std::size_t>();
    }
    set_num_threads(threads);
    for (auto* sub : app.get_subcommands()) bind.apply(sub, config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  // Validation of user input returns 1; failures while computing return 2.
  auto guarded = [](const std::function<void()>& validate, const std::function<void()>& body) {
    try {
      validate();
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    try {
      body();
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "stage failed: " << e.what() << "\n";
      return 2;
    }
    return 0;
  };

  if (pre->parsed()) {
    SiteConfig site;
    return guarded(
        [&] {
          require(pre_in, "in");
          require(pre_out, "out");
          if (!fs::is_directory(pre_in)) throw UsageError("--in: not a directory: " + pre_in);
          site = site_config.empty() ? default_site_config() : site_config_from_json(slurp(site_config));
          site.rejection.seed = seed;
        },
        [&] {
          const auto outs = preprocess_directory(pre_in, pre_out, site);
          std::cout << "preprocessed " << outs.size() << " recordings into " << pre_out << "\n";
        });
  }
  if (feat->parsed()) {
    SiteConfig site;
    return guarded(
        [&] {
          require(feat_in, "in");
          require(feat_out, "out");
          if (!fs::is_directory(feat_in)) throw UsageError("--in: not a directory: " + feat_in);
          if (!feat_clinical.empty()) require_file(feat_clinical, "clinical");
          site = feat_site.empty() ? default_site_config() : site_config_from_json(slurp(feat_site));
        },
        [&] {
          const auto eeg = eeg_features_from_directory(feat_in, site.channels);
          if (fs::path(feat_out).has_parent_path()) fs::create_directories(fs::path(feat_out).parent_path());
          if (feat_clinical.empty()) {
            save_covariate_table(eeg, feat_out);
          } else {
            const auto unmatched = join_features(eeg, feat_clinical, feat_out);
            if (unmatched) std::cerr << "note: " << unmatched << " clinical subjects without EEG were dropped\n";
          }
          std::cout << "wrote " << eeg.subject_ids.size() << " subjects x " << eeg.column_names.size()
                    << " EEG features to " << feat_out << "\n";
        });
  }
  if (fit->parsed()) {
    FeatureMatrix fm;
    CausalForestOptions opts;
    std::optional<TuningGrid> grid;
    return guarded(
        [&] {
          require_file(fit_features, "features");
          require(fit_out, "out");
          fm = load_features(fit_features);
          opts = fit_flags.options(seed);
          opts.params.validate();
          if (!fit_tune.empty()) {
            const auto j = json::parse(slurp(fit_tune));
            TuningGrid g;
            g.mtry = j.value("mtry", std::vector<std::size_t>{});
            g.min_node_size = j.value("min_node_size", std::vector<std::size_t>{});
            g.subsample_ratio = j.value("subsample_ratio", std::vector<double>{});
            grid = g;
          }
        },
        [&] {
          if (grid) {
            const auto t = tune_r_loss(fm.X, fm.W, fm.Y, *grid, opts);
            json tj = json::array();
            for (std::size_t i = 0; i < t.candidates.size(); ++i)
              tj.push_back({{"mtry", t.candidates[i].mtry},
                            {"min_node_size", t.candidates[i].min_node_size},
                            {"subsample_ratio", t.candidates[i].subsample_ratio},
                            {"r_loss", t.r_loss[i]},
                            {"chosen", i == t.best_index}});
            dump_to(fit_out + ".tuning.json", tj.dump(2) + "\n");
            opts.params = t.best;
          }
          const auto model = fit_causal_forest(fm.X, fm.W, fm.Y, opts);
          save_causal_forest(model, fit_out);
          std::cout << "fitted " << model.trees.size() << " trees on " << model.size() << " subjects; "
                    << model.clipped_propensities << " propensities clipped\n";
        });
  }
  if (ate_cmd->parsed()) {
    return guarded(
        [&] {
          require_file(ate_model, "model");
          if (!ate_features.empty()) require_file(ate_features, "features");
        },
        [&] {
          const auto model = load_causal_forest(ate_model);
          const auto s = doubly_robust_scores(predict_cate_oob(model), model.e_hat, model.m_hat, model.W, model.Y);
          const auto a = ate(s);
          const json j{{"tau_hat", a.tau_hat}, {"se", a.standard_error}, {"ci", {a.ci_lo, a.ci_hi}},
                       {"p", a.p_value},       {"n", s.size()},          {"ci_level", 0.95}};
          if (!ate_out.empty()) dump_to(ate_out, j.dump(2) + "\n");
          if (!ate_scores_out.empty())
            dump_to(ate_scores_out, scores_text(ate_scores_out, model_ids(model, ate_features), model.W, model.Y, s));
          std::cout << j.dump(2) << "\n";
        });
  }
  if (blp_cmd->parsed()) {
    return guarded([&] { require_file(blp_model, "model"); },
                   [&] {
                     const auto model = load_causal_forest(blp_model);
                     const auto r = blp_test(model.Y, model.W, model.m_hat, model.e_hat, predict_cate_oob(model));
                     json j;
                     auto coef = [](const std::optional<BlpCoefficient>& c) -> json {
                       if (!c) return nullptr;
                       return {{"estimate", c->estimate}, {"se", c->standard_error}, {"t", c->t_value}, {"p", c->p_value}};
                     };
                     j["mean.forest.prediction"] = coef(r.alpha);
                     j["differential.forest.prediction"] = coef(r.beta);
                     j["n"] = r.n;
                     if (!r.note.empty()) j["note"] = r.note;
                     if (!blp_out.empty()) dump_to(blp_out, has_ext(blp_out, ".json") ? j.dump(2) + "\n" : blp_table_csv(r));
                     std::cout << blp_table_csv(r);
                   });
  }
  if (imp->parsed()) {
    return guarded(
        [&] {
          require_file(imp_model, "model");
          if (imp_depth == 0) throw UsageError("--max-depth must be positive");
        },
        [&] {
          const auto model = load_causal_forest(imp_model);
          std::vector<std::string> names;
          if (!imp_features.empty()) names = load_features(imp_features).column_names;
          const auto d = static_cast<std::size_t>(model.X.cols());
          if (names.size() != d) {
            names.clear();
            for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
          }
          const auto r = variable_importance(model.trees, d, imp_depth);
          std::ostringstream out;
          out << "rank,feature,importance\n";
          for (std::size_t k = 0; k < r.ranking.size(); ++k)
            out << k + 1 << ',' << csv::escape(names[r.ranking[k]]) << ','
                << csv::format_double(r.importance[r.ranking[k]]) << '\n';
          if (!imp_out.empty()) dump_to(imp_out, out.str());
          std::cout << out.str();
        });
  }
  if (pol->parsed()) {
    FeatureMatrix fm;
    std::optional<ScoreTable> scores;
    return guarded(
        [&] {
          require_file(pol_features, "features");
          require(pol_out, "out");
          if (pol_method == "tree") require_file(pol_scores, "scores");
          else if (!pol_scores.empty()) require_file(pol_scores, "scores");
          residualizer_from(pol_resid);
          fm = load_features(pol_features);
          if (!pol_scores.empty()) scores = read_scores(pol_scores);
        },
        [&] {
          json out;
          if (pol_method == "tree") {
            const auto rows = rows_for(fm, scores->ids);
            const auto tree =
                search_policy_tree(rows.X, from_vec(scores->cols["gamma0"]), from_vec(scores->cols["gamma1"]), fm.column_names);
            out = json::parse(policy_tree_to_json(tree));
          } else if (pol_method == "qlearn") {
            QLearningOptions qo;
            qo.folds = pol_folds;
            qo.seed = derive_seed(seed, 11);
            const auto q = q_learning_fit(fm.X, fm.W, fm.Y, qo);
            out = {{"method", "qlearn"},          {"feature_names", fm.column_names},
                   {"lambda", q.lambda},          {"intercept", q.intercept},
                   {"main_effects", to_vec(q.main_effects)}, {"treatment", q.treatment},
                   {"interactions", to_vec(q.interactions)}};
          } else {
            Eigen::VectorXd prob = Eigen::VectorXd::Constant(fm.X.rows(), 0.5);
            if (scores && scores->cols.count("e_hat")) {
              std::map<std::string, double> e;
              for (std::size_t i = 0; i < scores->ids.size(); ++i) e[scores->ids[i]] = scores->cols["e_hat"][i];
              for (std::size_t i = 0; i < fm.rows(); ++i) {
                auto it = e.find(fm.subject_ids[i]);
                if (it != e.end()) prob(static_cast<Eigen::Index>(i)) = it->second;
              }
            }
            const auto I = static_cast<Eigen::Index>(fm.rows());
            Eigen::VectorXd A(I), pa(I);
            for (Eigen::Index i = 0; i < I; ++i) {
              A(i) = fm.W(i) == 1.0 ? 1.0 : -1.0;
              pa(i) = fm.W(i) == 1.0 ? prob(i) : 1.0 - prob(i);
            }
            OLearningOptions oo;
            oo.residualizer = residualizer_from(pol_resid);
            oo.lasso_folds = pol_folds;
            oo.seed = derive_seed(seed, 13);
            const auto o = o_learning_fit(fm.X, A, fm.Y, pa, oo);
            out = {{"method", "olearn"},
                   {"feature_names", fm.column_names},
                   {"intercept", o.intercept},
                   {"coefficients", to_vec(o.coefficients)},
                   {"residualizer", residualizer_name(o.residualizer)},
                   {"degenerate", o.degenerate}};
          }
          dump_to(pol_out, out.dump(2) + "\n");
          std::cout << "wrote " << pol_method << " policy to " << pol_out << "\n";
        });
  }
  if (val->parsed()) {
    FeatureMatrix fm;
    ScoreTable scores;
    std::string policy_text;
    std::vector<std::string> train_ids;
    return guarded(
        [&] {
          require_file(val_policy, "policy");
          require_file(val_features, "features");
          require_file(val_scores, "scores");
          policy_text = slurp(val_policy);
          fm = load_features(val_features);
          scores = read_scores(val_scores);
          if (!val_train.empty()) {
            require_file(val_train, "train-features");
            train_ids = load_features(val_train).subject_ids;
          }
        },
        [&] {
          const auto rows = rows_for(fm, scores.ids);
          std::string method;
          const auto actions = apply_policy(policy_text, rows, method);
          DoublyRobustScores s;
          s.gamma0 = from_vec(scores.cols["gamma0"]);
          s.gamma1 = from_vec(scores.cols["gamma1"]);
          s.gamma = scores.cols.count("gamma") ? from_vec(scores.cols["gamma"]) : Eigen::VectorXd(s.gamma1 - s.gamma0);
          const auto v = estimate_value_dr(actions, s, scores.ids, train_ids);
          std::size_t treated = 0;
          for (int a : actions) treated += a == 1;
          const json j{{"method", method},     {"value", v.value},     {"se", v.standard_error},
                       {"n", actions.size()}, {"treated", treated},  {"ids_overlap", v.ids_overlap},
                       {"weighting", "doubly_robust"}};
          if (v.ids_overlap) std::cerr << "warning: evaluation subjects overlap the training subjects\n";
          if (!val_out.empty()) dump_to(val_out, j.dump(2) + "\n");
          std::cout << j.dump(2) << "\n";
        });
  }
  if (sim_cmd->parsed()) {
    sim::GeneratorSpec spec;
    sim::BenchmarkConfig bc;
    return guarded(
        [&] {
          require(sim_out, "out");
          spec = sim_spec.empty() ? sim::default_spec() : sim::spec_from_json(slurp(sim_spec));
          if (sim_effect == "weak" && spec.effect_size == sim::EffectSize::strong) spec = sim::weaken_effects(spec);
          bc = sim_full ? sim::BenchmarkConfig::full_scale() : sim::BenchmarkConfig::desk_scale();
          if (!sim_full || sim_cmd->get_option("--train-n")->count()) bc.train_sizes = parse_sizes(sim_sizes);
          if (!sim_full || sim_cmd->get_option("--replicates")->count()) bc.replicates = sim_reps;
          if (!sim_full || sim_cmd->get_option("--n-test")->count()) bc.n_test = sim_test;
          if (!sim_full || sim_cmd->get_option("--trees")->count()) bc.forest.params.num_trees = sim_trees;
          bc.seed = seed;
          if (bc.replicates == 0 || bc.n_test == 0) throw UsageError("replicates and n-test must be positive");
        },
        [&] {
          const auto rep = sim::run_benchmark(spec, bc);
          fs::create_directories(sim_out);
          dump_to(fs::path(sim_out) / "replicates.csv", rep.rows_csv());
          dump_to(fs::path(sim_out) / "long.csv", rep.long_csv());
          dump_to(fs::path(sim_out) / "summary.json", rep.summary_json() + "\n");
          if (sim_write_spec) dump_to(fs::path(sim_out) / "spec.json", sim::spec_to_json(spec) + "\n");
          std::cout << rep.summary_json() << "\n";
        });
  }
  if (run->parsed()) {
    PipelineConfig cfg;
    return guarded(
        [&] {
          cfg = config_path.empty() ? PipelineConfig{} : pipeline_config_from_json(config.dump());
          cfg.seed = seed;
          cfg.forest_params.seed = seed;
          if (!run_raw.empty()) cfg.raw_dir = run_raw;
          if (!run_clinical.empty()) cfg.clinical_csv = run_clinical;
          if (!run_site.empty()) cfg.site_config = run_site;
          if (!run_out.empty()) cfg.out_dir = run_out;
          if (!run_features.empty()) {
            cfg.features_csv = run_features;
            cfg.preprocess = cfg.features = false;
          }
          cfg.validate();
        },
        [&] {
          const auto report = run_pipeline(cfg);
          for (const auto& s : report.stages)
            std::cout << s.name << ": " << s.status << " (" << s.seconds << " s)" << (s.note.empty() ? "" : "  ")
                      << s.note << "\n";
          std::cout << "manifest: " << report.manifest.string() << "\n";
          if (!report.ok) throw std::runtime_error(report.failed_stage + ": " + report.error);
        });
  }
  return 1;
}

}  // namespace eegpolicy
