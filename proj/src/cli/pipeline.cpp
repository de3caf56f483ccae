#include "eegpolicy/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "eegpolicy/csv.hpp"
#include "eegpolicy/effects.hpp"
#include "eegpolicy/error.hpp"
#include "eegpolicy/parallel.hpp"
#include "eegpolicy/policy.hpp"
#include "eegpolicy/random.hpp"
#include "eegpolicy/serialize.hpp"
#include "eegpolicy/sim.hpp"
#include "eegpolicy/spectral.hpp"
#include "json.hpp"

namespace eegpolicy {

namespace fs = std::filesystem;
using json = nlohmann::json;

FeatureMatrix upsample_minority(const FeatureMatrix& fm, std::uint64_t seed) {
  std::vector<std::size_t> zeros, ones;
  for (Eigen::Index i = 0; i < fm.Y.size(); ++i) {
    if (fm.Y(i) == 0.0) zeros.push_back(static_cast<std::size_t>(i));
    else if (fm.Y(i) == 1.0) ones.push_back(static_cast<std::size_t>(i));
    else throw Error(Errc::domain, "Y", "upsampling needs a binary outcome");
  }
  if (zeros.empty() || ones.empty()) throw Error(Errc::degenerate, "Y", "only one outcome class present");
  if (zeros.size() == ones.size()) return fm;
  const auto& minority = zeros.size() < ones.size() ? zeros : ones;
  const std::size_t need = std::max(zeros.size(), ones.size()) - minority.size();
  std::vector<std::size_t> rows(static_cast<std::size_t>(fm.Y.size()));
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng = make_rng(seed, 0x0b5a);
  for (std::size_t k = 0; k < need; ++k) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(minority.size()));
    rows.push_back(minority[std::min(j, minority.size() - 1)]);
  }
  return fm.subset(rows);
}

TrainTestSplit train_test_split(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(Errc::domain, "train_fraction", "must lie in (0, 1)");
  Rng rng = make_rng(seed, 0x5b1f);
  const auto perm = random_permutation(n, rng);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  TrainTestSplit s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<long>(k));
  s.test.assign(perm.begin() + static_cast<long>(k), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io, p.string(), "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::io, p.string(), "cannot write");
  out << text;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::function<bool(const fs::path&)>& keep) {
  if (!fs::is_directory(dir)) throw Error(Errc::io, dir.string(), "not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && keep(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

bool is_recording(const fs::path& p) {
  const auto name = p.filename().string();
  if (ends_with(name, ".csv")) return true;
  return ends_with(name, ".json") && !ends_with(name, ".meta.json") && !ends_with(name, ".qc.json");
}

bool is_epoch_header(const fs::path& p) {
  const auto name = p.filename().string();
  return ends_with(name, ".json") && !ends_with(name, ".qc.json");
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::vector<fs::path> preprocess_directory(const fs::path& in_dir, const fs::path& out_dir, const SiteConfig& cfg) {
  const auto inputs = sorted_files(in_dir, is_recording);
  if (inputs.empty()) throw Error(Errc::not_found, in_dir.string(), "no recordings found");
  fs::create_directories(out_dir);
  std::vector<fs::path> outputs(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    auto rec = load_recording(inputs[i]);
    if (rec.subject_id.empty()) rec.subject_id = inputs[i].stem().string();
    QcReport qc;
    const auto es = preprocess_recording(rec, cfg, &qc);
    const auto stem = inputs[i].stem().string();
    outputs[i] = out_dir / (stem + ".json");
    save_epochs(es, outputs[i]);
    write_file(out_dir / (stem + ".qc.json"), qc_to_json(qc) + "\n");
  });
  return outputs;
}

CovariateTable eeg_features_from_directory(const fs::path& epoch_dir, const std::vector<std::string>& channels) {
  std::map<std::string, std::vector<EpochSet>> by_subject;
  for (const auto& p : sorted_files(epoch_dir, is_epoch_header)) {
    auto es = load_epochs(p);
    by_subject[es.subject_id].push_back(std::move(es));
  }
  if (by_subject.empty()) throw Error(Errc::not_found, epoch_dir.string(), "no epoch files found");
  CovariateTable t;
  std::vector<BandFeatureRow> rows;
  for (const auto& [id, sets] : by_subject) {
    rows.push_back(extract_features(sets, channels));
    rows.back().subject_id = id;
  }
  t.column_names = rows.front().names;
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.column_names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    t.subject_ids.push_back(rows[r].subject_id);
    for (std::size_t c = 0; c < rows[r].values.size(); ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r].values[c];
  }
  return t;
}

std::size_t join_features(const CovariateTable& eeg, const fs::path& clinical_csv, const fs::path& out_csv) {
  const auto table = csv::read(clinical_csv);
  for (const char* required : {"subject_id", "W", "Y"})
    if (table.column(required) < 0) throw Error(Errc::missing_column, required, "mandatory column missing");
  const auto id_col = static_cast<std::size_t>(table.column("subject_id"));
  const auto w_col = static_cast<std::size_t>(table.column("W"));
  const auto y_col = static_cast<std::size_t>(table.column("Y"));
  std::map<std::string, Eigen::Index> eeg_row;
  for (std::size_t i = 0; i < eeg.subject_ids.size(); ++i) eeg_row[eeg.subject_ids[i]] = static_cast<Eigen::Index>(i);

  std::ostringstream out;
  out << "subject_id,W,Y";
  for (const auto& c : eeg.column_names) out << ',' << csv::escape(c);
  std::vector<std::size_t> extra;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != id_col && c != w_col && c != y_col) {
      for (const auto& e : eeg.column_names)
        if (e == table.header[c]) throw Error(Errc::duplicate_name, e, "clinical column clashes with an EEG feature");
      extra.push_back(c);
      out << ',' << csv::escape(table.header[c]);
    }
  out << '\n';
  std::size_t unmatched = 0;
  for (const auto& row : table.rows) {
    auto it = eeg_row.find(row[id_col]);
    if (it == eeg_row.end()) {
      ++unmatched;
      continue;
    }
    out << csv::escape(row[id_col]) << ',' << csv::escape(row[w_col]) << ',' << csv::escape(row[y_col]);
    for (Eigen::Index j = 0; j < eeg.values.cols(); ++j) out << ',' << csv::format_double(eeg.values(it->second, j));
    for (auto c : extra) out << ',' << csv::escape(row[c]);
    out << '\n';
  }
  write_file(out_csv, out.str());
  auto schema = clinical_csv;
  schema += ".schema.json";
  auto out_schema = out_csv;
  out_schema += ".schema.json";
  if (fs::exists(schema)) fs::copy_file(schema, out_schema, fs::copy_options::overwrite_existing);
  else if (fs::exists(out_schema)) fs::remove(out_schema);
  return unmatched;
}

void PipelineConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error(Errc::domain, "train_fraction", "must lie in (0, 1)");
  forest_params.validate();
  if (preprocess && !fs::is_directory(raw_dir)) throw Error(Errc::not_found, "raw_dir", "raw recording directory not found: " + raw_dir.string());
  if (!site_config.empty() && !fs::exists(site_config)) throw Error(Errc::not_found, "site_config", site_config.string());
  if (features && !fs::exists(clinical_csv)) throw Error(Errc::not_found, "clinical_csv", "clinical table not found: " + clinical_csv.string());
  const bool modelling = forest || scores || policy || value;
  if (modelling && !features && !fs::exists(features_csv))
    throw Error(Errc::not_found, "features_csv", "feature table not found: " + features_csv.string());
  if (features && !preprocess && !fs::is_directory(out_dir / "preprocessed"))
    throw Error(Errc::not_found, "preprocessed", "features stage needs preprocessed epochs");
  if (simulate) {
    if (effect != "strong" && effect != "weak") throw Error(Errc::domain, "effect", "expected strong or weak");
    if (!spec_path.empty() && !fs::exists(spec_path)) throw Error(Errc::not_found, "spec", spec_path.string());
    if (train_sizes.empty() || replicates == 0 || n_test == 0) throw Error(Errc::domain, "simulate", "empty benchmark");
  }
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  PipelineConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, "config", e.what());
  }
  try {
    if (j.contains("stages")) {
      const auto& s = j["stages"];
      c.preprocess = s.value("preprocess", c.preprocess);
      c.features = s.value("features", c.features);
      c.forest = s.value("forest", c.forest);
      c.scores = s.value("scores", c.scores);
      c.policy = s.value("policy", c.policy);
      c.value = s.value("value", c.value);
      c.simulate = s.value("simulate", c.simulate);
    }
    auto path = [&](const char* key, fs::path& dst) {
      if (j.contains(key)) dst = j[key].get<std::string>();
    };
    path("raw_dir", c.raw_dir);
    path("site_config", c.site_config);
    path("clinical_csv", c.clinical_csv);
    path("features_csv", c.features_csv);
    path("out_dir", c.out_dir);
    path("spec", c.spec_path);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.upsample = j.value("upsample", c.upsample);
    c.seed = j.value("seed", c.seed);
    c.nuisance_folds = j.value("nuisance_folds", c.nuisance_folds);
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      auto& p = c.forest_params;
      p.num_trees = f.value("num_trees", p.num_trees);
      p.subsample_ratio = f.value("subsample_ratio", p.subsample_ratio);
      p.honesty_ratio = f.value("honesty_ratio", p.honesty_ratio);
      p.mtry = f.value("mtry", p.mtry);
      p.min_node_size = f.value("min_node_size", p.min_node_size);
      if (f.contains("max_depth")) p.max_depth = f["max_depth"].get<std::size_t>();
    }
    c.effect = j.value("effect", c.effect);
    if (j.contains("train_sizes")) c.train_sizes = j["train_sizes"].get<std::vector<std::size_t>>();
    c.replicates = j.value("replicates", c.replicates);
    c.n_test = j.value("n_test", c.n_test);
    c.sim_trees = j.value("sim_trees", c.sim_trees);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, "config", e.what());
  }
  c.forest_params.seed = c.seed;
  return c;
}

namespace {

struct StageIo {
  std::vector<fs::path> inputs;
  std::string params;
};

// Shrinks leaf-size and fold settings that a small sample cannot support.
std::string adapt_params(ForestParams& p, std::size_t& folds, std::size_t n) {
  std::string note;
  const std::size_t max_node = std::max<std::size_t>(1, n / 8);
  if (p.min_node_size > max_node) {
    note += "min_node_size " + std::to_string(p.min_node_size) + " -> " + std::to_string(max_node) + "; ";
    p.min_node_size = max_node;
  }
  const std::size_t max_folds = std::max<std::size_t>(2, n / std::max<std::size_t>(2, 2 * p.min_node_size + 1));
  if (folds > max_folds) {
    note += "nuisance_folds " + std::to_string(folds) + " -> " + std::to_string(max_folds) + "; ";
    folds = max_folds;
  }
  return note;
}

std::string scores_csv(const std::vector<std::string>& ids, const Eigen::VectorXd& W, const Eigen::VectorXd& Y,
                       const DoublyRobustScores& s) {
  std::ostringstream out;
  out << "subject_id,W,Y,tau_hat,e_hat,m_hat,gamma,gamma0,gamma1\n";
  for (Eigen::Index i = 0; i < W.size(); ++i)
    out << csv::escape(ids[static_cast<std::size_t>(i)]) << ',' << csv::format_double(W(i)) << ','
        << csv::format_double(Y(i)) << ',' << csv::format_double(s.tau_hat(i)) << ',' << csv::format_double(s.e_hat(i))
        << ',' << csv::format_double(s.m_hat(i)) << ',' << csv::format_double(s.gamma(i)) << ','
        << csv::format_double(s.gamma0(i)) << ',' << csv::format_double(s.gamma1(i)) << '\n';
  return out.str();
}

json ate_json(const AteResult& a, std::size_t n) {
  return json{{"tau_hat", a.tau_hat},          {"se", a.standard_error}, {"ci", {a.ci_lo, a.ci_hi}},
              {"p", a.p_value},                {"score_variance", a.score_variance}, {"n", n},
              {"ci_level", 0.95}};
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  RunReport report;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  report.manifest = out / "manifest.json";

  json previous = json::object();
  if (fs::exists(report.manifest)) {
    try {
      previous = json::parse(read_file(report.manifest));
    } catch (const json::exception&) {
      previous = json::object();
    }
  }
  json manifest;
  manifest["tool"] = "eegpolicy";
  manifest["version"] = "0.3.0";
  manifest["seed"] = cfg.seed;
  manifest["threads"] = num_threads();
  manifest["stages"] = json::array();

  auto write_manifest = [&] { write_file(report.manifest, manifest.dump(2) + "\n"); };

  const fs::path pre_dir = out / "preprocessed";
  const fs::path eeg_csv = out / "eeg_features.csv";
  const fs::path feat_csv = cfg.features ? out / "features.csv" : cfg.features_csv;
  const fs::path model_path = out / "model.bin";
  const fs::path split_path = out / "split.json";
  const fs::path scores_path = out / "scores.csv";
  const fs::path policy_path = out / "policy.json";
  const fs::path value_path = out / "value.json";
  const fs::path sim_dir = out / "sim";

  auto run_stage = [&](const std::string& name, const StageIo& io, const std::function<std::vector<fs::path>(std::string&)>& body) {
    StageRecord rec;
    rec.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    json entry;
    entry["name"] = name;
    try {
      json inputs = json::object();
      std::string key_material = name + "\n" + io.params + "\n";
      for (const auto& p : io.inputs) {
        const auto h = sha256_file(p);
        inputs[p.string()] = h;
        key_material += p.string() + "=" + h + "\n";
      }
      const auto key = sha256_hex(key_material);
      entry["inputs"] = inputs;
      entry["key"] = key;
      // cache hit: same key and every recorded output still has its hash
      bool cached = false;
      if (previous.contains("stages"))
        for (const auto& st : previous["stages"])
          if (st.value("name", "") == name && st.value("key", "") == key && st.contains("outputs") &&
              st.value("status", "") != "failed") {
            cached = true;
            for (const auto& [path, hash] : st["outputs"].items())
              if (!fs::exists(path) || sha256_file(path) != hash.get<std::string>()) cached = false;
            if (cached) entry["outputs"] = st["outputs"];
          }
      if (cached) {
        rec.status = "cached";
        rec.note = "inputs unchanged; outputs reused";
      } else {
        const auto outputs = body(rec.note);
        json outs = json::object();
        for (const auto& p : outputs) outs[p.string()] = sha256_file(p);
        entry["outputs"] = outs;
        rec.status = "ran";
      }
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.note = e.what();
      report.ok = false;
      report.failed_stage = name;
      report.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    entry["status"] = rec.status;
    entry["seconds"] = rec.seconds;
    entry["note"] = rec.note;
    manifest["stages"].push_back(entry);
    report.stages.push_back(rec);
    write_manifest();
    return report.ok;
  };

  SiteConfig site = default_site_config();
  std::string site_text = "{}";
  if (!cfg.site_config.empty()) {
    site_text = read_file(cfg.site_config);
    site = site_config_from_json(site_text);
  }

  if (cfg.preprocess) {
    StageIo io{sorted_files(cfg.raw_dir, [](const fs::path&) { return true; }), site_text};
    if (!run_stage("preprocess", io, [&](std::string&) {
          if (fs::exists(pre_dir)) fs::remove_all(pre_dir);
          preprocess_directory(cfg.raw_dir, pre_dir, site);
          return sorted_files(pre_dir, [](const fs::path&) { return true; });
        }))
      return report;
  }
  if (cfg.features) {
    StageIo io{sorted_files(pre_dir, [](const fs::path&) { return true; }), json(site.channels).dump()};
    io.inputs.push_back(cfg.clinical_csv);
    auto schema = cfg.clinical_csv;
    schema += ".schema.json";
    if (fs::exists(schema)) io.inputs.push_back(schema);
    if (!run_stage("features", io, [&](std::string& note) {
          const auto eeg = eeg_features_from_directory(pre_dir, site.channels);
          save_covariate_table(eeg, eeg_csv);
          const auto unmatched = join_features(eeg, cfg.clinical_csv, feat_csv);
          if (unmatched) note = std::to_string(unmatched) + " clinical subjects without EEG features were dropped";
          std::vector<fs::path> outs{eeg_csv, feat_csv};
          auto s = feat_csv;
          s += ".schema.json";
          if (fs::exists(s)) outs.push_back(s);
          return outs;
        }))
      return report;
  }

  auto load_features = [&](std::string& note) {
    const auto t = load_feature_table(feat_csv);
    if (t.dropped_rows) note += std::to_string(t.dropped_rows) + " rows with missing values dropped; ";
    return t.matrix;
  };
  std::ostringstream params;
  params << cfg.seed << ',' << cfg.train_fraction << ',' << cfg.upsample << ',' << cfg.forest_params.num_trees << ','
         << cfg.forest_params.subsample_ratio << ',' << cfg.forest_params.honesty_ratio << ','
         << cfg.forest_params.mtry << ',' << cfg.forest_params.min_node_size << ',' << cfg.nuisance_folds;

  if (cfg.forest) {
    if (!run_stage("forest", {{feat_csv}, params.str()}, [&](std::string& note) {
          const auto fm = load_features(note);
          const auto split = train_test_split(fm.rows(), cfg.train_fraction, cfg.seed);
          auto train = fm.subset(split.train);
          if (cfg.upsample) {
            bool binary = true;
            for (Eigen::Index i = 0; i < train.Y.size(); ++i) binary &= train.Y(i) == 0.0 || train.Y(i) == 1.0;
            if (binary) {
              const auto before = train.rows();
              train = upsample_minority(train, cfg.seed);
              note += "upsampled " + std::to_string(train.rows() - before) + " minority rows; ";
            } else {
              note += "outcome not binary, no upsampling; ";
            }
          }
          CausalForestOptions opts;
          opts.params = cfg.forest_params;
          opts.params.seed = cfg.seed;
          opts.nuisance_folds = cfg.nuisance_folds;
          note += adapt_params(opts.params, opts.nuisance_folds, train.rows());
          const auto model = fit_causal_forest(train.X, train.W, train.Y, opts);
          save_causal_forest(model, model_path);
          json sj;
          std::vector<std::string> tr, te;
          for (auto i : split.train) tr.push_back(fm.subject_ids[i]);
          for (auto i : split.test) te.push_back(fm.subject_ids[i]);
          sj["train"] = tr;
          sj["test"] = te;
          sj["model_rows"] = train.subject_ids;
          write_file(split_path, sj.dump(2) + "\n");
          return std::vector<fs::path>{model_path, split_path};
        }))
      return report;
  }
  if (cfg.scores) {
    if (!run_stage("scores", {{model_path, split_path}, ""}, [&](std::string&) {
          const auto model = load_causal_forest(model_path);
          const auto sj = json::parse(read_file(split_path));
          const auto ids = sj.at("model_rows").get<std::vector<std::string>>();
          const Eigen::VectorXd tau = predict_cate_oob(model);
          const auto s = doubly_robust_scores(tau, model.e_hat, model.m_hat, model.W, model.Y);
          write_file(scores_path, scores_csv(ids, model.W, model.Y, s));
          const auto a = ate(s);
          write_file(out / "ate.json", ate_json(a, s.size()).dump(2) + "\n");
          const auto blp = blp_test(model.Y, model.W, model.m_hat, model.e_hat, tau);
          write_file(out / "blp.csv", blp_table_csv(blp));
          return std::vector<fs::path>{scores_path, out / "ate.json", out / "blp.csv"};
        }))
      return report;
  }
  if (cfg.policy) {
    if (!run_stage("policy", {{model_path, scores_path, feat_csv}, ""}, [&](std::string&) {
          const auto model = load_causal_forest(model_path);
          const auto table = csv::read(scores_path);
          const int g0c = table.column("gamma0"), g1c = table.column("gamma1");
          if (g0c < 0 || g1c < 0) throw Error(Errc::missing_column, "gamma0/gamma1", "scores table incomplete");
          Eigen::VectorXd g0(static_cast<Eigen::Index>(table.rows.size())), g1(g0.size());
          for (std::size_t i = 0; i < table.rows.size(); ++i) {
            g0(static_cast<Eigen::Index>(i)) = std::stod(table.rows[i][static_cast<std::size_t>(g0c)]);
            g1(static_cast<Eigen::Index>(i)) = std::stod(table.rows[i][static_cast<std::size_t>(g1c)]);
          }
          std::string ignored;
          const auto fm = load_features(ignored);
          const auto tree = search_policy_tree(model.X, g0, g1, fm.column_names);
          write_file(policy_path, policy_tree_to_json(tree) + "\n");
          return std::vector<fs::path>{policy_path};
        }))
      return report;
  }
  if (cfg.value) {
    if (!run_stage("value", {{policy_path, split_path, feat_csv}, params.str()}, [&](std::string& note) {
          const auto fm = load_features(note);
          const auto sj = json::parse(read_file(split_path));
          const auto test_ids = sj.at("test").get<std::vector<std::string>>();
          const auto train_ids = sj.at("train").get<std::vector<std::string>>();
          std::vector<std::size_t> rows;
          for (std::size_t i = 0; i < fm.rows(); ++i)
            if (std::find(test_ids.begin(), test_ids.end(), fm.subject_ids[i]) != test_ids.end()) rows.push_back(i);
          const auto test = fm.subset(rows);
          const auto tree = policy_tree_from_json(read_file(policy_path));
          json vj;
          vj["weighting"] = "doubly_robust";
          vj["n_test"] = test.rows();
          const double treated = test.W.sum();
          if (test.rows() < 4 || treated < 1.0 || treated > static_cast<double>(test.rows()) - 1.0) {
            vj["status"] = "skipped";
            vj["reason"] = "test split too small or missing an arm for a held-out forest";
            note += "value not estimated: test split too small; ";
          } else {
            CausalForestOptions opts;
            opts.params = cfg.forest_params;
            opts.params.seed = derive_seed(cfg.seed, 77);
            opts.nuisance_folds = cfg.nuisance_folds;
            note += adapt_params(opts.params, opts.nuisance_folds, test.rows());
            const auto model = fit_causal_forest(test.X, test.W, test.Y, opts);
            const auto s = doubly_robust_scores(predict_cate_oob(model), model.e_hat, model.m_hat, test.W, test.Y);
            const auto v = estimate_value_dr(tree.act(test.X), s, test.subject_ids, train_ids);
            const std::vector<int> all1(test.rows(), 1), all0(test.rows(), 0);
            vj["status"] = "estimated";
            vj["value"] = v.value;
            vj["se"] = v.standard_error;
            vj["ids_overlap"] = v.ids_overlap;
            vj["always_treat"] = estimate_value_dr(all1, s).value;
            vj["never_treat"] = estimate_value_dr(all0, s).value;
          }
          write_file(value_path, vj.dump(2) + "\n");
          return std::vector<fs::path>{value_path};
        }))
      return report;
  }
  if (cfg.simulate) {
    std::string spec_text = cfg.spec_path.empty() ? std::string("default") : read_file(cfg.spec_path);
    std::ostringstream sp;
    sp << cfg.effect << ',' << cfg.replicates << ',' << cfg.n_test << ',' << cfg.sim_trees << ',' << cfg.seed;
    for (auto n : cfg.train_sizes) sp << ',' << n;
    std::vector<fs::path> ins;
    if (!cfg.spec_path.empty()) ins.push_back(cfg.spec_path);
    if (!run_stage("simulate", {ins, sp.str()}, [&](std::string&) {
          auto spec = cfg.spec_path.empty() ? sim::default_spec() : sim::spec_from_json(spec_text);
          if (cfg.effect == "weak" && spec.effect_size == sim::EffectSize::strong) spec = sim::weaken_effects(spec);
          auto bc = sim::BenchmarkConfig::desk_scale();
          bc.train_sizes = cfg.train_sizes;
          bc.replicates = cfg.replicates;
          bc.n_test = cfg.n_test;
          bc.seed = cfg.seed;
          bc.forest.params.num_trees = cfg.sim_trees;
          const auto rep = sim::run_benchmark(spec, bc);
          fs::create_directories(sim_dir);
          write_file(sim_dir / "replicates.csv", rep.rows_csv());
          write_file(sim_dir / "long.csv", rep.long_csv());
          write_file(sim_dir / "summary.json", rep.summary_json() + "\n");
          return std::vector<fs::path>{sim_dir / "replicates.csv", sim_dir / "long.csv", sim_dir / "summary.json"};
        }))
      return report;
  }
  return report;
}

}  // namespace eegpolicy
