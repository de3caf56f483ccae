#include <fstream>
#include <sstream>

#include "doctest.h"
#include "eegpolicy/csv.hpp"
#include "eegpolicy/pipeline.hpp"
#include "eegpolicy/policy.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace eegpolicy;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "eegpolicy");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Ten subjects, four blocks each (open, closed, closed, open), plus a clinical table.
struct Fixture {
  fs::path root, raw, clinical;
  Fixture() {
    root = testsupport::scratch_dir("cli_fixture");
    raw = root / "raw";
    clinical = root / "clinical.csv";
    if (fs::exists(raw / "done")) return;
    fs::create_directories(raw);
    const Condition conds[] = {Condition::eyes_open, Condition::eyes_closed, Condition::eyes_closed, Condition::eyes_open};
    std::ostringstream cl;
    cl << "subject_id,W,Y,age,site\n";
    for (int s = 0; s < 10; ++s) {
      const std::string id = "s" + std::to_string(10 + s);
      for (int b = 0; b < 4; ++b) {
        const auto rec = testsupport::synthetic_recording(common_channels_54(), 250.0, 20.0, conds[b], b + 1, id,
                                                          static_cast<std::uint64_t>(100 + s), 0.7 + 0.06 * s);
        save_recording(rec, raw / (id + "_b" + std::to_string(b + 1) + ".json"));
      }
      cl << id << ',' << s % 2 << ',' << (s % 3 == 0 ? 1 : 0) << ',' << 30 + s << ',' << (s < 5 ? "north" : "south")
         << '\n';
    }
    write(clinical, cl.str());
    write(root / "clinical.csv.schema.json", "{\"site\": \"categorical\"}");
    write(raw / "done", "");
  }
};

}  // namespace

TEST_CASE("cli: usage errors return 1") {
  CHECK(cli({"no-such-command"}) == 1);
  CHECK(cli({"preprocess"}) == 1);
  CHECK(cli({"preprocess", "--in", "/nonexistent/dir", "--out", "x"}) == 1);
  CHECK(cli({"policy", "--method", "forest"}) == 1);
  CHECK(cli({"--help"}) == 0);
  const auto dir = testsupport::scratch_dir("cli_errors");
  write(dir / "bad.json", "{not json");
  CHECK(cli({"--config", (dir / "bad.json").string(), "run"}) == 1);
}

TEST_CASE("cli: a failure while computing returns 2") {
  const auto dir = testsupport::scratch_dir("cli_stage_fail");
  write(dir / "f.csv", "subject_id,W,Y,x\na,0,1,1\nb,1,0,2\nc,0,1,3\n");
  CHECK(cli({"fit-forest", "--features", (dir / "f.csv").string(), "--out", (dir / "m.bin").string(),
             "--num-trees", "10"}) == 2);
}

TEST_CASE("cli: full pipeline run, manifest and cache") {
  Fixture fx;
  const auto out = testsupport::scratch_dir("cli_run");
  json cfg = {{"raw_dir", fx.raw.string()},
              {"clinical_csv", fx.clinical.string()},
              {"out_dir", out.string()},
              {"seed", 5},
              {"train_fraction", 0.6},
              {"forest", {{"num_trees", 200}}}};
  write(out / "config.json", cfg.dump());
  REQUIRE(cli({"--config", (out / "config.json").string(), "--threads", "2", "run"}) == 0);

  const auto header = csv::split_line(slurp(out / "features.csv").substr(0, slurp(out / "features.csv").find('\n')));
  CHECK(header[0] == "subject_id");
  CHECK(header[1] == "W");
  CHECK(header[2] == "Y");
  CHECK(header.size() == 3 + 216 + 2);
  CHECK(fs::exists(out / "features.csv.schema.json"));
  CHECK(fs::exists(out / "model.bin"));
  CHECK(fs::exists(out / "scores.csv"));
  CHECK(policy_tree_from_json(slurp(out / "policy.json")).depth() <= 2);
  const auto value = json::parse(slurp(out / "value.json"));
  CHECK((value.contains("status") || value["weighting"] == "doubly_robust"));

  const auto m1 = json::parse(slurp(out / "manifest.json"));
  CHECK(m1["seed"] == 5);
  for (const auto& st : m1["stages"]) CHECK(st["status"] != "failed");

  REQUIRE(cli({"--config", (out / "config.json").string(), "run"}) == 0);
  const auto m2 = json::parse(slurp(out / "manifest.json"));
  for (const auto& st : m2["stages"]) CHECK(st["status"] == "cached");

  // A changed seed invalidates the downstream stages.
  REQUIRE(cli({"--config", (out / "config.json").string(), "--seed", "6", "run"}) == 0);
  const auto m3 = json::parse(slurp(out / "manifest.json"));
  bool forest_ran = false;
  for (const auto& st : m3["stages"]) forest_ran |= st["name"] == "forest" && st["status"] == "ran";
  CHECK(forest_ran);
}

TEST_CASE("cli: individual subcommands chain together") {
  Fixture fx;
  const auto out = testsupport::scratch_dir("cli_steps");
  const auto p = [&](const char* name) { return (out / name).string(); };
  REQUIRE(cli({"preprocess", "--in", fx.raw.string(), "--out", p("epochs")}) == 0);
  CHECK(fs::exists(out / "epochs" / "s10_b1.qc.json"));
  REQUIRE(cli({"features", "--in", p("epochs"), "--out", p("eeg.csv")}) == 0);
  REQUIRE(cli({"features", "--in", p("epochs"), "--out", p("f.csv"), "--clinical", fx.clinical.string()}) == 0);
  REQUIRE(cli({"fit-forest", "--features", p("f.csv"), "--out", p("m.bin"), "--num-trees", "100", "--min-node-size",
               "1", "--nuisance-folds", "2", "--subsample-ratio", "0.9"}) == 0);
  REQUIRE(cli({"ate", "--model", p("m.bin"), "--features", p("f.csv"), "--scores-out", p("scores.csv"), "--out",
               p("ate.json")}) == 0);
  const auto ate = json::parse(slurp(out / "ate.json"));
  CHECK(ate["n"] == 10);
  CHECK(ate["ci"].size() == 2);
  REQUIRE(cli({"blp-test", "--model", p("m.bin"), "--out", p("blp.json")}) == 0);
  REQUIRE(cli({"importance", "--model", p("m.bin"), "--features", p("f.csv"), "--out", p("imp.csv")}) == 0);
  CHECK(slurp(out / "imp.csv").rfind("rank,feature,importance\n", 0) == 0);
  for (const char* m : {"tree", "qlearn", "olearn"}) {
    const std::string pj = p("policy_") + m + ".json";
    REQUIRE(cli({"policy", "--scores", p("scores.csv"), "--features", p("f.csv"), "--method", m, "--out", pj,
                 "--folds", "3"}) == 0);
    REQUIRE(cli({"value", "--policy", pj, "--features", p("f.csv"), "--scores", p("scores.csv"), "--train-features",
                 p("f.csv"), "--out", p("value.json")}) == 0);
    const auto v = json::parse(slurp(out / "value.json"));
    CHECK(v["ids_overlap"] == true);
    CHECK(v["n"] == 10);
  }
}

TEST_CASE("cli: simulate-only config and byte-identical reruns") {
  const auto out = testsupport::scratch_dir("cli_sim");
  json cfg = {{"stages", {{"preprocess", false}, {"features", false}, {"forest", false}, {"scores", false},
                          {"policy", false}, {"value", false}, {"simulate", true}}},
              {"out_dir", (out / "a").string()},
              {"train_sizes", {80}},
              {"replicates", 2},
              {"n_test", 200},
              {"sim_trees", 30}};
  write(out / "a.json", cfg.dump());
  REQUIRE(cli({"--config", (out / "a.json").string(), "--threads", "1", "run"}) == 0);
  const auto m = json::parse(slurp(out / "a" / "manifest.json"));
  CHECK(m["stages"].size() == 1);
  CHECK(m["stages"][0]["name"] == "simulate");

  const std::vector<std::string> base{"simulate", "--train-n", "80", "--replicates", "2", "--n-test", "200", "--trees", "30"};
  auto with = [&](const std::string& threads, const std::string& dir) {
    std::vector<std::string> a{"--threads", threads};
    a.insert(a.end(), base.begin(), base.end());
    a.push_back("--out");
    a.push_back((out / dir).string());
    return cli(a);
  };
  REQUIRE(with("1", "s1") == 0);
  REQUIRE(with("4", "s4") == 0);
  for (const char* f : {"replicates.csv", "long.csv", "summary.json"})
    CHECK(slurp(out / "s1" / f) == slurp(out / "s4" / f));
}

TEST_CASE("pipeline helpers") {
  const auto split = train_test_split(10, 0.7, 3);
  CHECK(split.train.size() == 7);
  CHECK(split.test.size() == 3);
  CHECK(train_test_split(10, 0.7, 3).train == split.train);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  FeatureMatrix fm;
  fm.subject_ids = {"a", "b", "c", "d"};
  fm.column_names = {"x"};
  fm.column_kinds = {ColumnKind::continuous};
  fm.X = Eigen::MatrixXd::Zero(4, 1);
  fm.W = Eigen::VectorXd::Zero(4);
  fm.Y = (Eigen::VectorXd(4) << 1, 0, 0, 0).finished();
  const auto up = upsample_minority(fm, 1);
  CHECK(up.Y.size() == 6);
  CHECK(up.Y.sum() == 3);
  fm.Y(1) = 2;
  CHECK_THROWS(upsample_minority(fm, 1));
}
