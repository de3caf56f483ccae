#include "eegpolicy/serialize.hpp"

#include <cstring>
#include <fstream>

#include "eegpolicy/error.hpp"
#include "json.hpp"

namespace eegpolicy {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'B', 'P', 'C', 'F', 'v', '0', '0', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(b, 8);
  }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(b, 4);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void u32s(const std::vector<std::uint32_t>& v) {
    u64(v.size());
    for (auto x : v) u32(x);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::vector<std::uint32_t> u32s(std::size_t limit) {
    const auto n = u64();
    if (n > limit) throw Error(Errc::malformed_header, "model", "list length out of range");
    std::vector<std::uint32_t> v(n);
    for (auto& x : v) x = u32();
    return v;
  }
  void read(unsigned char* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw Error(Errc::length_mismatch, "model", "file truncated");
  }

 private:
  std::istream& in_;
};

json params_to_json(const ForestParams& p) {
  json j;
  j["num_trees"] = p.num_trees;
  j["subsample_ratio"] = p.subsample_ratio;
  j["honesty_ratio"] = p.honesty_ratio;
  j["mtry"] = p.mtry;
  j["min_node_size"] = p.min_node_size;
  j["seed"] = p.seed;
  j["max_depth"] = p.max_depth ? json(*p.max_depth) : json(nullptr);
  return j;
}

ForestParams params_from_json(const json& j) {
  ForestParams p;
  p.num_trees = j.at("num_trees").get<std::size_t>();
  p.subsample_ratio = j.at("subsample_ratio").get<double>();
  p.honesty_ratio = j.at("honesty_ratio").get<double>();
  p.mtry = j.at("mtry").get<std::size_t>();
  p.min_node_size = j.at("min_node_size").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("max_depth").is_null()) p.max_depth = j["max_depth"].get<std::size_t>();
  return p;
}

}  // namespace

void save_causal_forest(const CausalForestModel& m, const std::filesystem::path& path) {
  json j;
  j["format"] = "causal_forest";
  j["version"] = 1;
  j["params"] = params_to_json(m.params);
  j["n"] = m.size();
  j["d"] = m.X.cols();
  j["propensity_clip"] = m.propensity_clip;
  j["clipped_propensities"] = m.clipped_propensities;
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& nd : t.nodes) nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.depth});
    trees.push_back({{"nodes", nodes}});
  }
  j["trees"] = trees;
  const std::string text = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, path.string(), "cannot write model");
  out.write(kMagic, 8);
  Writer w(out);
  w.u64(text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index i = 0; i < m.X.rows(); ++i)
    for (Eigen::Index c = 0; c < m.X.cols(); ++c) w.f64(m.X(i, c));
  for (Eigen::Index i = 0; i < m.X.rows(); ++i) {
    w.f64(m.W(i));
    w.f64(m.Y(i));
    w.f64(m.m_hat(i));
    w.f64(m.e_hat(i));
    w.u32(static_cast<std::uint32_t>(m.nuisance_fold.empty() ? 0 : m.nuisance_fold[static_cast<std::size_t>(i)]));
  }
  for (const auto& t : m.trees) {
    w.u32s(t.grow_samples);
    w.u32s(t.estimate_samples);
    for (const auto& leaf : t.leaf_samples) w.u32s(leaf);
  }
  if (!out) throw Error(Errc::io, path.string(), "write failed");
}

CausalForestModel load_causal_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, path.string(), "cannot open model");
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw Error(Errc::malformed_header, "magic", "not a causal forest model file");
  Reader r(in);
  const auto len = r.u64();
  if (len > (1ull << 34)) throw Error(Errc::malformed_header, "model", "JSON block length out of range");
  std::string text(len, '\0');
  r.read(reinterpret_cast<unsigned char*>(text.data()), len);
  CausalForestModel m;
  std::size_t n = 0, d = 0;
  try {
    const json j = json::parse(text);
    m.params = params_from_json(j.at("params"));
    n = j.at("n").get<std::size_t>();
    d = j.at("d").get<std::size_t>();
    m.propensity_clip = j.at("propensity_clip").get<double>();
    m.clipped_propensities = j.at("clipped_propensities").get<std::size_t>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt.at("nodes"))
        t.nodes.push_back(TreeNode{jn[0].get<int>(), jn[1].get<double>(), jn[2].get<int>(), jn[3].get<int>(), jn[4].get<int>()});
      m.trees.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, "model", e.what());
  }
  const auto N = static_cast<Eigen::Index>(n);
  m.X.resize(N, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index c = 0; c < m.X.cols(); ++c) m.X(i, c) = r.f64();
  m.W.resize(N);
  m.Y.resize(N);
  m.m_hat.resize(N);
  m.e_hat.resize(N);
  m.nuisance_fold.resize(n);
  for (Eigen::Index i = 0; i < N; ++i) {
    m.W(i) = r.f64();
    m.Y(i) = r.f64();
    m.m_hat(i) = r.f64();
    m.e_hat(i) = r.f64();
    m.nuisance_fold[static_cast<std::size_t>(i)] = static_cast<int>(r.u32());
  }
  for (auto& t : m.trees) {
    for (const auto& nd : t.nodes)
      if (!nd.is_leaf() && (nd.feature >= static_cast<int>(d) || nd.left < 0 || nd.right < 0 ||
                            nd.left >= static_cast<int>(t.nodes.size()) || nd.right >= static_cast<int>(t.nodes.size())))
        throw Error(Errc::malformed_header, "trees", "node reference out of range");
    t.grow_samples = r.u32s(n);
    t.estimate_samples = r.u32s(n);
    t.leaf_samples.resize(t.nodes.size());
    for (auto& leaf : t.leaf_samples) {
      leaf = r.u32s(n);
      for (auto v : leaf)
        if (v >= n) throw Error(Errc::malformed_header, "leaf_samples", "row index out of range");
    }
  }
  return m;
}

}  // namespace eegpolicy
