#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/error.hpp"
#include "json.hpp"

namespace eegpolicy {

namespace {

using Vec3 = std::array<double, 3>;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

Vec3 from_angles(double polar_deg, double azimuth_deg) {
  const double t = polar_deg * M_PI / 180.0;
  const double p = azimuth_deg * M_PI / 180.0;
  return {std::sin(t) * std::sin(p), std::sin(t) * std::cos(p), std::cos(t)};
}

Vec3 slerp(const Vec3& a, const Vec3& b, double t) {
  const double dot = std::clamp(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], -1.0, 1.0);
  const double omega = std::acos(dot);
  if (omega < 1e-12) return a;
  const double wa = std::sin((1.0 - t) * omega) / std::sin(omega);
  const double wb = std::sin(t * omega) / std::sin(omega);
  Vec3 out{wa * a[0] + wb * b[0], wa * a[1] + wb * b[1], wa * a[2] + wb * b[2]};
  const double norm = std::sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2]);
  for (double& v : out) v /= norm;
  return out;
}

struct Row {
  const char* prefix;        // canonical 10-10 row
  double midline_polar;      // degrees from vertex along the midline
  double midline_azimuth;    // 0 front, 180 back
  double equator_azimuth;    // azimuth where the row meets the 10% ring
  std::vector<int> numbers;  // electrode numbers present in the row
  bool ring_row;             // Fp / O: pair 1 sits on the ring itself
};

// Idealized spherical head: Fpz, T7, Oz, T8 on the equator, 10% steps of 22.5 degrees
// along the midline and 18 degrees around the ring.
std::vector<Row> rows() {
  return {
      {"fp", 90.0, 0.0, 18.0, {1, 2}, true},
      {"af", 67.5, 0.0, 36.0, {1, 2, 3, 4, 5, 6, 7, 8}, false},
      {"f", 45.0, 0.0, 54.0, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, false},
      {"fc", 22.5, 0.0, 72.0, {1, 2, 3, 4, 5, 6}, false},
      {"ft", 22.5, 0.0, 72.0, {7, 8, 9, 10}, false},
      {"c", 0.0, 0.0, 90.0, {1, 2, 3, 4, 5, 6}, false},
      {"t", 0.0, 0.0, 90.0, {7, 8, 9, 10}, false},
      {"cp", 22.5, 180.0, 108.0, {1, 2, 3, 4, 5, 6}, false},
      {"tp", 22.5, 180.0, 108.0, {7, 8, 9, 10}, false},
      {"p", 45.0, 180.0, 126.0, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, false},
      {"po", 67.5, 180.0, 144.0, {1, 2, 3, 4, 5, 6, 7, 8}, false},
      {"o", 90.0, 180.0, 162.0, {1, 2}, true},
  };
}

Montage build_standard_1010() {
  Montage m;
  for (const auto& row : rows()) {
    const Vec3 mid = from_angles(row.midline_polar, row.midline_azimuth);
    if (std::string(row.prefix) != "ft" && std::string(row.prefix) != "t" &&
        std::string(row.prefix) != "tp") {
      m.names.push_back(std::string(row.prefix) + "z");
      m.positions.push_back(mid);
    }
    for (int number : row.numbers) {
      const bool left = number % 2 == 1;
      const int pair = (number + 1) / 2;
      const double az = left ? -row.equator_azimuth : row.equator_azimuth;
      // back rows measure the ring azimuth from the front as well
      const Vec3 ring = from_angles(90.0, az);
      const double t = row.ring_row ? 1.0 : pair / 4.0;
      m.names.push_back(std::string(row.prefix) + std::to_string(number));
      m.positions.push_back(slerp(mid, ring, t));
    }
  }
  return m;
}

std::string canonical_alias(const std::string& name) {
  static const std::pair<const char*, const char*> aliases[] = {
      {"t3", "t7"}, {"t4", "t8"}, {"t5", "p7"}, {"t6", "p8"}};
  for (const auto& [from, to] : aliases)
    if (name == from) return to;
  return name;
}

}  // namespace

std::optional<std::array<double, 3>> Montage::find(const std::string& channel) const {
  const auto key = canonical_alias(lower(channel));
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == key) return positions[i];
  return std::nullopt;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("EEGPOLICY_DATA_DIR")) return env;
#ifdef EEGPOLICY_DATA_DIR
  return EEGPOLICY_DATA_DIR;
#else
  return "data";
#endif
}

Montage load_montage(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, path.string(), "cannot open montage");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_header, "montage", e.what());
  }
  Montage m;
  if (!j.contains("channels") || !j["channels"].is_object())
    throw Error(Errc::malformed_header, "channels", "montage needs a channels object");
  for (const auto& [name, pos] : j["channels"].items()) {
    auto p = pos.get<std::array<double, 3>>();
    const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (norm <= 0.0) throw Error(Errc::domain, name, "zero position");
    for (double& v : p) v /= norm;
    m.names.push_back(lower(name));
    m.positions.push_back(p);
  }
  return m;
}

const Montage& standard_1010_montage() {
  static const Montage montage = [] {
    const auto path = default_data_dir() / "standard_1010.json";
    if (std::filesystem::exists(path)) return load_montage(path);
    return build_standard_1010();
  }();
  return montage;
}

std::vector<std::string> apply_montage(Recording& rec, const Montage& montage) {
  std::vector<std::string> missing;
  for (auto& c : rec.channels) {
    if (auto p = montage.find(c.name))
      c.position = *p;
    else
      missing.push_back(c.name);
  }
  return missing;
}

const std::vector<std::string>& common_channels_54() {
  static const std::vector<std::string> names = {
      "Fp1", "Fpz", "Fp2", "AF3", "AF4", "F7",  "F5",  "F3",  "F1",  "Fz",  "F2",
      "F4",  "F6",  "F8",  "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "T7",
      "C5",  "C3",  "C1",  "Cz",  "C2",  "C4",  "C6",  "T8",  "CP5", "CP3", "CP1",
      "CPz", "CP2", "CP4", "CP6", "P7",  "P5",  "P3",  "P1",  "Pz",  "P2",  "P4",
      "P6",  "P8",  "PO7", "PO3", "POz", "PO4", "PO8", "O1",  "Oz",  "O2"};
  return names;
}

// Exposed for the montage export in the CLI.
Montage built_in_standard_1010() { return build_standard_1010(); }

}  // namespace eegpolicy
