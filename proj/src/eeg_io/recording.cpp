#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "eegpolicy/csv.hpp"
#include "eegpolicy/eeg_io.hpp"
#include "eegpolicy/error.hpp"
#include "json.hpp"

namespace eegpolicy {

using nlohmann::json;

const char* to_string(Condition c) noexcept {
  return c == Condition::eyes_open ? "eyes_open" : "eyes_closed";
}

const char* short_name(Condition c) noexcept {
  return c == Condition::eyes_open ? "open" : "close";
}

Condition condition_from_string(const std::string& s) {
  if (s == "eyes_open" || s == "open") return Condition::eyes_open;
  if (s == "eyes_closed" || s == "close" || s == "closed") return Condition::eyes_closed;
  throw Error(Errc::malformed_header, "condition", "unknown condition '" + s + "'");
}

std::vector<std::string> Recording::channel_names() const {
  std::vector<std::string> names;
  names.reserve(channels.size());
  for (const auto& c : channels) names.push_back(c.name);
  return names;
}

int Recording::channel_index(const std::string& name) const {
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (channels[i].name == name) return static_cast<int>(i);
  return -1;
}

void Recording::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    throw Error(Errc::domain, "sample_rate_hz", "must be positive");
  if (static_cast<std::size_t>(data.rows()) != channels.size())
    throw Error(Errc::length_mismatch, "data", "row count differs from channel count");
  std::set<std::string> seen;
  for (const auto& c : channels) {
    if (!seen.insert(c.name).second)
      throw Error(Errc::duplicate_name, c.name, "duplicate channel name");
    if (c.position) {
      const auto& p = *c.position;
      const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      if (std::abs(norm - 1.0) > 1e-6)
        throw Error(Errc::domain, c.name, "channel position is not on the unit sphere");
    }
  }
}

namespace {

std::filesystem::path data_path_for(const std::filesystem::path& header_path, const json& header) {
  if (header.contains("data_file")) {
    if (!header["data_file"].is_string())
      throw Error(Errc::malformed_header, "data_file", "must be a string");
    return header_path.parent_path() / header["data_file"].get<std::string>();
  }
  auto p = header_path;
  p.replace_extension(".bin");
  return p;
}

template <class T>
T require(const json& header, const char* key) {
  if (!header.contains(key)) throw Error(Errc::malformed_header, key, "missing field");
  try {
    return header.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::malformed_header, key, "wrong type");
  }
}

void write_float32_le(std::ostream& out, const SignalMatrix& data) {
  std::vector<char> buf(static_cast<std::size_t>(data.size()) * 4);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      const float v = static_cast<float>(data(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int b = 0; b < 4; ++b) buf[k++] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

Recording load_recording(const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    // Optional <file>.meta.json carries the fields a CSV cannot; 250 Hz otherwise.
    auto meta_path = path;
    meta_path += ".meta.json";
    if (!std::filesystem::exists(meta_path)) return load_recording_csv(path, 250.0);
    std::ifstream meta_in(meta_path);
    json meta;
    try {
      meta_in >> meta;
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_header, "header", e.what());
    }
    auto rec = load_recording_csv(path, meta.value("sample_rate_hz", 250.0),
                                  condition_from_string(meta.value("condition", "eyes_open")),
                                  meta.value("block_index", 0));
    rec.subject_id = meta.value("subject_id", "");
    return rec;
  }
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, path.string(), "cannot open header");
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, "header", e.what());
  }
  if (!header.is_object()) throw Error(Errc::malformed_header, "header", "not a JSON object");

  Recording rec;
  const auto names = require<std::vector<std::string>>(header, "channel_names");
  if (names.empty()) throw Error(Errc::malformed_header, "channel_names", "empty");
  rec.sample_rate = require<double>(header, "sample_rate_hz");
  rec.condition = condition_from_string(require<std::string>(header, "condition"));
  rec.block_index = require<int>(header, "block_index");
  if (header.contains("subject_id")) rec.subject_id = require<std::string>(header, "subject_id");
  const auto n_samples = require<std::int64_t>(header, "n_samples");
  if (n_samples <= 0) throw Error(Errc::malformed_header, "n_samples", "must be positive");

  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw Error(Errc::duplicate_name, n, "duplicate channel name");
    rec.channels.push_back({n, std::nullopt});
  }
  if (header.contains("positions")) {
    const auto& pos = header["positions"];
    if (!pos.is_array() || pos.size() != names.size())
      throw Error(Errc::malformed_header, "positions", "one [x,y,z] per channel required");
    for (std::size_t i = 0; i < names.size(); ++i)
      rec.channels[i].position = pos[i].get<std::array<double, 3>>();
  }

  const auto bin_path = data_path_for(path, header);
  std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
  if (!bin) throw Error(Errc::io, bin_path.string(), "cannot open sample file");
  const auto bytes = static_cast<std::uint64_t>(bin.tellg());
  const std::uint64_t expected = static_cast<std::uint64_t>(names.size()) *
                                 static_cast<std::uint64_t>(n_samples) * 4u;
  if (bytes != expected)
    throw Error(Errc::length_mismatch, "n_samples",
                "sample file has " + std::to_string(bytes) + " bytes, header implies " +
                    std::to_string(expected));
  bin.seekg(0);
  std::vector<unsigned char> raw(bytes);
  bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));

  rec.data.resize(static_cast<Eigen::Index>(names.size()), n_samples);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rec.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < rec.data.cols(); ++c) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[k++]) << (8 * b);
      float v;
      std::memcpy(&v, &bits, 4);
      rec.data(r, c) = static_cast<double>(v);
    }
  }
  rec.validate();
  return rec;
}

Recording load_recording_csv(const std::filesystem::path& path, double sample_rate,
                             Condition condition, int block_index) {
  const auto table = csv::read(path);
  Recording rec;
  rec.sample_rate = sample_rate;
  rec.condition = condition;
  rec.block_index = block_index;
  std::set<std::string> seen;
  for (const auto& n : table.header) {
    if (n.empty()) throw Error(Errc::malformed_header, "header", "empty channel name");
    if (!seen.insert(n).second) throw Error(Errc::duplicate_name, n, "duplicate channel name");
    rec.channels.push_back({n, std::nullopt});
  }
  rec.data.resize(static_cast<Eigen::Index>(table.header.size()),
                  static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t s = 0; s < table.rows.size(); ++s) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const auto& cell = table.rows[s][c];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw Error(Errc::parse, table.header[c], "non-numeric sample '" + cell + "'");
      rec.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)) = v;
    }
  }
  rec.validate();
  return rec;
}

void save_recording(const Recording& rec, const std::filesystem::path& header_path) {
  rec.validate();
  auto bin_path = header_path;
  bin_path.replace_extension(".bin");
  json header;
  header["channel_names"] = rec.channel_names();
  header["sample_rate_hz"] = rec.sample_rate;
  header["condition"] = to_string(rec.condition);
  header["block_index"] = rec.block_index;
  header["n_samples"] = rec.num_samples();
  header["data_file"] = bin_path.filename().string();
  if (!rec.subject_id.empty()) header["subject_id"] = rec.subject_id;
  bool all_positions = !rec.channels.empty();
  for (const auto& c : rec.channels) all_positions = all_positions && c.position.has_value();
  if (all_positions) {
    json pos = json::array();
    for (const auto& c : rec.channels) pos.push_back(*c.position);
    header["positions"] = pos;
  }
  std::ofstream out(header_path);
  if (!out) throw Error(Errc::io, header_path.string(), "cannot write header");
  out << header.dump(2) << '\n';
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(Errc::io, bin_path.string(), "cannot write sample file");
  write_float32_le(bin, rec.data);
}

void save_recording_csv(const Recording& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, path.string(), "cannot write CSV");
  const auto names = rec.channel_names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << csv::escape(names[i]);
  out << '\n';
  for (Eigen::Index s = 0; s < rec.data.cols(); ++s) {
    for (Eigen::Index c = 0; c < rec.data.rows(); ++c)
      out << (c ? "," : "") << csv::format_double(rec.data(c, s));
    out << '\n';
  }
}

}  // namespace eegpolicy
