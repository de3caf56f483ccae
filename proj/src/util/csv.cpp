#include "eegpolicy/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "eegpolicy/error.hpp"

namespace eegpolicy::csv {

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

Table parse(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      // tolerate a UTF-8 byte order mark
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      t.header = split_line(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size())
      throw Error(Errc::parse, "line " + std::to_string(lineno),
                  "expected " + std::to_string(t.header.size()) + " fields, got " +
                      std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(Errc::parse, "header", "empty CSV");
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace eegpolicy::csv
