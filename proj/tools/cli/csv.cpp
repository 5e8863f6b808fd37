#include "csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace phaselock::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Table parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  Table table;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    std::vector<double> row;
    row.reserve(fields.size());
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (first) {
      first = false;
      width = fields.size();
      if (!numeric) {
        table.header = fields;
        continue;
      }
    }
    if (fields.size() != width) {
      std::ostringstream os;
      os << "line " << line_no << ": expected " << width << " fields, found " << fields.size();
      throw InvalidArgument(os.str());
    }
    if (!numeric) {
      std::ostringstream os;
      os << "line " << line_no << ": non-numeric field";
      throw InvalidArgument(os.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument("CSV has no data rows");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

SignalMatrix read_signal_csv(const std::filesystem::path& path) {
  const Table t = read_csv(path);
  SignalMatrix s;
  s.data = t.values.transpose();
  s.validate();
  return s;
}

std::string format_number(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

std::string to_csv(const RowMatrix& values, const std::vector<std::string>& header, int precision) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out += ',';
      out += header[i];
    }
    out += '\n';
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_number(values(r, c), precision);
    }
    out += '\n';
  }
  return out;
}

std::string signal_to_csv(const RowMatrix& channels_by_time, const std::string& prefix, int precision) {
  std::vector<std::string> header;
  for (Eigen::Index i = 0; i < channels_by_time.rows(); ++i) header.push_back(prefix + std::to_string(i));
  return to_csv(channels_by_time.transpose(), header, precision);
}

}  // namespace phaselock::cli
