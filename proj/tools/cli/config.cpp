#include "config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace phaselock::cli {

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

void merge_checked(Json& target, const Json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw UsageError((where.empty() ? "config" : where) + " must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!target.contains(it.key())) throw UsageError("unknown config key " + key);
    Json& slot = target[it.key()];
    if (slot.is_object() && it.value().is_object())
      merge_checked(slot, it.value(), key);
    else if (slot.is_object())
      throw UsageError("config key " + key + " must be an object");
    else
      slot = it.value();
  }
}

Node Node::at(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_object()) throw UsageError("config key " + name(key) + " must be an object");
  return Node(v, name(key));
}

bool Node::is_null(const std::string& key) const { return !j_.contains(key) || j_.at(key).is_null(); }

const Json& Node::get(const std::string& key) const {
  if (!j_.contains(key)) throw UsageError("missing config key " + name(key));
  return j_.at(key);
}

double Node::number(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_number()) throw UsageError("config key " + name(key) + " must be a number");
  return v.get<double>();
}

std::int64_t Node::integer(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_number_integer()) throw UsageError("config key " + name(key) + " must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t Node::uinteger(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw UsageError("config key " + name(key) + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

bool Node::boolean(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_boolean()) throw UsageError("config key " + name(key) + " must be true or false");
  return v.get<bool>();
}

std::string Node::string(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_string()) throw UsageError("config key " + name(key) + " must be a string");
  return v.get<std::string>();
}

std::vector<double> Node::numbers(const std::string& key) const {
  const Json& v = get(key);
  if (!v.is_array()) throw UsageError("config key " + name(key) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw UsageError("config key " + name(key) + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::size_t> Node::indices(const std::string& key) const {
  const Json& v = get(key);
  const std::string msg = "config key " + name(key) + " must be an array of nonnegative integers";
  if (!v.is_array()) throw UsageError(msg);
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0) throw UsageError(msg);
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

Eigen::MatrixXd Node::matrix(const std::string& key) const {
  const Json& v = get(key);
  const std::string msg = "config key " + name(key) + " must be a non-empty array of equal-length number rows";
  if (!v.is_array() || v.empty() || !v[0].is_array()) throw UsageError(msg);
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = v[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw UsageError(msg);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Json& e = row[static_cast<std::size_t>(c)];
      if (!e.is_number()) throw UsageError(msg);
      m(r, c) = e.get<double>();
    }
  }
  return m;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace phaselock::cli
