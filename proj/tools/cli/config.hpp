#pragma once

// Run configuration: command defaults, overlaid by a JSON config file, then
// by command-line flags. Keys absent from the defaults are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phaselock/errors.hpp"
#include "report.hpp"

namespace phaselock::cli {

/// Bad flags, bad config documents, unreadable or malformed inputs (exit 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

Json read_json_file(const std::filesystem::path& path);

/// Checks `overlay` against the shape of `defaults` and merges it in. A
/// default of null accepts any value at that key.
void merge_checked(Json& target, const Json& overlay, const std::string& where = "");

/// Typed read access with messages that name the full key path.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  Node at(const std::string& key) const;
  bool is_null(const std::string& key) const;

  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::uint64_t uinteger(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::string string(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::size_t> indices(const std::string& key) const;
  Eigen::MatrixXd matrix(const std::string& key) const;

 private:
  const Json& get(const std::string& key) const;
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& j_;
  std::string path_;
};

Json matrix_to_json(const Eigen::MatrixXd& m);

}  // namespace phaselock::cli
