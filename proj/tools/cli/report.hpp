#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace phaselock::cli {

using Json = nlohmann::json;

/// Structured result of one command: what ran, with which effective
/// configuration, what it measured, and which files it wrote.
struct Report {
  std::string command;
  Json config = Json::object();
  Json metrics = Json::object();
  std::vector<std::string> artifacts;

  std::string serialize() const;
  static Report parse(const std::string& text);
};

void to_json(Json& j, const Report& r);
void from_json(const Json& j, Report& r);

/// Files of one command run. Contents are staged under temporary names in
/// the output directory and renamed into place by commit(); if the set is
/// destroyed uncommitted, the staged files are removed.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir);
  ~OutputSet();
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  void add(const std::string& name, const std::string& contents);
  const std::vector<std::string>& names() const { return names_; }
  void commit();

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
  std::vector<std::filesystem::path> staged_;
  bool committed_ = false;
};

}  // namespace phaselock::cli
