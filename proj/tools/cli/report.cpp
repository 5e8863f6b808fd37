#include "report.hpp"

#include <fstream>
#include <system_error>

#include "phaselock/errors.hpp"

namespace phaselock::cli {

void to_json(Json& j, const Report& r) {
  j = Json{{"command", r.command}, {"config", r.config}, {"metrics", r.metrics}, {"artifacts", r.artifacts}};
}

void from_json(const Json& j, Report& r) {
  j.at("command").get_to(r.command);
  r.config = j.at("config");
  r.metrics = j.at("metrics");
  j.at("artifacts").get_to(r.artifacts);
}

std::string Report::serialize() const { return Json(*this).dump(2) + "\n"; }

Report Report::parse(const std::string& text) { return Json::parse(text).get<Report>(); }

OutputSet::OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

OutputSet::~OutputSet() {
  if (committed_) return;
  std::error_code ec;
  for (const auto& p : staged_) std::filesystem::remove(p, ec);
}

void OutputSet::add(const std::string& name, const std::string& contents) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  const auto tmp = dir_ / ("." + name + ".partial");
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + tmp.string());
  staged_.push_back(tmp);
  out << contents;
  if (!out) throw Error("short write to " + tmp.string());
  names_.push_back(name);
}

void OutputSet::commit() {
  for (std::size_t i = 0; i < names_.size(); ++i) std::filesystem::rename(staged_[i], dir_ / names_[i]);
  committed_ = true;
}

}  // namespace phaselock::cli
