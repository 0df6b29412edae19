#include "dcd/manifest.hpp"

#include "dcd/types.hpp"

#include <nlohmann/json.hpp>

#include <ctime>
#include <fstream>

namespace dcd {

void save_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j;
  j["command"] = m.command;
  j["toolkit_version"] = m.toolkit_version.empty() ? kVersion : m.toolkit_version;
  j["config"] = m.config;
  j["dataset_fingerprint"] = m.dataset_fingerprint;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = {{"checkpoints", m.checkpoints}, {"reports", m.reports}, {"logs", m.logs}};
  j["wall_seconds"] = m.wall_seconds;
  if (m.created_at.empty()) {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    j["created_at"] = buf;
  } else {
    j["created_at"] = m.created_at;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("corrupt manifest json: " + path);
  RunManifest m;
  m.command = j.value("command", "");
  m.toolkit_version = j.value("toolkit_version", "");
  m.config = j.value("config", std::map<std::string, std::string>{});
  m.dataset_fingerprint = j.value("dataset_fingerprint", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.inputs = j.value("inputs", std::vector<std::string>{});
  if (j.contains("outputs")) {
    m.checkpoints = j["outputs"].value("checkpoints", std::vector<std::string>{});
    m.reports = j["outputs"].value("reports", std::vector<std::string>{});
    m.logs = j["outputs"].value("logs", std::vector<std::string>{});
  }
  m.wall_seconds = j.value("wall_seconds", 0.0);
  m.created_at = j.value("created_at", "");
  return m;
}

}  // namespace dcd
