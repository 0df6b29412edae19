#pragma once

#include <map>
#include <string>
#include <vector>

namespace dcd {

// Record of one CLI run: everything needed to re-run it byte-for-byte, plus
// the paths of whatever it produced.
struct RunManifest {
  std::string command;
  std::string toolkit_version;
  std::map<std::string, std::string> config;
  std::string dataset_fingerprint;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> checkpoints;
  std::vector<std::string> reports;
  std::vector<std::string> logs;
  double wall_seconds = 0.0;
  std::string created_at;  // informational; idempotence is modulo timestamps
};

void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

}  // namespace dcd
