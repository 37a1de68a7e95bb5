#include "dvta/cli/run_manifest.hpp"

#include <algorithm>

#include "dvta/dataio/crc32.hpp"
#include "dvta/dataio/feature_file.hpp"

namespace dvta {

InputDigest digest_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {path.string(), bytes.size(), crc32(bytes)};
}

void RunManifest::add_input(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) {
    inputs.push_back(digest_file(path));
    return;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) inputs.push_back(digest_file(f));
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& d : m.inputs) {
    inputs.push_back({{"path", d.path}, {"bytes", d.bytes}, {"crc32", d.crc32}});
  }
  nlohmann::json timings = nlohmann::json::array();
  for (const auto& t : m.timings) timings.push_back({{"phase", t.phase}, {"seconds", t.seconds}});
  return {{"tool_version", m.tool_version},
          {"command", m.command},
          {"config", m.config},
          {"inputs", inputs},
          {"outputs", m.outputs},
          {"timings", timings}};
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  write_text_atomic(path, to_json(manifest).dump(2) + "\n");
}

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact) {
  if (std::filesystem::is_directory(artifact)) return artifact / "run_manifest.json";
  return std::filesystem::path(artifact.string() + ".manifest.json");
}

PhaseTimer::PhaseTimer(std::vector<PhaseTiming>& timings, std::string phase)
    : timings_(timings), phase_(std::move(phase)), start_(std::chrono::steady_clock::now()) {}

PhaseTimer::~PhaseTimer() {
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
  timings_.push_back({phase_, elapsed.count()});
}

}  // namespace dvta
