#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dvta {

inline constexpr const char* kToolVersion = "dvta 0.1.0";

struct InputDigest {
  std::string path;
  std::uint64_t bytes = 0;
  std::uint32_t crc32 = 0;
};

struct PhaseTiming {
  std::string phase;
  double seconds = 0.0;
};

/// Provenance written next to every artifact: resolved config, input
/// digests, tool version and wall-clock time per phase.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<InputDigest> inputs;
  std::vector<std::string> outputs;
  std::vector<PhaseTiming> timings;
  std::string tool_version = kToolVersion;

  /// Hashes the file now. Directories are walked in sorted order.
  void add_input(const std::filesystem::path& path);
};

InputDigest digest_file(const std::filesystem::path& path);

nlohmann::json to_json(const RunManifest& manifest);

/// Writes the manifest as pretty JSON through a temporary file and rename.
void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

/// `artifact` + ".manifest.json", or dir/run_manifest.json for a directory.
std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);

/// Appends the elapsed time to `timings` when destroyed.
class PhaseTimer {
 public:
  PhaseTimer(std::vector<PhaseTiming>& timings, std::string phase);
  ~PhaseTimer();
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  std::vector<PhaseTiming>& timings_;
  std::string phase_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace dvta
