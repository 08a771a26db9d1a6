#pragma once

#include "repsim/config.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace repsim {

// Record of one CLI run: the effective config document, seed, tool version,
// wall timestamps and a digest per emitted file. The config is kept as the
// exact JSON the run was parsed from, so replaying a manifest reconstructs
// the configuration bit-for-bit.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  nlohmann::json config_doc;
  std::uint64_t master_seed = 0;
  std::string version;
  std::string started_utc;
  std::string finished_utc;

  struct OutputFile {
    std::string path;    // relative to the output directory
    std::string sha256;
    std::uint64_t bytes = 0;
  };
  std::vector<OutputFile> outputs;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);
RunManifest load_manifest_file(const std::string& path);

std::string utc_timestamp_now();

// Collects outputs written during a run and finalizes the manifest file.
class ManifestWriter {
 public:
  ManifestWriter(std::string out_dir, std::string command, std::vector<std::string> arguments,
                 nlohmann::json config_doc, std::uint64_t master_seed);

  // Writes a file under the output directory (atomically) and records its
  // digest.
  void emit(const std::string& filename, const std::string& content);

  const std::string& out_dir() const { return out_dir_; }

  // Writes manifest.json; call last.
  void finalize();

 private:
  std::string out_dir_;
  RunManifest manifest_;
};

} // namespace repsim
