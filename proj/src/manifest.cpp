#include "repsim/manifest.hpp"

#include "repsim/csv.hpp"
#include "repsim/sha256.hpp"
#include "repsim/version.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>

namespace repsim {

using nlohmann::json;

json manifest_to_json(const RunManifest& m) {
  json outputs = json::array();
  for (const auto& f : m.outputs)
    outputs.push_back(json{{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return json{
      {"command", m.command},
      {"arguments", m.arguments},
      {"config", m.config_doc},
      {"master_seed", m.master_seed},
      {"version", m.version},
      {"started_utc", m.started_utc},
      {"finished_utc", m.finished_utc},
      {"outputs", outputs},
  };
}

RunManifest manifest_from_json(const json& doc) {
  RunManifest m;
  try {
    m.command = doc.at("command").get<std::string>();
    if (doc.contains("arguments")) m.arguments = doc.at("arguments").get<std::vector<std::string>>();
    m.config_doc = doc.at("config");
    (void)config_from_json(m.config_doc);  // validate now, fail early
    m.master_seed = doc.at("master_seed").get<std::uint64_t>();
    m.version = doc.value("version", "");
    m.started_utc = doc.value("started_utc", "");
    m.finished_utc = doc.value("finished_utc", "");
    if (doc.contains("outputs")) {
      for (const auto& f : doc.at("outputs")) {
        RunManifest::OutputFile out;
        out.path = f.at("path").get<std::string>();
        out.sha256 = f.at("sha256").get<std::string>();
        out.bytes = f.value("bytes", std::uint64_t{0});
        m.outputs.push_back(std::move(out));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest is malformed: ") + e.what());
  }
  return m;
}

RunManifest load_manifest_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return manifest_from_json(doc);
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ManifestWriter::ManifestWriter(std::string out_dir, std::string command,
                               std::vector<std::string> arguments, nlohmann::json config_doc,
                               std::uint64_t master_seed)
    : out_dir_(std::move(out_dir)) {
  manifest_.command = std::move(command);
  manifest_.arguments = std::move(arguments);
  manifest_.config_doc = std::move(config_doc);
  manifest_.master_seed = master_seed;
  manifest_.version = kVersion;
  manifest_.started_utc = utc_timestamp_now();
}

void ManifestWriter::emit(const std::string& filename, const std::string& content) {
  const auto path = std::filesystem::path(out_dir_) / filename;
  write_file_atomic(path.string(), content);
  RunManifest::OutputFile record;
  record.path = filename;
  record.sha256 = sha256_hex(content);
  record.bytes = content.size();
  manifest_.outputs.push_back(std::move(record));
}

void ManifestWriter::finalize() {
  manifest_.finished_utc = utc_timestamp_now();
  const auto path = std::filesystem::path(out_dir_) / "manifest.json";
  write_file_atomic(path.string(), manifest_to_json(manifest_).dump(2) + "\n");
}

} // namespace repsim
