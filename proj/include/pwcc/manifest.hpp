#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "pwcc/output.hpp"

namespace pwcc {

inline constexpr const char* kToolVersion = "1.0.0";

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// content hash over the resolved config plus every referenced input file
inline std::string hash_inputs(const Json& config_echo,
                               const std::vector<std::string>& input_files) {
  std::uint64_t h = fnv1a64(config_echo.dump());
  for (const std::string& f : input_files) {
    h = fnv1a64(f, h);
    std::ifstream in(f, std::ios::binary);
    if (!in) continue;  // existence was validated at parse time
    std::ostringstream buf;
    buf << in.rdbuf();
    h = fnv1a64(buf.str(), h);
  }
  return hash_hex(h);
}

inline std::string iso_timestamp_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Everything needed to reproduce a run bit for bit: the resolved parameters
// (seed included), the tool version, and a content hash of the inputs.
// `created` and the timings are informational and excluded from the hash.
struct RunManifest {
  std::string subcommand;
  Json config_echo = Json::object();
  std::string input_hash;
  std::string seed_source;  // flag | env | config | random
  double wall_seconds = 0.0;
  Json timings = Json::object();
  std::string created;

  Json to_json() const {
    Json j;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = subcommand;
    j["config"] = config_echo;
    j["input_hash"] = input_hash;
    j["seed_source"] = seed_source;
    j["wall_seconds"] = wall_seconds;
    j["timings"] = timings;
    j["created"] = created;
    return j;
  }

  static RunManifest from_json(const Json& j) {
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config_echo = j.at("config");
    m.input_hash = j.value("input_hash", std::string());
    m.seed_source = j.value("seed_source", std::string());
    m.wall_seconds = j.value("wall_seconds", 0.0);
    if (j.contains("timings")) m.timings = j.at("timings");
    m.created = j.value("created", std::string());
    return m;
  }
};

inline std::string manifest_path_for(const std::string& result_path) {
  return result_path + ".manifest.json";
}

inline void write_manifest(const std::string& result_path, const RunManifest& m) {
  write_json_file(manifest_path_for(result_path), m.to_json());
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("FileNotFound", "cannot open manifest: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("BadValue", "cannot parse manifest " + path + ": " + e.what());
  }
  return RunManifest::from_json(j);
}

}  // namespace pwcc
