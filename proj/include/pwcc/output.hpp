#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "pwcc/errors.hpp"
#include "pwcc/gibbs.hpp"

namespace pwcc {

using Json = nlohmann::json;

// temp + rename so readers never observe a half-written file
inline void atomic_write_text(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw DomainError("WriteFailed", "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw DomainError("WriteFailed", "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw DomainError("WriteFailed",
                      "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_json_file(const std::string& path, const Json& j) {
  atomic_write_text(path, j.dump(2) + "\n");
}

// lossless for round-tripping through text
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string config_jsonl_line(const PointConfiguration& c) {
  Json pts = Json::array();
  for (int i = 0; i < c.count(); ++i) {
    Json pt = Json::array();
    for (double x : c.point(i)) pt.push_back(x);
    pts.push_back(std::move(pt));
  }
  Json line;
  line["points"] = std::move(pts);
  line["energy"] = c.energy;
  return line.dump();
}

// one configuration per line: {"energy": h, "points": [[x,y],...]}
inline void write_configs_jsonl(const std::string& path,
                                const GibbsSampleBatch& batch) {
  std::string buf;
  for (const PointConfiguration& c : batch.configs) {
    buf += config_jsonl_line(c);
    buf += '\n';
  }
  atomic_write_text(path, buf);
}

}  // namespace pwcc
