#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pwcc/errors.hpp"
#include "pwcc/geometry.hpp"
#include "pwcc/gibbs.hpp"
#include "pwcc/potential.hpp"

namespace pwcc {

// Flat structured-text config:
//   [potential] kind/r/a/table
//   [space]     d/norm
//   [box]       sides/boundary
//   [run]       subcommand parameters
// Full-line comments start with '#' or ';'. Unknown sections or keys are
// errors, not warnings. Paths are resolved relative to the config file.

struct ConfigEntry {
  std::string value;
  int line = 0;
};

struct ConfigFile {
  std::map<std::string, std::map<std::string, ConfigEntry>> sections;
  std::filesystem::path dir;  // directory of the file, for relative paths
  std::string path;           // display name for diagnostics

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
  }

  const ConfigEntry* find(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string line_tag(const std::string& path, int line) {
  return path + ":" + std::to_string(line);
}

}  // namespace detail

inline ConfigFile parse_config_text(const std::string& text,
                                    const std::string& display_path,
                                    const std::filesystem::path& dir) {
  ConfigFile cfg;
  cfg.dir = dir;
  cfg.path = display_path;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("BadSyntax",
                          "unterminated section header at " +
                              detail::line_tag(display_path, line_no));
      section = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
      if (section.empty())
        throw ConfigError("BadSyntax", "empty section name at " +
                                           detail::line_tag(display_path, line_no));
      cfg.sections[section];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("BadSyntax", "expected 'key = value' at " +
                                         detail::line_tag(display_path, line_no));
    if (section.empty())
      throw ConfigError("BadSyntax", "key outside any section at " +
                                         detail::line_tag(display_path, line_no));
    std::string key = detail::lower(detail::trim(line.substr(0, eq)));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("BadSyntax",
                        "empty key at " + detail::line_tag(display_path, line_no));
    auto& sec = cfg.sections[section];
    if (sec.count(key))
      throw ConfigError("DuplicateKey",
                        "duplicate key '" + key + "' at " +
                            detail::line_tag(display_path, line_no),
                        section + "." + key);
    sec[key] = ConfigEntry{value, line_no};
  }
  return cfg;
}

inline ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("FileNotFound", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::filesystem::path p(path);
  return parse_config_text(buf.str(), path, p.has_parent_path() ? p.parent_path()
                                                                : std::filesystem::path("."));
}

// every key the tool understands, per section
inline void check_known_keys(const ConfigFile& cfg) {
  static const std::map<std::string, std::vector<std::string>> known = {
      {"potential", {"kind", "r", "a", "table"}},
      {"space", {"d", "norm"}},
      {"box", {"sides", "boundary"}},
      {"run",
       {"lambda", "c_phi", "k", "k_list", "samples", "n", "seed", "workers",
        "confidence", "format", "out", "method", "identity", "v", "points",
        "quad_nodes", "sweep", "k_max"}},
  };
  for (const auto& [section, keys] : cfg.sections) {
    auto it = known.find(section);
    if (it == known.end())
      throw ConfigError("UnknownSection", "unknown section [" + section + "] in " + cfg.path,
                        section);
    for (const auto& [key, entry] : keys) {
      bool ok = false;
      for (const std::string& k : it->second)
        if (k == key) { ok = true; break; }
      if (!ok)
        throw ConfigError("UnknownKey",
                          "unknown key '" + key + "' at " +
                              detail::line_tag(cfg.path, entry.line),
                          section + "." + key);
    }
  }
}

namespace detail {

inline double parse_double(const std::string& value, const std::string& field) {
  std::string v = trim(value);
  std::string lv = lower(v);
  if (lv == "inf" || lv == "infinity")
    return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("BadValue", "expected a number, got '" + value + "'", field);
  }
  if (used != v.size())
    throw ConfigError("BadValue", "trailing characters in number '" + value + "'",
                      field);
  return out;
}

inline long long parse_int(const std::string& value, const std::string& field) {
  double d = parse_double(value, field);
  long long out = static_cast<long long>(d);
  if (!(d == static_cast<double>(out)))
    throw ConfigError("BadValue", "expected an integer, got '" + value + "'", field);
  return out;
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& field) {
  long long v = parse_int(value, field);
  if (v < 0)
    throw ConfigError("BadValue", "expected a nonnegative integer", field);
  return static_cast<std::uint64_t>(v);
}

// "5x5" or "8" or "4x6x2"
inline std::vector<double> parse_sides(const std::string& value, const std::string& field) {
  std::vector<double> out;
  std::string cur;
  std::string v = trim(value);
  for (char c : v) {
    if (c == 'x' || c == 'X') {
      out.push_back(parse_double(cur, field));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (trim(cur).empty())
    throw ConfigError("BadValue", "expected side lengths like '5x5'", field);
  out.push_back(parse_double(cur, field));
  return out;
}

// "2, 3.5" -> one point; coordinates comma-separated
inline std::vector<double> parse_point(const std::string& value, const std::string& field) {
  std::vector<double> out;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      out.push_back(parse_double(cur, field));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (trim(cur).empty())
    throw ConfigError("BadValue", "expected coordinates like '2,3'", field);
  out.push_back(parse_double(cur, field));
  return out;
}

// "2,2; 2.5,2" -> flat list of points
inline std::vector<double> parse_points(const std::string& value,
                                        const std::string& field) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&]() {
    std::vector<double> pt = parse_point(cur, field);
    out.insert(out.end(), pt.begin(), pt.end());
    cur.clear();
  };
  for (char c : value) {
    if (c == ';')
      flush();
    else
      cur += c;
  }
  if (!trim(cur).empty()) flush();
  if (out.empty())
    throw ConfigError("BadValue", "expected points like '2,2; 2.5,2'", field);
  return out;
}

}  // namespace detail

// CSV with header "s,phi": plateau boundaries and values, ascending s,
// "inf" marking a hard plateau. phi takes values[i] on [s[i-1], s[i]) and 0
// beyond the last s.
inline Potential load_radial_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("FileNotFound", "cannot open radial table: " + path,
                      "potential.table");
  std::string line;
  int line_no = 0;
  std::vector<double> radii, values;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!header_seen) {
      std::string squashed;
      for (char c : t)
        if (!std::isspace(static_cast<unsigned char>(c))) squashed += c;
      if (detail::lower(squashed) != "s,phi")
        throw ConfigError("BadValue",
                          "radial table must start with header 's,phi' (" +
                              detail::line_tag(path, line_no) + ")",
                          "potential.table");
      header_seen = true;
      continue;
    }
    std::size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw ConfigError("BadValue", "expected 's,phi' row at " +
                                        detail::line_tag(path, line_no),
                        "potential.table");
    radii.push_back(detail::parse_double(t.substr(0, comma), "potential.table"));
    values.push_back(detail::parse_double(t.substr(comma + 1), "potential.table"));
  }
  if (!header_seen)
    throw ConfigError("EmptyInput", "radial table has no header row: " + path,
                      "potential.table");
  if (radii.empty())
    throw ConfigError("EmptyInput", "radial table has no rows: " + path,
                      "potential.table");
  return Potential::radial_table(std::move(radii), std::move(values));
}

inline Potential potential_from_config(const ConfigFile& cfg) {
  const ConfigEntry* kind = cfg.find("potential", "kind");
  if (!kind)
    throw ConfigError("MissingKey", "config needs potential.kind",
                      "potential.kind");
  std::string name;
  for (char c : detail::lower(kind->value))
    if (c != '_' && c != '-' && !std::isspace(static_cast<unsigned char>(c)))
      name += c;

  auto radius = [&](double fallback) {
    const ConfigEntry* e = cfg.find("potential", "r");
    return e ? detail::parse_double(e->value, "potential.r") : fallback;
  };

  if (name == "hardsphere") return Potential::hard_sphere(radius(1.0));
  if (name == "hardcube") return Potential::hard_cube(radius(1.0));
  if (name == "strauss") {
    const ConfigEntry* a = cfg.find("potential", "a");
    if (!a)
      throw ConfigError("MissingKey", "strauss potential needs potential.a",
                        "potential.a");
    return Potential::strauss(radius(1.0),
                              detail::parse_double(a->value, "potential.a"));
  }
  if (name == "radialtable") {
    const ConfigEntry* t = cfg.find("potential", "table");
    if (!t)
      throw ConfigError("MissingKey", "radial table potential needs potential.table",
                        "potential.table");
    std::filesystem::path p(t->value);
    if (p.is_relative()) p = cfg.dir / p;
    return load_radial_table_csv(p.string());
  }
  throw ConfigError("BadValue",
                    "unknown potential kind '" + kind->value +
                        "' (expected hard_sphere, hard_cube, strauss, radial_table)",
                    "potential.kind");
}

inline Space space_from_config(const ConfigFile& cfg) {
  Space space;
  if (const ConfigEntry* e = cfg.find("space", "d"))
    space.d = static_cast<int>(detail::parse_int(e->value, "space.d"));
  if (const ConfigEntry* e = cfg.find("space", "norm")) {
    std::string n = detail::lower(detail::trim(e->value));
    if (!n.empty() && n.front() == '"' && n.back() == '"' && n.size() >= 2)
      n = n.substr(1, n.size() - 2);
    if (n == "l2")
      space.norm = Norm::L2;
    else if (n == "linf")
      space.norm = Norm::Linf;
    else
      throw ConfigError("BadValue",
                        "unknown norm '" + e->value + "' (expected l2 or linf)",
                        "space.norm");
  }
  space.validate();
  return space;
}

inline std::optional<BoxRegion> box_from_config(const ConfigFile& cfg) {
  if (!cfg.sections.count("box")) return std::nullopt;
  const ConfigEntry* sides = cfg.find("box", "sides");
  if (!sides)
    throw ConfigError("MissingKey", "box section needs box.sides", "box.sides");
  BoxRegion box;
  box.sides = detail::parse_sides(sides->value, "box.sides");
  if (const ConfigEntry* e = cfg.find("box", "boundary")) {
    std::string b = detail::lower(detail::trim(e->value));
    if (b == "free")
      box.boundary = Boundary::Free;
    else if (b == "periodic")
      box.boundary = Boundary::Periodic;
    else
      throw ConfigError("BadValue",
                        "unknown boundary '" + e->value +
                            "' (expected free or periodic)",
                        "box.boundary");
  }
  return box;
}

}  // namespace pwcc
