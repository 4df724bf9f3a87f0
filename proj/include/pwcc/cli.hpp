#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pwcc/chain.hpp"
#include "pwcc/config.hpp"
#include "pwcc/delta.hpp"
#include "pwcc/errors.hpp"
#include "pwcc/exact_v2.hpp"
#include "pwcc/gibbs.hpp"
#include "pwcc/manifest.hpp"
#include "pwcc/output.hpp"
#include "pwcc/recursion.hpp"

namespace pwcc {

namespace cli_detail {

// ---- resolved-scenario serialization -------------------------------------
// Every subcommand executes from a fully resolved JSON echo (also stored in
// the manifest), so a manifest re-run goes through the exact same code path.

inline Json potential_to_json(const Potential& p) {
  Json j;
  j["kind"] = p.kind_name();
  if (p.kind == Potential::Kind::RadialTable) {
    j["radii"] = p.radii;
    Json vals = Json::array();
    for (double v : p.values)
      vals.push_back(std::isinf(v) ? Json("inf") : Json(v));
    j["values"] = std::move(vals);
    j["cutoff"] = p.table_cutoff;
  } else {
    j["r"] = p.r;
    if (p.kind == Potential::Kind::Strauss) j["a"] = p.a;
  }
  return j;
}

inline Potential potential_from_json(const Json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "hard_sphere") return Potential::hard_sphere(j.at("r").get<double>());
  if (kind == "hard_cube") return Potential::hard_cube(j.at("r").get<double>());
  if (kind == "strauss")
    return Potential::strauss(j.at("r").get<double>(), j.at("a").get<double>());
  if (kind == "radial_table") {
    std::vector<double> radii = j.at("radii").get<std::vector<double>>();
    std::vector<double> values;
    for (const Json& v : j.at("values"))
      values.push_back(v.is_string() ? std::numeric_limits<double>::infinity()
                                     : v.get<double>());
    return Potential::radial_table(std::move(radii), std::move(values),
                                   j.value("cutoff", 0.0));
  }
  throw ConfigError("BadValue", "unknown potential kind in manifest: " + kind,
                    "potential.kind");
}

inline Json space_to_json(const Space& s) {
  Json j;
  j["d"] = s.d;
  j["norm"] = s.norm == Norm::L2 ? "l2" : "linf";
  return j;
}

inline Space space_from_json(const Json& j) {
  Space s;
  s.d = j.at("d").get<int>();
  s.norm = j.at("norm").get<std::string>() == "linf" ? Norm::Linf : Norm::L2;
  s.validate();
  return s;
}

inline Json box_to_json(const BoxRegion& b) {
  Json j;
  j["sides"] = b.sides;
  j["boundary"] = boundary_name(b.boundary);
  return j;
}

inline BoxRegion box_from_json(const Json& j) {
  BoxRegion b;
  b.sides = j.at("sides").get<std::vector<double>>();
  b.boundary = j.at("boundary").get<std::string>() == "periodic"
                   ? Boundary::Periodic
                   : Boundary::Free;
  return b;
}

// ---- small helpers --------------------------------------------------------

inline std::uint64_t samples_from_double(double v, const char* field) {
  if (!(v >= 1.0) || !std::isfinite(v))
    throw ConfigError("BadValue", "sample count must be a number >= 1", field);
  return static_cast<std::uint64_t>(v);
}

inline std::pair<std::uint64_t, std::string> resolve_seed(
    const std::string& flag_text, const ConfigFile* cfg) {
  if (!flag_text.empty())
    return {detail::parse_u64(flag_text, "seed"), "flag"};
  if (const char* env = std::getenv("CONNECTIVE_SEED"))
    if (*env) return {detail::parse_u64(env, "CONNECTIVE_SEED"), "env"};
  if (cfg)
    if (const ConfigEntry* e = cfg->find("run", "seed"))
      return {detail::parse_u64(e->value, "run.seed"), "config"};
  std::random_device rd;
  std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return {s, "random"};
}

// flag > config > fallback, for numeric run keys
inline double resolve_double(double flag_value, bool flag_set, const ConfigFile* cfg,
                             const char* key, double fallback, bool* found = nullptr) {
  if (found) *found = true;
  if (flag_set) return flag_value;
  if (cfg)
    if (const ConfigEntry* e = cfg->find("run", key))
      return detail::parse_double(e->value, std::string("run.") + key);
  if (found) *found = false;
  return fallback;
}

inline std::string resolve_string(const std::string& flag_value,
                                  const ConfigFile* cfg, const char* key,
                                  const std::string& fallback) {
  if (!flag_value.empty()) return flag_value;
  if (cfg)
    if (const ConfigEntry* e = cfg->find("run", key)) return e->value;
  return fallback;
}

inline double run_radius(const Potential& p) {
  return p.kind == Potential::Kind::RadialTable ? p.cutoff() : p.r;
}

struct ExecResult {
  Json result;
  bool wrote_files = false;  // subcommand wrote its own output files
};

// ---- vk-estimate ----------------------------------------------------------

inline VkEstimate exact_v2_for(const Potential& p, const Space& space) {
  if (space.d != 2 || space.norm != Norm::L2)
    throw ConfigError("KindNormMismatch",
                      "exact V_2 needs d = 2 with the Euclidean norm");
  if (p.kind == Potential::Kind::HardSphere) return exact_v2_hard_disk(p.r);
  if (p.kind == Potential::Kind::Strauss) return exact_v2_strauss(p.r, p.a);
  throw ConfigError("KindNormMismatch",
                    "exact V_2 is available for hard_sphere and strauss only");
}

inline Json vk_to_json(const VkEstimate& est) {
  Json j;
  j["k"] = est.k;
  j["mean"] = est.mean;
  j["std_error"] = est.std_error;
  j["n_samples"] = est.n_samples;
  j["seed"] = est.seed;
  j["method"] = est.method;
  j["c_phi"] = est.c_phi;
  j["delta_root"] = est.delta_root();
  j["delta_root_se"] = est.delta_root_se();
  j["wall_seconds"] = est.wall_seconds;
  j["exact"] = est.exact();
  return j;
}

inline std::string vk_to_csv(const VkEstimate& est) {
  std::string s = "k,mean,std_error,n_samples,seed,method\n";
  s += std::to_string(est.k) + "," + format_double(est.mean) + "," +
       format_double(est.std_error) + "," + std::to_string(est.n_samples) + "," +
       std::to_string(est.seed) + "," + est.method + "\n";
  return s;
}

inline ExecResult exec_vk(const Json& echo, std::ostream& human) {
  Potential p = potential_from_json(echo.at("potential"));
  Space space = space_from_json(echo.at("space"));
  const Json& run = echo.at("run");
  int k = run.at("k").get<int>();
  std::uint64_t samples = run.at("samples").get<std::uint64_t>();
  std::uint64_t seed = run.at("seed").get<std::uint64_t>();
  int workers = run.value("workers", 0);
  std::string method = run.value("method", "mc");

  VkEstimate est;
  if (method == "exact") {
    if (k != 2)
      throw ConfigError("InvalidK", "exact method is available for k = 2 only",
                        "run.k");
    est = exact_v2_for(p, space);
    est.seed = seed;
  } else if (method == "mc") {
    est = estimate_vk(p, space, k, samples, seed, workers);
  } else {
    throw ConfigError("BadValue", "method must be mc or exact", "run.method");
  }

  char line[256];
  std::snprintf(line, sizeof line,
                "V_%d = %.10g +- %.3g  (n=%llu, method=%s, C_phi=%.10g)\n"
                "V_%d^(1/%d) = %.10g +- %.3g\n",
                est.k, est.mean, est.std_error,
                static_cast<unsigned long long>(est.n_samples),
                est.method.c_str(), est.c_phi, est.k, est.k, est.delta_root(),
                est.delta_root_se());
  human << line;

  ExecResult out;
  out.result = vk_to_json(est);
  return out;
}

// ---- delta-bound / threshold ----------------------------------------------

inline std::vector<int> k_list_from_json(const Json& run) {
  std::vector<int> ks;
  for (const Json& v : run.at("k_list")) ks.push_back(v.get<int>());
  if (ks.empty())
    throw ConfigError("BadValue", "k_list must not be empty", "run.k_list");
  return ks;
}

inline std::vector<VkEstimate> gather_estimates(const Potential& p,
                                                const Space& space,
                                                const Json& run) {
  std::string method = run.value("method", "mc");
  std::uint64_t seed = run.at("seed").get<std::uint64_t>();
  if (method == "exact") return {exact_v2_for(p, space)};
  if (method != "mc")
    throw ConfigError("BadValue", "method must be mc or exact", "run.method");
  std::uint64_t samples = run.at("samples").get<std::uint64_t>();
  int workers = run.value("workers", 0);
  std::vector<VkEstimate> ests;
  // per-k seed offset keeps the runs statistically independent
  for (int k : k_list_from_json(run))
    ests.push_back(estimate_vk(p, space, k, samples,
                               seed + static_cast<std::uint64_t>(k), workers));
  return ests;
}

inline Json delta_to_json(const DeltaBound& b, const std::vector<VkEstimate>& ests) {
  Json j;
  j["value"] = b.value;
  j["k_used"] = b.k_used;
  j["confidence"] = b.confidence;
  j["rigorous"] = b.rigorous;
  j["clamped"] = b.clamped;
  j["c_phi"] = b.c_phi;
  Json arr = Json::array();
  for (const VkEstimate& e : ests) arr.push_back(vk_to_json(e));
  j["estimates"] = std::move(arr);
  return j;
}

inline ExecResult exec_delta_bound(const Json& echo, std::ostream& human) {
  Potential p = potential_from_json(echo.at("potential"));
  Space space = space_from_json(echo.at("space"));
  const Json& run = echo.at("run");
  std::vector<VkEstimate> ests = gather_estimates(p, space, run);
  DeltaBound bound = delta_bound(ests, run.value("confidence", 0.99));

  char line[256];
  std::snprintf(line, sizeof line,
                "delta bound = %.10g at k=%d (confidence %.3g%s)\n", bound.value,
                bound.k_used, bound.confidence,
                bound.rigorous ? ", rigorous" : "");
  human << line;

  ExecResult out;
  out.result = delta_to_json(bound, ests);
  return out;
}

inline ExecResult exec_threshold(const Json& echo, std::ostream& human) {
  Potential p = potential_from_json(echo.at("potential"));
  Space space = space_from_json(echo.at("space"));
  const Json& run = echo.at("run");
  std::vector<VkEstimate> ests = gather_estimates(p, space, run);
  DeltaBound bound = delta_bound(ests, run.value("confidence", 0.99));
  Threshold th = uniqueness_threshold(bound);

  double vball = ball_volume(space, run_radius(p));
  double normalized = th.lambda_star * vball;
  char line[256];
  std::snprintf(line, sizeof line, "threshold = %.10g / v_{%d,r}\n", normalized,
                space.d);
  human << line;
  std::snprintf(line, sizeof line, "lambda_* = %.10g (confidence %.3g%s)\n",
                th.lambda_star, bound.confidence,
                th.rigorous ? ", rigorous" : "");
  human << line;

  ExecResult out;
  out.result = delta_to_json(bound, ests);
  out.result["lambda_star"] = th.lambda_star;
  out.result["normalized_threshold"] = normalized;
  out.result["ball_volume"] = vball;
  return out;
}

// ---- fixed-point / contraction ----------------------------------------------

inline Json fixed_point_to_json(const FixedPointReport& rep) {
  Json j;
  j["lambda"] = rep.lambda;
  j["c_phi"] = rep.c_phi;
  j["alpha"] = rep.alpha;
  j["z_star"] = rep.z_star;
  j["classification"] = classification_name(rep.classification);
  if (rep.cycle)
    j["cycle"] = Json::array({rep.cycle->z1, rep.cycle->z2});
  else
    j["cycle"] = nullptr;
  j["fixed_point_residual"] = rep.fixed_point_residual;
  j["cycle_residual"] = rep.cycle_residual;
  j["sign_changes"] = rep.sign_changes;
  j["extra_roots"] = rep.extra_roots;
  return j;
}

inline void fixed_point_line(const FixedPointReport& rep, std::ostream& human) {
  char line[256];
  std::snprintf(line, sizeof line, "alpha = %.10g: %s; z* = %.12g", rep.alpha,
                classification_name(rep.classification).c_str(), rep.z_star);
  human << line;
  if (rep.cycle) {
    std::snprintf(line, sizeof line, "; cycle = (%.12g, %.12g)", rep.cycle->z1,
                  rep.cycle->z2);
    human << line;
  }
  human << "\n";
}

inline ExecResult exec_fixed_point(const Json& echo, std::ostream& human) {
  const Json& run = echo.at("run");
  double c_phi = run.at("c_phi").get<double>();
  ExecResult out;
  if (run.contains("sweep") && !run.at("sweep").is_null()) {
    const Json& sw = run.at("sweep");
    double a = sw.at(0).get<double>(), b = sw.at(1).get<double>();
    long long n = sw.at(2).get<long long>();
    if (n < 1)
      throw ConfigError("BadValue", "sweep needs at least one point", "run.sweep");
    Json arr = Json::array();
    for (long long i = 0; i < n; ++i) {
      double lam = n == 1 ? a : a + (b - a) * static_cast<double>(i) /
                                        static_cast<double>(n - 1);
      FixedPointReport rep = classify(ScalarRecursion{lam, c_phi});
      arr.push_back(fixed_point_to_json(rep));
    }
    human << "sweep of " << n << " activities written\n";
    out.result["sweep"] = std::move(arr);
    return out;
  }
  double lambda = run.at("lambda").get<double>();
  FixedPointReport rep = classify(ScalarRecursion{lambda, c_phi});
  fixed_point_line(rep, human);
  out.result = fixed_point_to_json(rep);
  return out;
}

inline ExecResult exec_contraction(const Json& echo, std::ostream& human) {
  const Json& run = echo.at("run");
  double lambda = run.at("lambda").get<double>();
  double c_phi = run.at("c_phi").get<double>();
  int k_max = run.value("k_max", 12);
  if (k_max < 1)
    throw ConfigError("BadValue", "k_max must be >= 1", "run.k_max");
  ScalarRecursion rec{lambda, c_phi};
  rec.validate();

  std::vector<double> taus;
  for (int i = 0; i <= 4; ++i) taus.push_back(lambda * i / 4.0);

  bool all_ok = true;
  double max_ratio = 0.0;
  Json per_k = Json::array();
  for (int k = 1; k <= k_max; ++k) {
    double k_ratio = 0.0, k_lhs = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i)
      for (std::size_t j = i + 1; j < taus.size(); ++j) {
        ContractionCheck c = contraction_check(rec, taus[i], taus[j], k);
        all_ok = all_ok && c.ok;
        double ratio = c.rhs > 0.0 ? c.lhs / c.rhs : (c.lhs == 0.0 ? 0.0 : 1e300);
        k_ratio = std::max(k_ratio, ratio);
        k_lhs = std::max(k_lhs, c.lhs);
      }
    max_ratio = std::max(max_ratio, k_ratio);
    Json row;
    row["k"] = k;
    row["max_ratio"] = k_ratio;
    row["max_lhs"] = k_lhs;
    per_k.push_back(std::move(row));
  }

  char line[160];
  std::snprintf(line, sizeof line,
                "contraction %s: alpha=%.6g, max lhs/rhs ratio %.6g over k <= %d\n",
                all_ok ? "holds" : "VIOLATED", rec.alpha(), max_ratio, k_max);
  human << line;

  ExecResult out;
  out.result["lambda"] = lambda;
  out.result["c_phi"] = c_phi;
  out.result["alpha"] = rec.alpha();
  out.result["k_max"] = k_max;
  out.result["all_ok"] = all_ok;
  out.result["max_ratio"] = max_ratio;
  out.result["per_k"] = std::move(per_k);
  out.result["exact"] = true;
  return out;
}

// ---- sample-gibbs -----------------------------------------------------------

inline GibbsSampleBatch batch_from_echo(const Json& echo) {
  Potential p = potential_from_json(echo.at("potential"));
  Space space = space_from_json(echo.at("space"));
  BoxRegion box = box_from_json(echo.at("box"));
  const Json& run = echo.at("run");
  return sample_gibbs(p, space, box, run.at("lambda").get<double>(),
                      run.at("n").get<std::uint64_t>(),
                      run.at("seed").get<std::uint64_t>(), run.value("workers", 0));
}

inline ExecResult exec_sample_gibbs(const Json& echo, const std::string& out_path,
                                    std::ostream& human) {
  GibbsSampleBatch batch = batch_from_echo(echo);
  write_configs_jsonl(out_path, batch);
  PartitionEstimate part = estimate_partition(batch);

  RunningStat counts;
  for (const PointConfiguration& c : batch.configs)
    counts.add(static_cast<double>(c.count()));

  char line[256];
  std::snprintf(line, sizeof line,
                "accepted %llu / %llu proposals (rate %.6g); mean count %.6g\n",
                static_cast<unsigned long long>(batch.n_accepted),
                static_cast<unsigned long long>(batch.n_proposals),
                batch.acceptance_rate(), counts.mean());
  human << line;
  std::snprintf(line, sizeof line, "Z_hat = %.10g +- %.3g; wrote %s\n", part.z_hat,
                part.z_se, out_path.c_str());
  human << line;

  ExecResult out;
  out.wrote_files = true;
  out.result["n_accepted"] = batch.n_accepted;
  out.result["n_proposals"] = batch.n_proposals;
  out.result["acceptance_rate"] = batch.acceptance_rate();
  out.result["z_hat"] = part.z_hat;
  out.result["z_se"] = part.z_se;
  out.result["log_pressure"] = part.log_pressure;
  out.result["log_pressure_se"] = part.log_pressure_se;
  out.result["out"] = out_path;
  return out;
}

// ---- verify -----------------------------------------------------------------

inline Json identity_to_json(const IdentityReport& rep, bool ok) {
  Json j;
  j["lhs"] = rep.lhs;
  j["rhs"] = rep.rhs;
  j["combined_se"] = rep.combined_se;
  j["residual"] = rep.residual;
  j["sigmas"] = rep.sigmas;
  j["quad_error"] = rep.quad_error;
  j["n_configs"] = rep.n_configs;
  j["ok"] = ok;
  return j;
}

inline Json bound_to_json(const BoundCheck& c) {
  Json j;
  j["value"] = c.value;
  j["se"] = c.se;
  j["bound"] = c.bound;
  j["ok"] = c.ok;
  return j;
}

inline ExecResult exec_verify(const Json& echo, std::ostream& human) {
  Potential p = potential_from_json(echo.at("potential"));
  const Json& run = echo.at("run");
  std::string identity = run.at("identity").get<std::string>();
  GibbsSampleBatch batch = batch_from_echo(echo);

  ExecResult out;
  char line[256];
  if (identity == "recursion") {
    std::vector<double> v = run.at("v").get<std::vector<double>>();
    IdentityReport rep = verify_recursion_identity(
        p, batch, v, run.value("quad_nodes", 0));
    bool ok = rep.sigmas <= 3.0 && rep.quad_error <= std::max(rep.combined_se, 1e-300);
    std::snprintf(line, sizeof line,
                  "recursion identity: lhs=%.8g rhs=%.8g |diff|=%.3g (%.2f se, "
                  "quad err %.2g) -> %s\n",
                  rep.lhs, rep.rhs, rep.residual, rep.sigmas, rep.quad_error,
                  ok ? "ok" : "FAIL");
    human << line;
    out.result = identity_to_json(rep, ok);
  } else if (identity == "kpoint") {
    std::vector<double> pts = run.at("points").get<std::vector<double>>();
    IdentityReport rep = verify_kpoint_product(p, batch, pts);
    bool ok = rep.sigmas <= 3.0;
    std::snprintf(line, sizeof line,
                  "k-point product: direct=%.8g product=%.8g |diff|=%.3g "
                  "(%.2f se) -> %s\n",
                  rep.lhs, rep.rhs, rep.residual, rep.sigmas, ok ? "ok" : "FAIL");
    human << line;
    out.result = identity_to_json(rep, ok);
  } else if (identity == "domination") {
    BoundCheck c = check_poisson_domination(batch);
    std::snprintf(line, sizeof line,
                  "poisson domination: mean count %.6g <= %.6g + 3*%.2g -> %s\n",
                  c.value, c.bound, c.se, c.ok ? "ok" : "FAIL");
    human << line;
    out.result = bound_to_json(c);
  } else if (identity == "ruelle") {
    // 20 uniform test locations from a dedicated substream of the run seed
    RngStream rng(run.at("seed").get<std::uint64_t>(), 0x52554C4545ULL);
    Json checks = Json::array();
    bool all_ok = true;
    std::vector<double> v(batch.box.sides.size());
    for (int i = 0; i < 20; ++i) {
      for (std::size_t a = 0; a < v.size(); ++a)
        v[a] = batch.box.sides[a] * rng.next_double();
      BoundCheck c = check_ruelle(p, batch, v);
      all_ok = all_ok && c.ok;
      Json jc = bound_to_json(c);
      jc["v"] = v;
      checks.push_back(std::move(jc));
    }
    std::snprintf(line, sizeof line,
                  "ruelle bound at 20 locations: %s (activity %.6g)\n",
                  all_ok ? "ok" : "FAIL", batch.lambda);
    human << line;
    out.result["checks"] = std::move(checks);
    out.result["ok"] = all_ok;
  } else {
    throw ConfigError("BadValue",
                      "identity must be recursion, kpoint, domination or ruelle",
                      "run.identity");
  }
  return out;
}

// ---- report -----------------------------------------------------------------

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline ExecResult exec_report(const Json& echo, std::ostream& human) {
  const Json& run = echo.at("run");
  std::string dir = run.at("dir").get<std::string>();
  std::string out_dir = run.value("out_dir", dir);
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw DomainError("NoResults", "not a directory: " + dir);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() < 5 || name.substr(name.size() - 5) != ".json") continue;
    if (name.size() >= 14 &&
        name.substr(name.size() - 14) == ".manifest.json")
      continue;
    files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());

  struct VkRow {
    int k;
    double root, root_se, normalized;
  };
  std::vector<VkRow> vk_rows;
  struct BifRow {
    double alpha;
    std::string branch;
    double z;
  };
  std::vector<BifRow> bif_rows;
  std::string summary = "file,type,value,uncertainty,flag\n";
  int recognized = 0;

  auto add_fixed_point = [&](const Json& r) {
    double alpha = r.at("alpha").get<double>();
    bif_rows.push_back({alpha, "fixed", r.at("z_star").get<double>()});
    if (r.contains("cycle") && !r.at("cycle").is_null()) {
      bif_rows.push_back({alpha, "cycle_low", r.at("cycle").at(0).get<double>()});
      bif_rows.push_back({alpha, "cycle_high", r.at("cycle").at(1).get<double>()});
    }
  };

  for (const std::string& f : files) {
    std::ifstream in(f);
    Json r;
    try {
      in >> r;
    } catch (const std::exception&) {
      continue;  // not a result file
    }
    std::string base = fs::path(f).filename().string();
    if (r.contains("mean") && r.contains("delta_root")) {
      ++recognized;
      vk_rows.push_back({r.at("k").get<int>(), r.at("delta_root").get<double>(),
                         r.value("delta_root_se", 0.0),
                         r.at("delta_root").get<double>() / r.at("c_phi").get<double>()});
      summary += csv_escape(base) + ",vk," + format_double(r.at("mean").get<double>()) +
                 "," + format_double(r.at("std_error").get<double>()) + "," +
                 (r.value("exact", false) ? "true" : "false") + "\n";
    } else if (r.contains("lambda_star")) {
      ++recognized;
      summary += csv_escape(base) + ",threshold," +
                 format_double(r.at("lambda_star").get<double>()) + ",," +
                 (r.value("rigorous", false) ? "true" : "false") + "\n";
    } else if (r.contains("sweep")) {
      ++recognized;
      for (const Json& item : r.at("sweep")) add_fixed_point(item);
      summary += csv_escape(base) + ",fixed_point_sweep," +
                 std::to_string(r.at("sweep").size()) + ",,true\n";
    } else if (r.contains("z_star")) {
      ++recognized;
      add_fixed_point(r);
      summary += csv_escape(base) + ",fixed_point," +
                 format_double(r.at("z_star").get<double>()) + "," +
                 format_double(r.value("fixed_point_residual", 0.0)) + ",\n";
    } else if (r.contains("value") && r.contains("k_used")) {
      ++recognized;
      summary += csv_escape(base) + ",delta_bound," +
                 format_double(r.at("value").get<double>()) + ",," +
                 (r.value("rigorous", false) ? "true" : "false") + "\n";
    } else if (r.contains("lhs") && r.contains("rhs")) {
      ++recognized;
      summary += csv_escape(base) + ",identity," +
                 format_double(r.at("residual").get<double>()) + "," +
                 format_double(r.at("combined_se").get<double>()) + "," +
                 (r.value("ok", false) ? "true" : "false") + "\n";
    } else if (r.contains("bound") && r.contains("value")) {
      ++recognized;
      summary += csv_escape(base) + ",bound," +
                 format_double(r.at("value").get<double>()) + "," +
                 format_double(r.value("se", 0.0)) + "," +
                 (r.value("ok", false) ? "true" : "false") + "\n";
    } else if (r.contains("checks")) {
      ++recognized;
      summary += csv_escape(base) + ",bound_suite," +
                 std::to_string(r.at("checks").size()) + ",," +
                 (r.value("ok", false) ? "true" : "false") + "\n";
    } else if (r.contains("all_ok")) {
      ++recognized;
      summary += csv_escape(base) + ",contraction," +
                 std::string(r.at("all_ok").get<bool>() ? "1" : "0") + "," +
                 format_double(r.value("max_ratio", 0.0)) + ",true\n";
    } else if (r.contains("acceptance_rate")) {
      ++recognized;
      summary += csv_escape(base) + ",gibbs_batch," +
                 format_double(r.at("z_hat").get<double>()) + "," +
                 format_double(r.value("z_se", 0.0)) + ",\n";
    }
  }

  if (recognized == 0)
    throw DomainError("NoResults", "no recognized result files in " + dir);

  std::sort(vk_rows.begin(), vk_rows.end(),
            [](const VkRow& a, const VkRow& b) { return a.k < b.k; });
  std::string vk_csv = "k,root,root_se,root_over_c_phi\n";
  for (const VkRow& row : vk_rows)
    vk_csv += std::to_string(row.k) + "," + format_double(row.root) + "," +
              format_double(row.root_se) + "," + format_double(row.normalized) +
              "\n";

  std::sort(bif_rows.begin(), bif_rows.end(), [](const BifRow& a, const BifRow& b) {
    return a.alpha != b.alpha ? a.alpha < b.alpha : a.branch < b.branch;
  });
  std::string bif_csv = "alpha,branch,z\n";
  for (const BifRow& row : bif_rows)
    bif_csv += format_double(row.alpha) + "," + row.branch + "," +
               format_double(row.z) + "\n";

  fs::path out_base(out_dir);
  atomic_write_text((out_base / "summary.csv").string(), summary);
  atomic_write_text((out_base / "vk_roots.csv").string(), vk_csv);
  atomic_write_text((out_base / "bifurcation.csv").string(), bif_csv);

  human << "report: " << recognized << " results -> summary.csv, vk_roots.csv ("
        << vk_rows.size() << " rows), bifurcation.csv (" << bif_rows.size()
        << " rows)\n";

  ExecResult out;
  out.wrote_files = true;
  out.result["results"] = recognized;
  out.result["vk_rows"] = vk_rows.size();
  out.result["bifurcation_rows"] = bif_rows.size();
  out.result["out_dir"] = out_dir;
  return out;
}

// ---- dispatch ----------------------------------------------------------------

inline ExecResult execute(const std::string& subcommand, const Json& echo,
                          const std::string& out_path, std::ostream& human) {
  if (subcommand == "vk-estimate") return exec_vk(echo, human);
  if (subcommand == "delta-bound") return exec_delta_bound(echo, human);
  if (subcommand == "threshold") return exec_threshold(echo, human);
  if (subcommand == "fixed-point") return exec_fixed_point(echo, human);
  if (subcommand == "contraction") return exec_contraction(echo, human);
  if (subcommand == "sample-gibbs") return exec_sample_gibbs(echo, out_path, human);
  if (subcommand == "verify") return exec_verify(echo, human);
  if (subcommand == "report") return exec_report(echo, human);
  throw ConfigError("UnknownSubcommand", "unknown subcommand: " + subcommand);
}

inline std::string default_out(const std::string& subcommand,
                               const std::string& format) {
  if (subcommand == "sample-gibbs") return "configs.jsonl";
  return subcommand + (format == "csv" ? ".csv" : ".json");
}

}  // namespace cli_detail

// Parses flags/config, resolves every parameter into a JSON echo, executes,
// writes the result file and its manifest sidecar. Exit codes: 0 success,
// 1 domain errors, 2 config/usage errors; errors also go to `err` as one
// JSON line.
inline int run_cli(int argc, const char* const* argv,
                   std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using cli_detail::ExecResult;

  CLI::App app{"potential-weighted connective constants, uniqueness thresholds, "
               "and exact finite-volume Gibbs sampling for repulsive pair "
               "potentials"};
  app.require_subcommand(0, 1);
  std::string from_manifest, top_out;
  app.add_option("--from-manifest", from_manifest,
                 "re-run the resolved configuration recorded in a manifest");
  app.add_option("--out", top_out, "output file for a --from-manifest run");

  struct Common {
    std::string config, out, format, seed, method;
    int workers = 0;
    double confidence = 0.99;
    bool workers_set = false, confidence_set = false;
  };

  auto add_common = [](CLI::App* sub, Common& c, bool with_method) {
    sub->add_option("--config", c.config, "config file");
    sub->add_option("--out", c.out, "output file path");
    sub->add_option("--format", c.format, "json or csv");
    sub->add_option("--seed", c.seed, "64-bit seed (default: recorded random)");
    sub->add_option("--workers", c.workers, "worker threads (0 = all cores)")
        ->each([&c](const std::string&) { c.workers_set = true; });
    sub->add_option("--confidence", c.confidence, "confidence level")
        ->each([&c](const std::string&) { c.confidence_set = true; });
    if (with_method)
      sub->add_option("--method", c.method, "mc or exact");
  };

  // vk-estimate
  Common c_vk;
  int vk_k = 0;
  double vk_samples = 1e6;
  bool vk_samples_set = false;
  CLI::App* sub_vk = app.add_subcommand("vk-estimate", "estimate the chain integral V_k");
  sub_vk->add_option("--k", vk_k, "chain length")->required();
  sub_vk->add_option("--samples", vk_samples, "Monte Carlo sample count")
      ->each([&](const std::string&) { vk_samples_set = true; });
  add_common(sub_vk, c_vk, true);

  // delta-bound
  Common c_db;
  std::string db_klist;
  double db_samples = 1e6;
  bool db_samples_set = false;
  CLI::App* sub_db = app.add_subcommand("delta-bound",
                                        "confidence upper bound on the connective constant");
  sub_db->add_option("--k-list", db_klist, "comma-separated chain lengths");
  sub_db->add_option("--samples", db_samples, "Monte Carlo samples per k")
      ->each([&](const std::string&) { db_samples_set = true; });
  add_common(sub_db, c_db, true);

  // threshold
  Common c_th;
  std::string th_klist;
  double th_samples = 1e6;
  bool th_samples_set = false;
  CLI::App* sub_th = app.add_subcommand("threshold", "uniqueness threshold e / delta");
  sub_th->add_option("--k-list", th_klist, "comma-separated chain lengths");
  sub_th->add_option("--samples", th_samples, "Monte Carlo samples per k")
      ->each([&](const std::string&) { th_samples_set = true; });
  add_common(sub_th, c_th, true);

  // fixed-point
  Common c_fp;
  double fp_lambda = 0.0, fp_cphi = 0.0;
  bool fp_lambda_set = false, fp_cphi_set = false;
  std::string fp_sweep;
  CLI::App* sub_fp = app.add_subcommand("fixed-point",
                                        "scalar tree-recursion fixed point and cycles");
  sub_fp->add_option("--lambda", fp_lambda, "activity")
      ->each([&](const std::string&) { fp_lambda_set = true; });
  sub_fp->add_option("--c-phi", fp_cphi, "temperedness constant")
      ->each([&](const std::string&) { fp_cphi_set = true; });
  sub_fp->add_option("--sweep", fp_sweep, "lambda sweep a:b:n");
  add_common(sub_fp, c_fp, false);

  // contraction
  Common c_ct;
  double ct_lambda = 0.0, ct_cphi = 0.0;
  bool ct_lambda_set = false, ct_cphi_set = false;
  int ct_kmax = 12;
  CLI::App* sub_ct = app.add_subcommand("contraction",
                                        "depth-k square-root contraction check");
  sub_ct->add_option("--lambda", ct_lambda, "activity")
      ->each([&](const std::string&) { ct_lambda_set = true; });
  sub_ct->add_option("--c-phi", ct_cphi, "temperedness constant")
      ->each([&](const std::string&) { ct_cphi_set = true; });
  sub_ct->add_option("--k-max", ct_kmax, "largest depth checked");
  add_common(sub_ct, c_ct, false);

  // sample-gibbs
  Common c_sg;
  double sg_lambda = 0.0;
  bool sg_lambda_set = false;
  std::string sg_box, sg_boundary;
  double sg_n = 1000;
  bool sg_n_set = false;
  CLI::App* sub_sg = app.add_subcommand("sample-gibbs",
                                        "exact finite-volume Gibbs configurations");
  sub_sg->add_option("--lambda", sg_lambda, "activity")
      ->each([&](const std::string&) { sg_lambda_set = true; });
  sub_sg->add_option("--box", sg_box, "side lengths, e.g. 5x5");
  sub_sg->add_option("--boundary", sg_boundary, "free or periodic");
  sub_sg->add_option("--n", sg_n, "number of configurations")
      ->each([&](const std::string&) { sg_n_set = true; });
  add_common(sub_sg, c_sg, false);

  // verify
  Common c_vf;
  std::string vf_identity, vf_scenario;
  double vf_n = 0.0;
  bool vf_n_set = false;
  int vf_quad = 0;
  CLI::App* sub_vf = app.add_subcommand("verify",
                                        "finite-volume identity and bound checks");
  sub_vf->add_option("--identity", vf_identity,
                     "recursion | kpoint | domination | ruelle")
      ->required();
  sub_vf->add_option("--scenario", vf_scenario, "scenario config file");
  sub_vf->add_option("--n", vf_n, "configurations to sample")
      ->each([&](const std::string&) { vf_n_set = true; });
  sub_vf->add_option("--quad-nodes", vf_quad, "quadrature nodes per axis");
  add_common(sub_vf, c_vf, false);

  // report
  Common c_rp;
  std::string rp_dir;
  CLI::App* sub_rp = app.add_subcommand("report", "aggregate a results directory");
  sub_rp->add_option("dir", rp_dir, "directory of result JSON files")->required();
  add_common(sub_rp, c_rp, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    Json j;
    j["error"] = {{"type", "config"}, {"code", "Usage"}, {"message", e.what()}};
    err << j.dump() << "\n";
    return 2;
  }

  auto emit = [&err](const char* type, const Error& e) {
    Json j;
    j["error"] = {{"type", type}, {"code", e.code()}, {"message", e.what()}};
    if (!e.field().empty()) j["error"]["field"] = e.field();
    err << j.dump() << "\n";
  };

  try {
    std::string subcommand;
    Json echo;
    std::vector<std::string> input_files;
    std::string seed_source = "none";
    std::string out_path, format = "json";

    auto t0 = std::chrono::steady_clock::now();

    if (!from_manifest.empty()) {
      RunManifest m = load_manifest(from_manifest);
      subcommand = m.subcommand;
      echo = m.config_echo;
      seed_source = "manifest";
      input_files.push_back(from_manifest);
      if (echo.contains("format")) format = echo.at("format").get<std::string>();
      out_path = top_out.empty() ? cli_detail::default_out(subcommand, format)
                                 : top_out;
    } else {
      CLI::App* parsed = nullptr;
      for (CLI::App* s : {sub_vk, sub_db, sub_th, sub_fp, sub_ct, sub_sg, sub_vf, sub_rp})
        if (s->parsed()) parsed = s;
      if (!parsed) {
        out << app.help();
        Json j;
        j["error"] = {{"type", "config"},
                      {"code", "Usage"},
                      {"message", "a subcommand is required"}};
        err << j.dump() << "\n";
        return 2;
      }
      subcommand = parsed->get_name();

      // shared scaffolding: config file, potential, space, box, seed
      Common* common = nullptr;
      if (parsed == sub_vk) common = &c_vk;
      else if (parsed == sub_db) common = &c_db;
      else if (parsed == sub_th) common = &c_th;
      else if (parsed == sub_fp) common = &c_fp;
      else if (parsed == sub_ct) common = &c_ct;
      else if (parsed == sub_sg) common = &c_sg;
      else if (parsed == sub_vf) common = &c_vf;
      else common = &c_rp;

      std::string config_path = common->config;
      if (parsed == sub_vf && !vf_scenario.empty()) config_path = vf_scenario;

      std::optional<ConfigFile> cfg;
      if (!config_path.empty()) {
        cfg = load_config(config_path);
        check_known_keys(*cfg);
        input_files.push_back(config_path);
        if (cfg->has("potential", "table")) {
          std::filesystem::path t(cfg->find("potential", "table")->value);
          if (t.is_relative()) t = cfg->dir / t;
          input_files.push_back(t.string());
        }
      }
      const ConfigFile* cfgp = cfg ? &*cfg : nullptr;

      Potential pot = cfg && cfg->sections.count("potential")
                          ? potential_from_config(*cfg)
                          : Potential::hard_sphere(1.0);
      Space space = cfg ? space_from_config(*cfg) : Space{2, Norm::L2};
      std::optional<BoxRegion> box = cfg ? box_from_config(*cfg) : std::nullopt;

      auto [seed, src] = cli_detail::resolve_seed(common->seed, cfgp);
      seed_source = src;

      double confidence = common->confidence;
      if (!common->confidence_set && cfgp)
        if (const ConfigEntry* e = cfg->find("run", "confidence"))
          confidence = detail::parse_double(e->value, "run.confidence");
      int workers = common->workers;
      if (!common->workers_set && cfgp)
        if (const ConfigEntry* e = cfg->find("run", "workers"))
          workers = static_cast<int>(detail::parse_int(e->value, "run.workers"));

      format = cli_detail::resolve_string(common->format, cfgp, "format", "json");
      if (format != "json" && format != "csv")
        throw ConfigError("BadValue", "format must be json or csv", "run.format");
      if (format == "csv" && subcommand != "vk-estimate")
        throw ConfigError("BadValue",
                          "csv format is only available for vk-estimate",
                          "run.format");

      Json run = Json::object();
      run["seed"] = seed;
      run["workers"] = workers;

      auto k_list_resolved = [&](const std::string& flag_text) {
        std::string text = flag_text;
        if (text.empty() && cfgp)
          if (const ConfigEntry* e = cfg->find("run", "k_list")) text = e->value;
        std::vector<int> ks;
        if (!text.empty()) {
          for (double v : detail::parse_point(text, "run.k_list"))
            ks.push_back(static_cast<int>(v));
        } else {
          ks = {2};
        }
        return ks;
      };

      if (parsed == sub_vk) {
        int k = vk_k;
        if (!vk_samples_set && cfgp)
          if (const ConfigEntry* e = cfg->find("run", "samples"))
            vk_samples = detail::parse_double(e->value, "run.samples");
        run["k"] = k;
        run["samples"] = cli_detail::samples_from_double(vk_samples, "run.samples");
        run["method"] = cli_detail::resolve_string(common->method, cfgp, "method", "mc");
      } else if (parsed == sub_db || parsed == sub_th) {
        double samples = parsed == sub_db ? db_samples : th_samples;
        bool samples_set = parsed == sub_db ? db_samples_set : th_samples_set;
        if (!samples_set && cfgp)
          if (const ConfigEntry* e = cfg->find("run", "samples"))
            samples = detail::parse_double(e->value, "run.samples");
        run["k_list"] = k_list_resolved(parsed == sub_db ? db_klist : th_klist);
        run["samples"] = cli_detail::samples_from_double(samples, "run.samples");
        run["confidence"] = confidence;
        run["method"] = cli_detail::resolve_string(common->method, cfgp, "method", "mc");
      } else if (parsed == sub_fp || parsed == sub_ct) {
        bool lambda_set = parsed == sub_fp ? fp_lambda_set : ct_lambda_set;
        double lambda_flag = parsed == sub_fp ? fp_lambda : ct_lambda;
        bool found = false;
        double lambda = cli_detail::resolve_double(lambda_flag, lambda_set, cfgp,
                                                   "lambda", 0.0, &found);
        bool cphi_set = parsed == sub_fp ? fp_cphi_set : ct_cphi_set;
        double cphi_flag = parsed == sub_fp ? fp_cphi : ct_cphi;
        double c_phi;
        if (cphi_set) {
          c_phi = cphi_flag;
        } else if (cfgp && cfg->find("run", "c_phi")) {
          c_phi = detail::parse_double(cfg->find("run", "c_phi")->value, "run.c_phi");
        } else if (cfg && cfg->sections.count("potential")) {
          c_phi = temperedness_constant(pot, space);
        } else {
          throw ConfigError("MissingKey",
                            "need --c-phi or a potential config to derive it",
                            "run.c_phi");
        }
        run["c_phi"] = c_phi;
        if (parsed == sub_fp && !fp_sweep.empty()) {
          // a:b:n
          std::vector<double> parts;
          std::string cur;
          for (char ch : fp_sweep) {
            if (ch == ':') {
              parts.push_back(detail::parse_double(cur, "run.sweep"));
              cur.clear();
            } else {
              cur += ch;
            }
          }
          parts.push_back(detail::parse_double(cur, "run.sweep"));
          if (parts.size() != 3)
            throw ConfigError("BadValue", "sweep must be a:b:n", "run.sweep");
          run["sweep"] = Json::array(
              {parts[0], parts[1], static_cast<long long>(parts[2])});
        } else {
          if (!found && !lambda_set)
            throw ConfigError("MissingKey", "need --lambda", "run.lambda");
          run["lambda"] = lambda;
          if (parsed == sub_ct) run["k_max"] = ct_kmax;
        }
      } else if (parsed == sub_sg || parsed == sub_vf) {
        bool lambda_set = parsed == sub_sg ? sg_lambda_set : false;
        double lambda = cli_detail::resolve_double(
            parsed == sub_sg ? sg_lambda : 0.0, lambda_set, cfgp, "lambda", -1.0);
        if (lambda < 0.0)
          throw ConfigError("MissingKey", "need --lambda or run.lambda",
                            "run.lambda");
        run["lambda"] = lambda;

        BoxRegion box_resolved;
        if (parsed == sub_sg && !sg_box.empty()) {
          box_resolved.sides = detail::parse_sides(sg_box, "box.sides");
          if (!sg_boundary.empty()) {
            std::string b = detail::lower(sg_boundary);
            if (b == "periodic")
              box_resolved.boundary = Boundary::Periodic;
            else if (b == "free")
              box_resolved.boundary = Boundary::Free;
            else
              throw ConfigError("BadValue", "boundary must be free or periodic",
                                "box.boundary");
          }
        } else if (box) {
          box_resolved = *box;
          if (parsed == sub_sg && !sg_boundary.empty())
            box_resolved.boundary = detail::lower(sg_boundary) == "periodic"
                                        ? Boundary::Periodic
                                        : Boundary::Free;
        } else {
          throw ConfigError("MissingKey", "need --box or a [box] config section",
                            "box.sides");
        }
        // with no explicit space, infer the dimension from the box
        if (!cfg || !cfg->sections.count("space"))
          space.d = box_resolved.dim();
        echo["box"] = cli_detail::box_to_json(box_resolved);

        if (parsed == sub_sg) {
          double n = sg_n;
          if (!sg_n_set && cfgp)
            if (const ConfigEntry* e = cfg->find("run", "n"))
              n = detail::parse_double(e->value, "run.n");
          run["n"] = cli_detail::samples_from_double(n, "run.n");
        } else {
          double n = vf_n;
          if (!vf_n_set) {
            n = 100000;
            if (cfgp)
              if (const ConfigEntry* e = cfg->find("run", "n"))
                n = detail::parse_double(e->value, "run.n");
          }
          run["n"] = cli_detail::samples_from_double(n, "run.n");
          run["identity"] = vf_identity;
          if (vf_quad > 0)
            run["quad_nodes"] = vf_quad;
          else if (cfgp && cfg->find("run", "quad_nodes"))
            run["quad_nodes"] = static_cast<int>(detail::parse_int(
                cfg->find("run", "quad_nodes")->value, "run.quad_nodes"));

          // density point: config or box center
          std::vector<double> v;
          if (cfgp && cfg->find("run", "v")) {
            v = detail::parse_point(cfg->find("run", "v")->value, "run.v");
          } else {
            for (double s : box_resolved.sides) v.push_back(0.5 * s);
          }
          run["v"] = v;

          // k-point locations: config or a separation-0.5 pair through the center
          std::vector<double> kp;
          if (cfgp && cfg->find("run", "points")) {
            kp = detail::parse_points(cfg->find("run", "points")->value,
                                      "run.points");
          } else {
            std::vector<double> lo = v, hi = v;
            lo[0] -= 0.25;
            hi[0] += 0.25;
            kp = lo;
            kp.insert(kp.end(), hi.begin(), hi.end());
          }
          run["points"] = kp;
        }
      } else if (parsed == sub_rp) {
        run["dir"] = rp_dir;
        if (!common->out.empty()) run["out_dir"] = common->out;
      }

      echo["potential"] = cli_detail::potential_to_json(pot);
      echo["space"] = cli_detail::space_to_json(space);
      echo["run"] = run;
      echo["format"] = format;

      out_path = common->out.empty() ? cli_detail::default_out(subcommand, format)
                                     : common->out;
    }

    ExecResult res = cli_detail::execute(subcommand, echo, out_path, out);

    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                      .count();

    if (!res.wrote_files) {
      if (format == "csv" && subcommand == "vk-estimate") {
        VkEstimate est;  // rebuild the CSV from the JSON result
        est.k = res.result.at("k").get<int>();
        est.mean = res.result.at("mean").get<double>();
        est.std_error = res.result.at("std_error").get<double>();
        est.n_samples = res.result.at("n_samples").get<std::uint64_t>();
        est.seed = res.result.at("seed").get<std::uint64_t>();
        est.method = res.result.at("method").get<std::string>();
        atomic_write_text(out_path, cli_detail::vk_to_csv(est));
      } else {
        write_json_file(out_path, res.result);
      }
    }

    RunManifest manifest;
    manifest.subcommand = subcommand;
    manifest.config_echo = echo;
    manifest.input_hash = hash_inputs(echo, input_files);
    manifest.seed_source = seed_source;
    manifest.wall_seconds = wall;
    manifest.timings["total_seconds"] = wall;
    manifest.created = iso_timestamp_now();
    write_manifest(out_path, manifest);

    return 0;
  } catch (const ConfigError& e) {
    emit("config", e);
    return 2;
  } catch (const DomainError& e) {
    emit("domain", e);
    return 1;
  } catch (const Error& e) {
    emit("domain", e);
    return 1;
  }
}

// convenience overload for in-process invocation
inline int run_cli(const std::vector<std::string>& args,
                   std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> full;
  full.push_back("connective");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& s : full) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pwcc
