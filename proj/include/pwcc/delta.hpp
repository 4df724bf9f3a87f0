#pragma once

#include <cmath>
#include <span>

#include "pwcc/chain.hpp"
#include "pwcc/errors.hpp"
#include "pwcc/stats.hpp"

namespace pwcc {

// Upper bound on the connective constant from finitely many V_k values:
// min over k of (mean + z(confidence) * se)^(1/k), clamped to C_phi.
struct DeltaBound {
  double value = 0.0;
  int k_used = 0;
  double confidence = 0.99;
  bool rigorous = false;
  double c_phi = 0.0;
  bool clamped = false;
};

inline DeltaBound delta_bound(std::span<const VkEstimate> estimates,
                              double confidence = 0.99) {
  if (estimates.empty())
    throw DomainError("EmptyInput", "delta_bound needs at least one estimate");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DomainError("InvalidProbability", "confidence must lie in (0,1)");

  double c_phi = estimates.front().c_phi;
  for (const auto& e : estimates) {
    if (e.k < 1) throw DomainError("InvalidK", "estimate with k < 1");
    if (std::fabs(e.c_phi - c_phi) > 1e-12 * std::fabs(c_phi))
      throw DomainError("TemperednessMismatch",
                        "estimates come from different potential/space pairs");
  }

  double z = normal_quantile(confidence);
  DeltaBound out;
  out.confidence = confidence;
  out.c_phi = c_phi;
  out.rigorous = true;
  bool first = true;
  for (const auto& e : estimates) {
    double ub = e.mean + (e.exact() ? 0.0 : z * e.std_error);
    if (ub < 0.0) ub = 0.0;
    double root = std::pow(ub, 1.0 / e.k);
    if (first || root < out.value) {
      out.value = root;
      out.k_used = e.k;
      first = false;
    }
    if (!e.exact()) out.rigorous = false;
  }
  if (out.value > c_phi) {
    out.value = c_phi;
    out.clamped = true;
  }
  return out;
}

struct Threshold {
  double lambda_star = 0.0;
  bool rigorous = false;
  double delta = 0.0;  // the bound the threshold came from
};

// Activity threshold e / delta-hat below which the Gibbs measure is unique.
inline Threshold uniqueness_threshold(const DeltaBound& db) {
  if (!(db.value > 0.0))
    throw DomainError("DegenerateBound",
                      "uniqueness threshold needs a positive delta bound");
  return Threshold{2.71828182845904523536 / db.value, db.rigorous, db.value};
}

}  // namespace pwcc
