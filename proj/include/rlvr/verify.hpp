#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace rlvr::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  nlohmann::json metrics = nlohmann::json::object();
};

/// |sum of UCPO advantages - sum of GRPO advantages| over correct samples, for
/// random environments, policies, batches and tau in [0, 1].
CheckResult mass_preservation(std::size_t batches, double tolerance, std::uint64_t seed);

/// Analytic vs enumerated (tol_enumerated) and analytic vs central differences
/// (tol_fd, infinity-norm relative) for log Z, KL(u||q), H(pi), the full UCPO
/// objective and its decomposition, over `configs` random logit vectors each.
CheckResult gradient_identities(std::size_t configs, double tol_enumerated, double tol_fd, std::uint64_t seed);

/// Exact expected GRPO and global-entropy update directions against their
/// enumerated and finite-difference forms, plus a Monte Carlo estimate of the
/// GRPO direction within `z_max` standard errors.
CheckResult expected_update_directions(std::size_t configs, double tol, double z_max, std::uint64_t seed);

/// Ascent on log Z - tau KL(u||q) from `restarts` random starts for every m in
/// `ms` and tau in `taus`.
CheckResult unique_optimum(const std::vector<std::size_t>& ms, const std::vector<double>& taus,
                           std::size_t restarts, double tolerance, std::uint64_t seed);

/// For m <= max_m and every 1 <= s < m: the uniform q retains 1 - s/m, each of
/// `samples` random non-uniform q retains strictly less, and the sort and
/// subset-enumeration oracles agree exactly.
CheckResult robustness(std::size_t max_m, std::size_t samples, std::uint64_t seed);

/// The entropy-regularized optimum is uniform on the correct set for every
/// tau_ent in `taus`, exact ascent reaches it, and the incorrect mass at the
/// smallest tau_ent is below `small_tau_bound`.
CheckResult entropy_regularized_optimum(const std::vector<double>& taus, double small_tau_bound);

/// Rational Pass@K against exhaustive subset enumeration for n <= max_n, and
/// finiteness / range of the floating form at n = 64.
CheckResult pass_at_k_estimator(std::size_t max_n);

/// The three-rollout diversity example (F1={a,b}, F2={b,c}, F3={d}).
CheckResult diversity_example();

/// Every check above at its default size.
std::vector<CheckResult> run_all(std::uint64_t seed = 1);

nlohmann::json to_json(const std::vector<CheckResult>& results);

}  // namespace rlvr::verify
