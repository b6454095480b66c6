#pragma once

// Brute-force and closed-form verifiers. Everything here is computed from the
// full distribution by enumeration over the output space and is deliberately
// independent of the sampled update path in optimizers.cpp.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rlvr/environment.hpp"
#include "rlvr/optimizers.hpp"
#include "rlvr/policy.hpp"

namespace rlvr::oracle {

/// Largest output space the enumeration routines accept.
inline constexpr std::size_t kMaxEnumeratedVocab = 64;

/// Serialized stand-in for -infinity.
inline constexpr double kNegInfSentinel = -1e30;

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(z + h e_k) - f(z - h e_k)) / 2h.
std::vector<double> central_difference(const ScalarFn& f, std::span<const double> z, double h = 1e-5);

/// max_k |a_k - b_k| / max(max_k |a_k|, 1e-12), the infinity-norm relative error.
double max_relative_error(std::span<const double> reference, std::span<const double> other);

// --- objectives over logits ------------------------------------------------

double log_correct_mass(std::span<const double> z, std::span<const std::size_t> correct);
/// KL(u || q) with u uniform over the correct set.
double kl_uniform_to_conditional(std::span<const double> z, std::span<const std::size_t> correct);
/// KL(q || u) = log m - H(q).
double kl_conditional_to_uniform(std::span<const double> z, std::span<const std::size_t> correct);
/// H(softmax(z)) over the full output space.
double full_entropy(std::span<const double> z);
/// log Z - tau * KL(u || q); -infinity when some correct q underflows to 0.
double ucpo_objective(std::span<const double> z, std::span<const std::size_t> correct, double tau);
/// Z + tau_ent * H(pi).
double entropy_regularized_objective(std::span<const double> z, std::span<const std::size_t> correct,
                                     double tau_ent);

// --- enumerated gradients ---------------------------------------------------
// Each is a sum over outcomes y of weight(y) * grad_z log pi(y), with
// grad_z log pi(y) = e_y - pi materialized per outcome.

/// sum_{y in Y+} q(y) grad log pi(y)
std::vector<double> enumerated_log_z_gradient(std::span<const double> z, std::span<const std::size_t> correct);
/// E_u[grad log pi] - E_q[grad log pi], the two-term form of grad(-KL(u||q)).
std::vector<double> enumerated_neg_kl_uq_gradient(std::span<const double> z, std::span<const std::size_t> correct);
/// grad KL(q||u) = E_q[(1 + log q) grad log q] with grad log q(y) = e_y - q on the correct coordinates.
std::vector<double> enumerated_kl_qu_gradient(std::span<const double> z, std::span<const std::size_t> correct);
/// grad H(pi) = -E_pi[(1 + log pi) grad log pi].
std::vector<double> enumerated_entropy_gradient(std::span<const double> z);
/// sum_{y in Y+} [(1 - tau) q(y) + tau u(y)] grad log pi(y).
std::vector<double> ucpo_decomposition_gradient(std::span<const double> z, std::span<const std::size_t> correct,
                                                double tau);

// --- gradient reports --------------------------------------------------------

struct ExactGradientReport {
  std::vector<double> analytic;
  std::vector<double> enumerated;
  std::vector<double> finite_difference;
  double max_rel_error_enumerated = 0.0;
  double max_rel_error_fd = 0.0;
  /// max of the two errors above.
  double max_rel_error = 0.0;
};

/// Shared advantages of the expected batch composition: R-bar = Z and
/// sigma = sqrt(Z (1 - Z)).
struct SharedAdvantages {
  double a_plus = 0.0;
  double a_minus = 0.0;
};
SharedAdvantages expected_grpo_advantages(double correct_mass, double adv_eps);

/// Exact expected update direction for config.method.
///  GRPO:  K * sum_y pi(y) A(y) grad log pi(y) with A = expected_grpo_advantages;
///         analytic = K pi_k (A(k) - sum_y pi_y A(y)); FD of the frozen-weight surrogate.
///  UCPO:  gradient of log Z - tau KL(u||q); analytic = decomposition form,
///         enumerated = log Z term + two-term KL form; FD of ucpo_objective.
///  GlobalEntropy: gradient of Z + tau_ent H; analytic = closed form,
///         enumerated = score-function sums; FD of entropy_regularized_objective.
/// Throws InvalidInput when V exceeds kMaxEnumeratedVocab.
ExactGradientReport exact_expected_gradient(const PolicyState& policy, const EnvSpec& env,
                                            const OptimizerConfig& config, std::size_t k);

struct MonteCarloGradient {
  std::vector<double> mean;
  std::vector<double> standard_error;
};

/// Mean of sum_i A(y_i) grad log pi(y_i) over sampled batches, with the
/// advantages held fixed at `shared`.
MonteCarloGradient monte_carlo_grpo_gradient(const PolicyState& policy, const EnvSpec& env, SharedAdvantages shared,
                                             std::size_t k, std::size_t batches, std::uint64_t seed);

// --- UCPO optimum ---------------------------------------------------------------

double ucpo_objective_value(const PolicyState& policy, const EnvSpec& env, double tau);

struct AscentRun {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double final_correct_mass = 0.0;
  double final_max_q_deviation = 0.0;
  double final_gradient_norm = 0.0;
  /// KL(u||q) after every accepted step, starting with the initial value.
  std::vector<double> kl_path;
};

/// Exact ascent on log Z - tau KL(u||q) with the closed-form gradient and a
/// backtracking (Armijo) step size.
AscentRun ucpo_ascent(PolicyState start, const EnvSpec& env, double tau, std::size_t steps);

struct UniqueOptimumReport {
  std::vector<AscentRun> runs;
  double min_correct_mass = 1.0;
  double max_q_deviation = 0.0;
  bool passed = false;
};

/// Runs ucpo_ascent from `restarts` random logit vectors (entries uniform in
/// [-3, 3]) and checks correct mass > 1 - tolerance and max |q - 1/m| < tolerance.
UniqueOptimumReport verify_unique_optimum(const EnvSpec& env, double tau, std::size_t ascent_steps, double tolerance,
                                          std::size_t restarts = 20, std::uint64_t seed = 1);

// --- robustness -------------------------------------------------------------------

/// 1 - (sum of the s largest entries of q). Remaining entries are summed in
/// index order.
double retained_mass_by_sort(std::span<const double> q, std::size_t s);
/// Minimum over all removal sets of size s of the retained mass, each summed in
/// index order. Requires m <= 20.
double retained_mass_by_enumeration(std::span<const double> q, std::size_t s);

struct RobustnessReport {
  double by_sort = 0.0;
  double by_enumeration = 0.0;
  double uniform_bound = 0.0;  ///< 1 - s/m
};

/// Worst-case retained correct mass after the adversary disables s of the m
/// correct outputs. Throws InvalidInput unless 1 <= s < m.
RobustnessReport robustness_minimax(std::span<const double> q, std::size_t s);

// --- entropy-regularized optimum ----------------------------------------------

struct EntropyRegOptimum {
  /// argmax of Z + tau_ent H(pi): pi*(y) proportional to exp(R(y) / tau_ent).
  std::vector<double> probs;
  double incorrect_mass = 0.0;
  /// max |q*(y) - 1/m| over the correct set.
  double within_correct_deviation = 0.0;
  /// Smallest tau_ent at which the optimum's incorrect mass reaches 1%.
  double crossover_tau = 0.0;
};

EntropyRegOptimum entropy_reg_optimum(const EnvSpec& env, double tau_ent);

/// Exact gradient ascent on Z + tau_ent H from `start`; returns final probabilities.
std::vector<double> entropy_reg_ascent(PolicyState start, const EnvSpec& env, double tau_ent, std::size_t steps);

}  // namespace rlvr::oracle
