#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/environment.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

enum class Method { GRPO, UCPO, GlobalEntropy };

std::string_view to_string(Method method) noexcept;
/// Accepts "grpo", "ucpo", "global_entropy".
Method parse_method(std::string_view name);

struct OptimizerConfig {
  Method method = Method::GRPO;
  double learning_rate = 0.5;
  /// UCPO interpolation between q-weighting (0) and uniform weighting (1).
  double tau = 0.2;
  /// Coefficient of the full-distribution entropy bonus (GlobalEntropy only).
  double tau_ent = 0.0;
  /// Stabilizer in the group-normalized advantage denominator.
  double adv_eps = 1e-4;

  void validate() const;
};

struct AdvantageVector {
  std::vector<double> per_sample;
  Method method_tag = Method::GRPO;
  /// Group-normalized advantage shared by correct (a_plus) and incorrect
  /// (a_minus) samples before any reweighting. Zero when absent from the batch.
  double a_plus = 0.0;
  double a_minus = 0.0;
};

/// A_i = (R_i - mean R) / (std R + adv_eps) with the population standard
/// deviation. Equal-reward batches give all-zero advantages.
AdvantageVector grpo_advantages(const RolloutBatch& batch, double adv_eps);

/// A_i = (R_i - mean R) / K: the batch-mean-baseline estimate of grad E[R],
/// used as the reward term of the global entropy objective E[R] + tau_ent * H.
AdvantageVector mean_baseline_advantages(const RolloutBatch& batch);

/// Floor applied to the self-normalized probabilities before inversion.
inline constexpr double kUcpoProbFloor = 1e-12;

struct UcpoWeights {
  std::vector<double> weights;
  /// How many entries hit kUcpoProbFloor.
  std::size_t clamped = 0;
};

/// Blended self-normalized inverse-probability weights:
///   qhat_i = p_i / sum_j p_j,  v_i = 1 / qhat_i,
///   w_i = (1 - tau) / n + tau * v_i / sum_j v_j.
UcpoWeights ucpo_weights(std::span<const double> correct_probs, double tau);

/// UCPO advantages. The weights are computed over the distinct correct tokens
/// of the batch; token t receives the budget n_correct * A+ * w_t, split evenly
/// over its c_t samples. Incorrect samples keep the GRPO A-. A batch without
/// correct samples returns the GRPO advantages unchanged.
AdvantageVector ucpo_advantages(const RolloutBatch& batch, const PolicyState& policy,
                                const OptimizerConfig& config);

/// Dispatches on config.method. GlobalEntropy uses mean_baseline_advantages;
/// its entropy term is added in policy_gradient_update.
AdvantageVector compute_advantages(const RolloutBatch& batch, const PolicyState& policy,
                                   const OptimizerConfig& config);

/// Exact d/dz [tau_ent * H(softmax(z))] = -tau_ent * pi_k * (log pi_k + H).
std::vector<double> global_entropy_gradient(const PolicyState& policy, double tau_ent);

/// Score-function direction of the sampled surrogate sum_i A_i log pi(y_i):
///   g_k = sum_{i: y_i = k} A_i - pi_k * sum_i A_i.
std::vector<double> surrogate_gradient(const PolicyState& policy, const RolloutBatch& batch,
                                       std::span<const double> advantages);

struct UpdateResult {
  PolicyState policy;
  /// Applied logit change.
  std::vector<double> logit_delta;
  /// Per token: sum of |A_i| over the samples of that token.
  std::vector<double> token_grad_mass;
  /// Per token: signed sum of A_i over the samples of that token.
  std::vector<double> token_advantage;
};

/// One ascent step z <- z + eta * (surrogate_gradient [+ entropy gradient]).
/// Throws NonFiniteUpdate (with a state dump) if the new logits are not finite.
UpdateResult policy_gradient_update(const PolicyState& policy, const RolloutBatch& batch,
                                    const AdvantageVector& adv, const OptimizerConfig& config);

}  // namespace rlvr
