#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlvr/environment.hpp"
#include "rlvr/optimizers.hpp"
#include "rlvr/policy.hpp"

namespace rlvr {

/// Per-step record of the tracked metrics. `snapshot` describes the policy the
/// batch was drawn from, i.e. the state before this step's update.
struct StepTrace {
  std::size_t step = 0;
  ProbeSnapshot snapshot;
  std::vector<std::size_t> counts;
  /// Length V; sum of |A_i| over the samples of each token.
  std::vector<double> per_token_grad_mass;
  /// pi(c) for each correct token, in correct-set order.
  std::vector<double> correct_probs;
  /// Length V; K * pi(y).
  std::vector<double> expected_counts;
  /// Position in the correct set of argmax q (lowest position on ties).
  std::size_t dominant_correct = 0;
  /// Correct token indices with pi(y) < 1/K.
  std::vector<std::size_t> below_threshold;
  /// Shared GRPO advantage of correct samples in this batch.
  double a_plus = 0.0;
  std::size_t n_correct = 0;
  std::size_t k = 0;
};

/// Builds a StepTrace from the pre-update policy, its batch and the per-token
/// gradient mass of the update. Pure.
StepTrace record_step(const PolicyState& policy, const EnvSpec& env, const RolloutBatch& batch,
                      std::span<const double> grad_mass, double a_plus, std::size_t step);

struct RunResult {
  std::vector<StepTrace> traces;
  ProbeSnapshot final_snapshot;
  PolicyState final_policy;
  /// Position in the correct set of the dominant token after the last update.
  std::size_t winner = 0;
  bool collapsed = false;
  bool aborted = false;
  std::string abort_reason;

  EnvSpec env;
  OptimizerConfig optimizer;
  std::size_t k = 0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  double entropy_threshold = 0.5;
};

struct DriftReport {
  /// realized[t] = logratio(t + 1) - logratio(t), one entry fewer than traces.
  std::vector<double> realized;
  /// theoretical[t] = eta * A+_t * K * (pi_t(i) - pi_t(j)).
  std::vector<double> theoretical;
  double mean_realized = 0.0;
  double mean_theoretical = 0.0;
};

/// Realized and theoretical per-step drift of log pi(c_a) / pi(c_b), where a and
/// b are positions in the correct set. Throws InvalidInput with fewer than two
/// traces.
DriftReport divergence_drift(std::span<const StepTrace> traces, std::size_t a, std::size_t b,
                             double learning_rate);

struct Outcome {
  bool collapsed = false;
  /// Position in the correct set of the dominant token.
  std::size_t winner = 0;
};

/// Collapsed iff the final normalized conditional entropy is below the threshold.
Outcome classify_outcome(const RunResult& result, double entropy_threshold);

/// Default normalized-entropy threshold for collapse.
inline constexpr double kDefaultCollapseThreshold = 0.5;

}  // namespace rlvr
