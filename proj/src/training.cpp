#include "rlvr/training.hpp"

#include "rlvr/error.hpp"

namespace rlvr {

RunResult run_training(const EnvSpec& env, const OptimizerConfig& optimizer, std::size_t k, std::size_t steps,
                       std::uint64_t seed, double entropy_threshold) {
  if (steps == 0) throw InvalidConfig("run_training: steps must be >= 1");
  if (k == 0) throw InvalidConfig("run_training: K must be >= 1");
  env.validate();
  optimizer.validate();

  RunResult result;
  result.env = env;
  result.optimizer = optimizer;
  result.k = k;
  result.steps = steps;
  result.seed = seed;
  result.entropy_threshold = entropy_threshold;
  result.traces.reserve(steps);

  PolicyState policy = init_policy(env);
  for (std::size_t t = 0; t < steps; ++t) {
    const RolloutBatch batch = sample_batch(policy, env, k, SeedStream(seed, t));
    const AdvantageVector adv = compute_advantages(batch, policy, optimizer);
    try {
      UpdateResult upd = policy_gradient_update(policy, batch, adv, optimizer);
      result.traces.push_back(record_step(policy, env, batch, upd.token_grad_mass, adv.a_plus, t));
      policy = std::move(upd.policy);
    } catch (const NonFiniteUpdate& e) {
      result.aborted = true;
      result.abort_reason = "step " + std::to_string(t) + ": " + e.what();
      break;
    }
  }

  result.final_policy = policy;
  result.final_snapshot = snapshot(policy, env);
  const Outcome o = classify_outcome(result, entropy_threshold);
  result.winner = o.winner;
  result.collapsed = o.collapsed;
  return result;
}

}  // namespace rlvr
