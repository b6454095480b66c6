#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rlvr/diagnostics.hpp"
#include "rlvr/error.hpp"
#include "rlvr/training.hpp"
#include "support.hpp"

using namespace rlvr;

namespace {

StepTrace trace_for(const PolicyState& policy, const EnvSpec& env, const RolloutBatch& batch,
                    const OptimizerConfig& cfg) {
  const auto adv = compute_advantages(batch, policy, cfg);
  const auto upd = policy_gradient_update(policy, batch, adv, cfg);
  return record_step(policy, env, batch, upd.token_grad_mass, adv.a_plus, 0);
}

// max/min of the gradient mass over the correct tokens present in the batch.
double mass_ratio(const StepTrace& t, const EnvSpec& env) {
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t c : env.correct_indices) {
    if (t.counts[c] == 0) continue;
    hi = std::max(hi, t.per_token_grad_mass[c]);
    lo = std::min(lo, t.per_token_grad_mass[c]);
  }
  return hi / lo;
}

bool informative(const RolloutBatch& b, const EnvSpec& env) {
  std::vector<std::size_t> present;
  for (std::size_t c : env.correct_indices) {
    if (b.counts[c] != 0) present.push_back(b.counts[c]);
  }
  if (present.size() < 2 || b.n_correct == b.size()) return false;
  return std::any_of(present.begin(), present.end(), [&](std::size_t c) { return c != present.front(); });
}

OptimizerConfig ucpo(double tau) {
  OptimizerConfig c;
  c.method = Method::UCPO;
  c.tau = tau;
  return c;
}

}  // namespace

TEST_CASE("record_step on the uniform policy with K = 9") {
  EnvSpec env;
  env.init_profile = InitProfile::Uniform;
  PolicyState policy;
  policy.logits.assign(env.vocab_size, 0.0);
  const RolloutBatch b = make_batch(env, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  const StepTrace t = trace_for(policy, env, b, OptimizerConfig{});
  for (double e : t.expected_counts) CHECK(std::abs(e - 9.0 * 0.05) < 1e-15);
  CHECK(t.expected_counts[0] == 9.0 * t.snapshot.probs[0]);
  // 0.05 < 1/9, so every correct token sits below the sampling threshold
  CHECK(t.below_threshold == std::vector<std::size_t>{0, 1, 2});
  CHECK(t.dominant_correct == 0);
}

TEST_CASE("below-threshold membership follows pi < 1/K") {
  EnvSpec env;
  env.vocab_size = 4;
  env.correct_indices = {0, 1, 2};
  env.init_profile = InitProfile::Uniform;
  const PolicyState policy = testing::policy_from_probs({0.6, 0.389, 0.001, 0.01});
  const RolloutBatch b = make_batch(env, {0, 0, 1, 0, 3, 0, 1, 0});
  const StepTrace t = trace_for(policy, env, b, OptimizerConfig{});
  CHECK(t.below_threshold == std::vector<std::size_t>{2});
  CHECK(t.dominant_correct == 0);
}

TEST_CASE("a zero-advantage step records zero gradient mass") {
  const EnvSpec env;
  const PolicyState policy = init_policy(env);
  const RolloutBatch b = make_batch(env, {0, 1, 2, 0});
  const StepTrace t = trace_for(policy, env, b, OptimizerConfig{});
  for (double m : t.per_token_grad_mass) CHECK(m == 0.0);
}

TEST_CASE("trace invariants over random steps") {
  CounterRng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const EnvSpec env = testing::random_env(rng, 2, 20);
    const PolicyState policy = testing::random_policy(rng, env.vocab_size);
    const std::size_t k = rng.uniform_int(1, 32);
    const RolloutBatch b = sample_batch(policy, env, k, SeedStream(trial, 0));
    const StepTrace t = trace_for(policy, env, b, OptimizerConfig{});
    CHECK(std::abs(testing::sum(t.expected_counts) - static_cast<double>(k)) < 1e-9);
    for (std::size_t y : t.below_threshold) {
      CHECK(std::find(env.correct_indices.begin(), env.correct_indices.end(), y) != env.correct_indices.end());
    }
    CHECK(t.dominant_correct < env.num_correct());
    CHECK(t.dominant_correct == argmax(t.snapshot.conditional_q));
  }
}

TEST_CASE("grpo gradient mass is count times |A| per token") {
  CounterRng rng(18);
  for (int trial = 0; trial < 300; ++trial) {
    const EnvSpec env = testing::random_env(rng, 2, 20);
    const PolicyState policy = testing::random_policy(rng, env.vocab_size);
    const RolloutBatch b = sample_batch(policy, env, rng.uniform_int(1, 32), SeedStream(trial, 1));
    const auto adv = grpo_advantages(b, 1e-4);
    const StepTrace t = trace_for(policy, env, b, OptimizerConfig{});
    const auto mask = env.correct_mask();
    for (std::size_t y = 0; y < env.vocab_size; ++y) {
      const double a = mask[y] ? adv.a_plus : adv.a_minus;
      CHECK(t.per_token_grad_mass[y] == doctest::Approx(static_cast<double>(b.counts[y]) * std::abs(a)).epsilon(1e-14));
    }
  }
}

TEST_CASE("ucpo equalizes gradient mass exactly when the present correct tokens are equally likely") {
  CounterRng rng(19);
  std::size_t checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    EnvSpec env;
    env.init_profile = InitProfile::Uniform;
    const PolicyState policy = init_policy(env);
    const RolloutBatch b = sample_batch(policy, env, rng.uniform_int(4, 32), SeedStream(trial, 2));
    if (!informative(b, env)) continue;
    const double tau = rng.uniform(0.01, 1.0);
    const double g = mass_ratio(trace_for(policy, env, b, OptimizerConfig{}), env);
    const double u = mass_ratio(trace_for(policy, env, b, ucpo(tau)), env);
    CHECK(u == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(u <= g);
    ++checked;
  }
  CHECK(checked > 500);
}

TEST_CASE("ucpo narrows the gradient-mass spread on on-policy batches from the skewed start") {
  const EnvSpec env;
  const PolicyState policy = init_policy(env);
  std::size_t n = 0;
  std::size_t narrower = 0;
  double sum_g = 0.0;
  double sum_u = 0.0;
  for (std::uint64_t s = 0; s < 5000; ++s) {
    const RolloutBatch b = sample_batch(policy, env, 16, SeedStream(20, s));
    if (!informative(b, env)) continue;
    const double g = mass_ratio(trace_for(policy, env, b, OptimizerConfig{}), env);
    const double u = mass_ratio(trace_for(policy, env, b, ucpo(0.2)), env);
    ++n;
    if (u <= g) ++narrower;
    sum_g += g;
    sum_u += u;
  }
  REQUIRE(n > 1000);
  CHECK(static_cast<double>(narrower) / static_cast<double>(n) > 0.95);
  CHECK(sum_u < sum_g);
}

TEST_CASE("theoretical drift is eta A+ K (pi_i - pi_j) from the trace fields") {
  const EnvSpec env;
  OptimizerConfig cfg;
  const RunResult run = run_training(env, cfg, 16, 40, 3);
  const DriftReport d = divergence_drift(run.traces, 0, 2, cfg.learning_rate);
  REQUIRE(d.theoretical.size() == run.traces.size());
  REQUIRE(d.realized.size() == run.traces.size() - 1);
  for (std::size_t t = 0; t < run.traces.size(); ++t) {
    const StepTrace& s = run.traces[t];
    CHECK(d.theoretical[t] == cfg.learning_rate * s.a_plus * 16.0 * (s.correct_probs[0] - s.correct_probs[2]));
  }
  for (std::size_t t = 0; t + 1 < run.traces.size(); ++t) {
    CHECK(d.realized[t] == run.traces[t + 1].snapshot.log_ratio(0, 2) - run.traces[t].snapshot.log_ratio(0, 2));
  }
}

TEST_CASE("drift between symmetric tokens averages to zero") {
  EnvSpec env;
  env.init_profile = InitProfile::Uniform;
  const OptimizerConfig cfg;
  const std::size_t seeds = 1000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const RunResult run = run_training(env, cfg, 16, 2, seed);
    const double d = divergence_drift(run.traces, 0, 1, cfg.learning_rate).realized[0];
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(seeds);
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(mean) < 4.0 * se);
}

TEST_CASE("grpo from the skewed start drifts the dominant-minority log-ratio upward") {
  const EnvSpec env;
  const OptimizerConfig cfg;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunResult run = run_training(env, cfg, 16, 300, seed);
    const DriftReport d = divergence_drift(run.traces, 0, 2, cfg.learning_rate);
    CHECK(d.mean_realized > 0.0);
    CHECK(d.mean_theoretical > 0.0);
    CHECK(run.final_snapshot.log_ratio(0, 2) > run.traces.front().snapshot.log_ratio(0, 2));
  }
}

TEST_CASE("divergence_drift needs two traces") {
  const RunResult run = run_training(EnvSpec{}, OptimizerConfig{}, 16, 1, 1);
  CHECK_THROWS_AS(divergence_drift(run.traces, 0, 1, 0.5), InvalidInput);
}

TEST_CASE("classify_outcome") {
  RunResult r;
  PolicyState p;
  p.logits = {std::log(0.98), std::log(0.01), std::log(0.01), std::log(0.5)};
  const std::vector<std::size_t> correct{0, 1, 2};
  r.final_snapshot = snapshot(p, correct);
  Outcome o = classify_outcome(r, 0.5);
  CHECK(o.collapsed);
  CHECK(o.winner == 0);

  p.logits = {0.0, 0.0, 0.0, 0.0};
  r.final_snapshot = snapshot(p, correct);
  o = classify_outcome(r, 0.999);
  CHECK_FALSE(o.collapsed);
}

TEST_CASE("training loop contract") {
  const EnvSpec env;
  CHECK_THROWS_AS(run_training(env, OptimizerConfig{}, 16, 0, 1), InvalidConfig);
  CHECK_THROWS_AS(run_training(env, OptimizerConfig{}, 0, 10, 1), InvalidConfig);
  const RunResult one = run_training(env, OptimizerConfig{}, 16, 1, 1);
  CHECK(one.traces.size() == 1);
  CHECK(one.traces[0].step == 0);
  const RunResult run = run_training(env, OptimizerConfig{}, 16, 25, 9);
  for (std::size_t t = 0; t < run.traces.size(); ++t) CHECK(run.traces[t].step == t);
  CHECK(run.winner == argmax(run.final_snapshot.conditional_q));
  CHECK(run.final_policy.version == 25);
}

TEST_CASE("grpo from the skewed start collapses onto the dominant token") {
  const EnvSpec env;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunResult run = run_training(env, OptimizerConfig{}, 16, 300, seed);
    CHECK(run.collapsed);
    CHECK(run.winner == 0);
  }
}
