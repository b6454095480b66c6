#include <doctest.h>

#include <cmath>
#include <map>

#include "rlvr/environment.hpp"
#include "rlvr/error.hpp"
#include "support.hpp"

using namespace rlvr;

namespace {

EnvSpec default_env(InitProfile profile) {
  EnvSpec env;
  env.init_profile = profile;
  return env;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

TEST_CASE("skewed profile gives q = 4/7, 2/7, 1/7") {
  const ProbeSnapshot s = snapshot(init_policy(default_env(InitProfile::Skewed)), default_env(InitProfile::Skewed));
  CHECK(std::abs(s.conditional_q[0] - 4.0 / 7.0) < 1e-12);
  CHECK(std::abs(s.conditional_q[1] - 2.0 / 7.0) < 1e-12);
  CHECK(std::abs(s.conditional_q[2] - 1.0 / 7.0) < 1e-12);
  CHECK(round2(s.conditional_q[0]) == 0.57);
  CHECK(round2(s.conditional_q[1]) == 0.29);
  CHECK(round2(s.conditional_q[2]) == 0.14);
}

TEST_CASE("mild skew profile rounds to 0.41, 0.32, 0.27") {
  const EnvSpec env = default_env(InitProfile::MildSkew);
  const ProbeSnapshot s = snapshot(init_policy(env), env);
  CHECK(round2(s.conditional_q[0]) == 0.41);
  CHECK(round2(s.conditional_q[1]) == 0.32);
  CHECK(round2(s.conditional_q[2]) == 0.27);
}

TEST_CASE("uniform profile gives q = 1/3 each") {
  const EnvSpec env = default_env(InitProfile::Uniform);
  const ProbeSnapshot s = snapshot(init_policy(env), env);
  for (double q : s.conditional_q) CHECK(std::abs(q - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("incorrect tokens carry background mass 0.01 before normalization") {
  for (InitProfile profile : {InitProfile::Uniform, InitProfile::MildSkew, InitProfile::Skewed}) {
    const EnvSpec env = default_env(profile);
    const ProbeSnapshot s = snapshot(init_policy(env), env);
    // correct masses sum to 1 before normalization, so total = 1 + 17 * 0.01
    const double total = 1.0 + 0.01 * 17.0;
    CHECK(std::abs(s.correct_mass - 1.0 / total) < 1e-12);
    for (std::size_t y = 3; y < 20; ++y) CHECK(std::abs(s.probs[y] - 0.01 / total) < 1e-12);
  }
}

TEST_CASE("custom ratios are honoured and validated") {
  EnvSpec env;
  env.vocab_size = 6;
  env.correct_indices = {1, 4};
  env.init_profile = InitProfile::Custom;
  env.custom_ratios = {3.0, 1.0};
  const ProbeSnapshot s = snapshot(init_policy(env), env);
  CHECK(std::abs(s.conditional_q[0] - 0.75) < 1e-12);

  env.custom_ratios = {3.0, 0.0};
  CHECK_THROWS_AS(init_policy(env), InvalidConfig);
  env.custom_ratios = {3.0, -1.0};
  CHECK_THROWS_AS(env.validate(), InvalidConfig);
  env.custom_ratios = {1.0};
  CHECK_THROWS_AS(env.validate(), InvalidConfig);
}

TEST_CASE("environment validation") {
  EnvSpec env;
  env.correct_indices = {};
  CHECK_THROWS_AS(env.validate(), InvalidConfig);
  env = EnvSpec{};
  env.vocab_size = 3;
  CHECK_THROWS_AS(env.validate(), InvalidConfig);  // m == V
  env = EnvSpec{};
  env.correct_indices = {0, 0, 1};
  CHECK_THROWS_AS(env.validate(), InvalidConfig);
  env = EnvSpec{};
  env.correct_indices = {0, 1, 20};
  CHECK_THROWS_AS(env.validate(), InvalidConfig);
  env = EnvSpec{};
  env.background_mass = -0.1;
  CHECK_THROWS_AS(env.validate(), InvalidConfig);
  env = EnvSpec{};
  env.correct_indices = {0, 1};
  CHECK_THROWS_AS(env.validate(), InvalidConfig);  // skewed needs three correct tokens
  env.init_profile = InitProfile::Uniform;
  CHECK_NOTHROW(env.validate());
}

TEST_CASE("init profile names round trip") {
  for (InitProfile p : {InitProfile::Uniform, InitProfile::MildSkew, InitProfile::Skewed, InitProfile::Custom}) {
    CHECK(parse_init_profile(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_init_profile("lopsided"), InvalidConfig);
}

TEST_CASE("batches are internally consistent") {
  CounterRng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const EnvSpec env = testing::random_env(rng, 2, 25);
    const PolicyState policy = testing::random_policy(rng, env.vocab_size);
    const std::size_t k = rng.uniform_int(1, 64);
    const RolloutBatch b = sample_batch(policy, env, k, SeedStream(rng.next_u64(), trial));
    const auto mask = env.correct_mask();
    REQUIRE(b.size() == k);
    std::size_t total = 0;
    std::size_t correct = 0;
    for (std::size_t y = 0; y < env.vocab_size; ++y) {
      total += b.counts[y];
      if (mask[y]) correct += b.counts[y];
    }
    CHECK(total == k);
    CHECK(correct == b.n_correct);
    std::vector<std::size_t> recount(env.vocab_size, 0);
    int reward_sum = 0;
    for (std::size_t i = 0; i < k; ++i) {
      ++recount[b.samples[i]];
      CHECK(b.rewards[i] == (mask[b.samples[i]] ? 1 : 0));
      reward_sum += b.rewards[i];
    }
    CHECK(recount == b.counts);
    CHECK(static_cast<std::size_t>(reward_sum) == b.n_correct);
  }
}

TEST_CASE("sampling is a pure function of the seed stream") {
  const EnvSpec env;
  const PolicyState policy = init_policy(env);
  const RolloutBatch a = sample_batch(policy, env, 32, SeedStream(42, 3));
  const RolloutBatch b = sample_batch(policy, env, 32, SeedStream(42, 3));
  const RolloutBatch c = sample_batch(policy, env, 32, SeedStream(42, 4));
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}

TEST_CASE("seed stream values are pinned") {
  // Guards cross-platform reproducibility of every trace.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  const SeedStream s(1, 0);
  CHECK(s.bits(0) == SeedStream(1, 0).bits(0));
  CHECK(s.uniform(0) >= 0.0);
  CHECK(s.uniform(0) < 1.0);
}

TEST_CASE("a point-mass policy always samples its token") {
  EnvSpec env;
  env.init_profile = InitProfile::Uniform;
  PolicyState policy;
  policy.logits.assign(env.vocab_size, -1000.0);
  policy.logits[5] = 0.0;
  for (std::uint64_t step = 0; step < 20; ++step) {
    const RolloutBatch b = sample_batch(policy, env, 16, SeedStream(3, step));
    CHECK(b.counts[5] == 16);
    CHECK(b.n_correct == 0);
  }
  policy.logits[5] = -1000.0;
  policy.logits[1] = 0.0;
  const RolloutBatch b = sample_batch(policy, env, 16, SeedStream(3, 0));
  CHECK(b.n_correct == 16);
}

TEST_CASE("mean count of a quarter-probability token over 10000 batches of 8") {
  EnvSpec env;
  env.vocab_size = 4;
  env.correct_indices = {0};
  env.init_profile = InitProfile::Uniform;
  const PolicyState policy = testing::policy_from_probs({0.25, 0.5, 0.125, 0.125});
  const std::size_t batches = 10000;
  double sum = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    sum += static_cast<double>(sample_batch(policy, env, 8, SeedStream(11, b)).counts[0]);
  }
  const double mean = sum / static_cast<double>(batches);
  const double se = std::sqrt(8.0 * 0.25 * 0.75 / static_cast<double>(batches));
  CHECK(std::abs(mean - 2.0) < 3.0 * se);
}

TEST_CASE("all-equal counts of a uniform correct triple occur with probability 90/729") {
  EnvSpec env;
  env.vocab_size = 4;
  env.correct_indices = {0, 1, 2};
  env.init_profile = InitProfile::Uniform;
  PolicyState policy;
  policy.logits = {0.0, 0.0, 0.0, -800.0};
  const std::size_t batches = 100000;
  std::size_t equal = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const RolloutBatch batch = sample_batch(policy, env, 6, SeedStream(5, b));
    REQUIRE(batch.n_correct == 6);
    if (batch.counts[0] == 2 && batch.counts[1] == 2 && batch.counts[2] == 2) ++equal;
  }
  const double p = 90.0 / 729.0;
  const double freq = static_cast<double>(equal) / static_cast<double>(batches);
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(batches));
  CHECK(std::abs(freq - p) < 3.0 * se);
}

TEST_CASE("empirical counts converge to K pi within 4 standard errors") {
  const EnvSpec env;
  const PolicyState policy = init_policy(env);
  const auto pi = softmax(policy.logits);
  const std::size_t k = 8;
  const std::size_t batches = 10000;
  std::vector<double> sum(env.vocab_size, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    const RolloutBatch batch = sample_batch(policy, env, k, SeedStream(99, b));
    for (std::size_t y = 0; y < env.vocab_size; ++y) sum[y] += static_cast<double>(batch.counts[y]);
  }
  for (std::size_t y = 0; y < env.vocab_size; ++y) {
    const double expected = static_cast<double>(k) * pi[y];
    const double se = std::sqrt(static_cast<double>(k) * pi[y] * (1.0 - pi[y]) / static_cast<double>(batches));
    CHECK(std::abs(sum[y] / static_cast<double>(batches) - expected) < 4.0 * se);
  }
}

TEST_CASE("sampling threshold probability") {
  CHECK(sampling_threshold_probability(0.0, 8) == 0.0);
  CHECK(sampling_threshold_probability(1.0, 8) == 1.0);
  const double p = sampling_threshold_probability(0.001, 8);
  CHECK(std::abs(p - (1.0 - std::pow(0.999, 8))) < 1e-15);
  CHECK(std::abs(p - 0.007972) < 5e-7);
  CHECK(std::abs(p - 8 * 0.001) < 1e-4);
}
