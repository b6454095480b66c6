#include "rlvr/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlvr/error.hpp"

namespace rlvr {

std::string_view to_string(InitProfile profile) noexcept {
  switch (profile) {
    case InitProfile::Uniform: return "uniform";
    case InitProfile::MildSkew: return "mild_skew";
    case InitProfile::Skewed: return "skewed";
    case InitProfile::Custom: return "custom";
  }
  return "unknown";
}

InitProfile parse_init_profile(std::string_view name) {
  if (name == "uniform") return InitProfile::Uniform;
  if (name == "mild_skew") return InitProfile::MildSkew;
  if (name == "skewed") return InitProfile::Skewed;
  if (name == "custom") return InitProfile::Custom;
  throw InvalidConfig("unknown init profile '" + std::string(name) +
                      "' (expected uniform, mild_skew, skewed or custom)");
}

void EnvSpec::validate() const {
  const std::size_t m = correct_indices.size();
  if (m < 1 || m >= vocab_size) {
    throw InvalidConfig("env: need 1 <= |correct| < vocab_size, got |correct|=" + std::to_string(m) +
                        ", vocab_size=" + std::to_string(vocab_size));
  }
  std::vector<bool> seen(vocab_size, false);
  for (std::size_t c : correct_indices) {
    if (c >= vocab_size) throw InvalidConfig("env: correct index " + std::to_string(c) + " out of range");
    if (seen[c]) throw InvalidConfig("env: duplicate correct index " + std::to_string(c));
    seen[c] = true;
  }
  if (!(background_mass >= 0.0) || !std::isfinite(background_mass)) {
    throw InvalidConfig("env: background_mass must be finite and >= 0");
  }
  (void)profile_ratios();
}

std::vector<bool> EnvSpec::correct_mask() const {
  std::vector<bool> mask(vocab_size, false);
  for (std::size_t c : correct_indices) mask[c] = true;
  return mask;
}

std::vector<double> EnvSpec::profile_ratios() const {
  const std::size_t m = correct_indices.size();
  switch (init_profile) {
    case InitProfile::Uniform:
      return std::vector<double>(m, 1.0);
    case InitProfile::MildSkew:
    case InitProfile::Skewed:
      if (m != 3) {
        throw InvalidConfig("env: profile '" + std::string(to_string(init_profile)) +
                            "' is defined for exactly 3 correct tokens; use custom ratios");
      }
      return init_profile == InitProfile::MildSkew ? std::vector<double>{1.5, 1.2, 1.0}
                                                    : std::vector<double>{4.0, 2.0, 1.0};
    case InitProfile::Custom:
      if (custom_ratios.size() != m) {
        throw InvalidConfig("env: custom profile needs " + std::to_string(m) + " ratios, got " +
                            std::to_string(custom_ratios.size()));
      }
      for (double r : custom_ratios) {
        if (!(r > 0.0) || !std::isfinite(r)) throw InvalidConfig("env: custom ratios must be positive and finite");
      }
      return custom_ratios;
  }
  throw InvalidConfig("env: unknown init profile");
}

PolicyState init_policy(const EnvSpec& env) {
  env.validate();
  const std::vector<double> ratios = env.profile_ratios();
  const double ratio_sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);

  std::vector<double> mass(env.vocab_size, env.background_mass);
  for (std::size_t a = 0; a < ratios.size(); ++a) mass[env.correct_indices[a]] = ratios[a] / ratio_sum;
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);

  PolicyState policy;
  policy.logits.resize(env.vocab_size);
  for (std::size_t y = 0; y < env.vocab_size; ++y) {
    // zero background mass still needs a finite logit
    policy.logits[y] = std::log(std::max(mass[y] / total, kDegenerateMass));
  }
  return policy;
}

RolloutBatch make_batch(const EnvSpec& env, std::vector<std::size_t> samples) {
  const std::vector<bool> mask = env.correct_mask();
  RolloutBatch batch;
  batch.counts.assign(env.vocab_size, 0);
  batch.rewards.reserve(samples.size());
  for (std::size_t y : samples) {
    if (y >= env.vocab_size) throw InvalidInput("make_batch: sample " + std::to_string(y) + " out of range");
    const int r = mask[y] ? 1 : 0;
    batch.rewards.push_back(r);
    batch.n_correct += static_cast<std::size_t>(r);
    ++batch.counts[y];
  }
  batch.samples = std::move(samples);
  return batch;
}

RolloutBatch sample_batch(const PolicyState& policy, const EnvSpec& env, std::size_t k,
                          const SeedStream& stream) {
  if (k == 0) throw InvalidInput("sample_batch: K must be >= 1");
  if (policy.size() != env.vocab_size) throw InvalidInput("sample_batch: policy size does not match env");
  const std::vector<double> probs = softmax(policy.logits);
  std::vector<double> cdf(probs.size());
  std::partial_sum(probs.begin(), probs.end(), cdf.begin());

  // Rounding can leave cdf.back() slightly below 1; the fallback is the last
  // token with nonzero probability.
  std::size_t last_positive = 0;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    if (probs[y] > 0.0) last_positive = y;
  }

  std::vector<std::size_t> samples(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double u = stream.uniform(i);
    std::size_t y = 0;
    while (y < cdf.size() && !(u < cdf[y])) ++y;
    samples[i] = y < cdf.size() ? y : last_positive;
  }
  return make_batch(env, std::move(samples));
}

double sampling_threshold_probability(double p, std::size_t k) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("sampling_threshold_probability: p must lie in [0, 1]");
  if (k == 0) throw InvalidInput("sampling_threshold_probability: K must be >= 1");
  return -std::expm1(static_cast<double>(k) * std::log1p(-p));
}

ProbeSnapshot snapshot(const PolicyState& policy, const EnvSpec& env) {
  if (policy.size() != env.vocab_size) throw InvalidInput("snapshot: policy size does not match env");
  return snapshot(policy, env.correct_indices);
}

}  // namespace rlvr
