#pragma once

// Hand-rolled generators for property tests. Everything is driven by
// CounterRng so failures reproduce from the printed seed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "rlvr/environment.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/rng.hpp"

namespace testing {

inline std::vector<double> random_logits(rlvr::CounterRng& rng, std::size_t v, double lo, double hi) {
  std::vector<double> z(v);
  for (double& x : z) x = rng.uniform(lo, hi);
  return z;
}

inline rlvr::PolicyState random_policy(rlvr::CounterRng& rng, std::size_t v, double scale = 3.0) {
  rlvr::PolicyState p;
  p.logits = random_logits(rng, v, -scale, scale);
  return p;
}

/// V in [min_v, max_v], a random correct subset of size in [1, V - 1].
inline rlvr::EnvSpec random_env(rlvr::CounterRng& rng, std::size_t min_v, std::size_t max_v) {
  rlvr::EnvSpec env;
  env.vocab_size = rng.uniform_int(min_v, max_v);
  std::vector<std::size_t> idx(env.vocab_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  idx.resize(rng.uniform_int(1, env.vocab_size - 1));
  env.correct_indices = idx;
  env.init_profile = rlvr::InitProfile::Uniform;
  return env;
}

/// Samples drawn uniformly over the vocabulary (not from any policy).
inline rlvr::RolloutBatch random_batch(rlvr::CounterRng& rng, const rlvr::EnvSpec& env, std::size_t min_k,
                                       std::size_t max_k) {
  std::vector<std::size_t> samples(rng.uniform_int(min_k, max_k));
  for (auto& s : samples) s = rng.uniform_int(0, env.vocab_size - 1);
  return rlvr::make_batch(env, samples);
}

/// Logits whose softmax is exactly proportional to `probs` (up to rounding).
inline rlvr::PolicyState policy_from_probs(const std::vector<double>& probs) {
  rlvr::PolicyState p;
  for (double x : probs) p.logits.push_back(std::log(x));
  return p;
}

inline double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace testing
