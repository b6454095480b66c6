#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/policy.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

enum class InitProfile { Uniform, MildSkew, Skewed, Custom };

std::string_view to_string(InitProfile profile) noexcept;
/// Accepts "uniform", "mild_skew", "skewed", "custom". Throws InvalidConfig otherwise.
InitProfile parse_init_profile(std::string_view name);

/// The controlled environment: V tokens, m of them correct, binary reward.
struct EnvSpec {
  std::size_t vocab_size = 20;
  std::vector<std::size_t> correct_indices{0, 1, 2};
  InitProfile init_profile = InitProfile::Skewed;
  /// Used only with InitProfile::Custom; one positive ratio per correct index.
  std::vector<double> custom_ratios;
  /// Pre-normalization mass of each incorrect token.
  double background_mass = 0.01;

  std::size_t num_correct() const noexcept { return correct_indices.size(); }
  /// Throws InvalidConfig when an invariant is violated.
  void validate() const;
  /// Per-token membership mask of length vocab_size.
  std::vector<bool> correct_mask() const;
  /// Relative masses of the correct tokens for the configured profile.
  std::vector<double> profile_ratios() const;
};

/// K on-policy draws with their rewards and per-token counts.
struct RolloutBatch {
  std::vector<std::size_t> samples;
  std::vector<int> rewards;
  std::vector<std::size_t> counts;
  std::size_t n_correct = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Builds the initial policy: each incorrect token gets pre-normalization mass
/// `background_mass`, the correct tokens share unit pre-normalization mass in
/// the profile's ratios, and logits are the logs of the normalized masses.
PolicyState init_policy(const EnvSpec& env);

/// K i.i.d. categorical draws from softmax(policy.logits) by inverse CDF with a
/// left-to-right scan. Draw i consumes stream.uniform(i).
RolloutBatch sample_batch(const PolicyState& policy, const EnvSpec& env, std::size_t k,
                          const SeedStream& stream);

/// Builds a batch from explicit samples (rewards and counts derived from env).
RolloutBatch make_batch(const EnvSpec& env, std::vector<std::size_t> samples);

/// P(N_y >= 1) = 1 - (1 - p)^K.
double sampling_threshold_probability(double p, std::size_t k);

ProbeSnapshot snapshot(const PolicyState& policy, const EnvSpec& env);

}  // namespace rlvr
