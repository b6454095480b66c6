#pragma once

#include <cstddef>
#include <cstdint>

#include "rlvr/diagnostics.hpp"
#include "rlvr/environment.hpp"
#include "rlvr/optimizers.hpp"

namespace rlvr {

/// One seeded training run: init_policy, then `steps` iterations of
/// sample_batch -> advantages -> policy_gradient_update -> record_step.
/// Step t draws its batch from SeedStream(seed, t). A non-finite update ends
/// the run early with `aborted` set and the traces recorded so far.
RunResult run_training(const EnvSpec& env, const OptimizerConfig& optimizer, std::size_t k, std::size_t steps,
                       std::uint64_t seed, double entropy_threshold = kDefaultCollapseThreshold);

}  // namespace rlvr
