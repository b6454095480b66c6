#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rlvr {

/// Softmax policy over a finite output space. The logit vector is the policy.
struct PolicyState {
  std::vector<double> logits;
  std::uint64_t version = 0;

  std::size_t size() const noexcept { return logits.size(); }
};

/// Distribution-level view of a policy relative to a correct set.
struct ProbeSnapshot {
  std::vector<double> probs;
  double correct_mass = 0.0;
  double incorrect_mass = 0.0;
  /// Policy restricted and renormalized to the correct set, in correct-set order.
  std::vector<double> conditional_q;
  /// H(q) in nats.
  double conditional_entropy = 0.0;
  /// H(q) / ln(m); 1 for m == 1.
  double normalized_entropy = 1.0;
  /// Row-major m x m matrix, entry (a, b) = log pi(c_a) - log pi(c_b).
  std::vector<double> log_ratios;

  std::size_t num_correct() const noexcept { return conditional_q.size(); }
  double log_ratio(std::size_t a, std::size_t b) const { return log_ratios[a * num_correct() + b]; }
};

/// Correct-set mass below which conditional quantities are refused.
inline constexpr double kDegenerateMass = 1e-300;

/// log(sum(exp(x))) with max-shift. Throws InvalidInput on empty or non-finite input.
double log_sum_exp(std::span<const double> x);

/// Numerically stable softmax. Throws InvalidInput on empty or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

/// log softmax(logits), computed without exponentiating the full vector first.
std::vector<double> log_softmax(std::span<const double> logits);

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(std::span<const double> probs);

/// Probes the policy against the given correct indices. Throws DegenerateMass
/// when the correct mass is below kDegenerateMass and InvalidInput when the
/// correct set is empty or out of range.
ProbeSnapshot snapshot(const PolicyState& policy, std::span<const std::size_t> correct);

/// log pi(i) - log pi(j), which under softmax is exactly logits[i] - logits[j].
double log_ratio(const PolicyState& policy, std::size_t i, std::size_t j);

/// Argmax with ties resolved to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace rlvr
