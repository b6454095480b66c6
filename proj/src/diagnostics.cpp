#include "rlvr/diagnostics.hpp"

#include "rlvr/error.hpp"

namespace rlvr {

StepTrace record_step(const PolicyState& policy, const EnvSpec& env, const RolloutBatch& batch,
                      std::span<const double> grad_mass, double a_plus, std::size_t step) {
  if (grad_mass.size() != env.vocab_size || batch.counts.size() != env.vocab_size) {
    throw InvalidInput("record_step: inconsistent shapes");
  }
  StepTrace t;
  t.step = step;
  t.snapshot = snapshot(policy, env);
  t.counts = batch.counts;
  t.per_token_grad_mass.assign(grad_mass.begin(), grad_mass.end());
  t.k = batch.size();
  t.n_correct = batch.n_correct;
  t.a_plus = a_plus;

  const double k = static_cast<double>(t.k);
  t.expected_counts.resize(env.vocab_size);
  for (std::size_t y = 0; y < env.vocab_size; ++y) t.expected_counts[y] = k * t.snapshot.probs[y];

  for (std::size_t c : env.correct_indices) t.correct_probs.push_back(t.snapshot.probs[c]);
  t.dominant_correct = argmax(t.snapshot.conditional_q);
  for (std::size_t c : env.correct_indices) {
    if (t.snapshot.probs[c] < 1.0 / k) t.below_threshold.push_back(c);
  }
  return t;
}

DriftReport divergence_drift(std::span<const StepTrace> traces, std::size_t a, std::size_t b,
                             double learning_rate) {
  if (traces.size() < 2) throw InvalidInput("divergence_drift: need at least two traces");
  const std::size_t m = traces.front().snapshot.num_correct();
  if (a >= m || b >= m) throw InvalidInput("divergence_drift: correct position out of range");

  DriftReport r;
  r.realized.reserve(traces.size() - 1);
  r.theoretical.reserve(traces.size());
  for (std::size_t t = 0; t < traces.size(); ++t) {
    const ProbeSnapshot& s = traces[t].snapshot;
    const double gap = traces[t].correct_probs[a] - traces[t].correct_probs[b];
    r.theoretical.push_back(learning_rate * traces[t].a_plus * static_cast<double>(traces[t].k) * gap);
    if (t + 1 < traces.size()) {
      r.realized.push_back(traces[t + 1].snapshot.log_ratio(a, b) - s.log_ratio(a, b));
    }
  }
  for (double d : r.realized) r.mean_realized += d;
  r.mean_realized /= static_cast<double>(r.realized.size());
  for (double d : r.theoretical) r.mean_theoretical += d;
  r.mean_theoretical /= static_cast<double>(r.theoretical.size());
  return r;
}

Outcome classify_outcome(const RunResult& result, double entropy_threshold) {
  Outcome o;
  o.collapsed = result.final_snapshot.normalized_entropy < entropy_threshold;
  o.winner = argmax(result.final_snapshot.conditional_q);
  return o;
}

}  // namespace rlvr
