#include "rlvr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rlvr/error.hpp"

namespace rlvr {
namespace {

void require_finite(std::span<const double> x, const char* what) {
  if (x.empty()) throw InvalidInput(std::string(what) + ": empty input");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw InvalidInput(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

}  // namespace

double log_sum_exp(std::span<const double> x) {
  require_finite(x, "log_sum_exp");
  const double hi = *std::max_element(x.begin(), x.end());
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

std::vector<double> softmax(std::span<const double> logits) {
  require_finite(logits, "softmax");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

ProbeSnapshot snapshot(const PolicyState& policy, std::span<const std::size_t> correct) {
  if (correct.empty()) throw InvalidInput("snapshot: correct set is empty");
  const std::size_t v = policy.size();
  for (std::size_t c : correct) {
    if (c >= v) throw InvalidInput("snapshot: correct index " + std::to_string(c) + " out of range");
  }

  ProbeSnapshot s;
  s.probs = softmax(policy.logits);

  const std::size_t m = correct.size();
  std::vector<double> correct_logits(m);
  for (std::size_t a = 0; a < m; ++a) correct_logits[a] = policy.logits[correct[a]];

  // Z = exp(lse(correct) - lse(all)) keeps precision when Z is tiny.
  const double log_z = log_sum_exp(correct_logits) - log_sum_exp(policy.logits);
  s.correct_mass = std::exp(log_z);
  if (!(s.correct_mass >= kDegenerateMass)) {
    throw DegenerateMass("snapshot: correct mass " + std::to_string(s.correct_mass) +
                         " below degenerate threshold");
  }
  std::vector<bool> is_correct(v, false);
  for (std::size_t c : correct) is_correct[c] = true;
  double incorrect = 0.0;
  for (std::size_t y = 0; y < v; ++y) {
    if (!is_correct[y]) incorrect += s.probs[y];
  }
  s.incorrect_mass = incorrect;

  s.conditional_q = softmax(correct_logits);
  s.conditional_entropy = entropy(s.conditional_q);
  s.normalized_entropy = m > 1 ? s.conditional_entropy / std::log(static_cast<double>(m)) : 1.0;

  s.log_ratios.resize(m * m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) s.log_ratios[a * m + b] = correct_logits[a] - correct_logits[b];
  }
  return s;
}

double log_ratio(const PolicyState& policy, std::size_t i, std::size_t j) {
  if (i >= policy.size() || j >= policy.size()) throw InvalidInput("log_ratio: index out of range");
  return policy.logits[i] - policy.logits[j];
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace rlvr
