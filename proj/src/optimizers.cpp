#include "rlvr/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "rlvr/error.hpp"
#include "rlvr/io.hpp"

namespace rlvr {

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::GRPO: return "grpo";
    case Method::UCPO: return "ucpo";
    case Method::GlobalEntropy: return "global_entropy";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "grpo") return Method::GRPO;
  if (name == "ucpo") return Method::UCPO;
  if (name == "global_entropy") return Method::GlobalEntropy;
  throw InvalidConfig("unknown method '" + std::string(name) + "' (expected grpo, ucpo or global_entropy)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidConfig("optimizer: learning_rate must be positive and finite");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidConfig("optimizer: tau must lie in [0, 1]");
  if (!(tau_ent >= 0.0) || !std::isfinite(tau_ent)) throw InvalidConfig("optimizer: tau_ent must be >= 0");
  if (!(adv_eps >= 0.0) || !std::isfinite(adv_eps)) throw InvalidConfig("optimizer: adv_eps must be >= 0");
}

AdvantageVector grpo_advantages(const RolloutBatch& batch, double adv_eps) {
  const std::size_t k = batch.size();
  if (k == 0) throw InvalidInput("grpo_advantages: empty batch");
  AdvantageVector adv;
  adv.method_tag = Method::GRPO;
  adv.per_sample.assign(k, 0.0);

  double mean = 0.0;
  for (int r : batch.rewards) mean += r;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (int r : batch.rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(k);
  const double sd = std::sqrt(var);
  if (sd == 0.0) return adv;

  const double denom = sd + adv_eps;
  adv.a_plus = batch.n_correct > 0 ? (1.0 - mean) / denom : 0.0;
  adv.a_minus = batch.n_correct < k ? (0.0 - mean) / denom : 0.0;
  for (std::size_t i = 0; i < k; ++i) adv.per_sample[i] = (batch.rewards[i] - mean) / denom;
  return adv;
}

AdvantageVector mean_baseline_advantages(const RolloutBatch& batch) {
  const std::size_t k = batch.size();
  if (k == 0) throw InvalidInput("mean_baseline_advantages: empty batch");
  AdvantageVector adv;
  adv.method_tag = Method::GlobalEntropy;
  const double kd = static_cast<double>(k);
  const double mean = static_cast<double>(batch.n_correct) / kd;
  adv.per_sample.resize(k);
  for (std::size_t i = 0; i < k; ++i) adv.per_sample[i] = (batch.rewards[i] - mean) / kd;
  adv.a_plus = batch.n_correct > 0 ? (1.0 - mean) / kd : 0.0;
  adv.a_minus = batch.n_correct < k ? -mean / kd : 0.0;
  return adv;
}

namespace {

// Shares s_t = n * w_t evaluated as (1 - tau) * (n / n_d) + tau * n * vbar_t so
// that tau = 0 over n distinct tokens reproduces exactly 1 per token.
std::vector<double> token_shares(std::span<const double> probs, double tau, std::size_t n_samples) {
  const std::size_t nd = probs.size();
  double total = 0.0;
  for (double p : probs) total += p;
  std::vector<double> v(nd);
  double v_total = 0.0;
  for (std::size_t t = 0; t < nd; ++t) {
    v[t] = 1.0 / std::max(probs[t] / total, kUcpoProbFloor);
    v_total += v[t];
  }
  const double n = static_cast<double>(n_samples);
  std::vector<double> share(nd);
  for (std::size_t t = 0; t < nd; ++t) {
    share[t] = (1.0 - tau) * (n / static_cast<double>(nd)) + tau * n * (v[t] / v_total);
  }
  return share;
}

}  // namespace

UcpoWeights ucpo_weights(std::span<const double> correct_probs, double tau) {
  if (correct_probs.empty()) throw InvalidInput("ucpo_weights: need at least one probability");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("ucpo_weights: tau must lie in [0, 1]");
  UcpoWeights out;
  double total = 0.0;
  for (double p : correct_probs) {
    if (!std::isfinite(p)) throw InvalidInput("ucpo_weights: non-finite probability");
    total += std::max(p, 0.0);
  }
  const std::size_t n = correct_probs.size();
  std::vector<double> v(n);
  double v_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double qhat = total > 0.0 ? std::max(correct_probs[i], 0.0) / total : 0.0;
    if (qhat < kUcpoProbFloor) {
      qhat = kUcpoProbFloor;
      ++out.clamped;
    }
    v[i] = 1.0 / qhat;
    v_total += v[i];
  }
  out.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.weights[i] = (1.0 - tau) / static_cast<double>(n) + tau * (v[i] / v_total);
  }
  return out;
}

AdvantageVector ucpo_advantages(const RolloutBatch& batch, const PolicyState& policy,
                                const OptimizerConfig& config) {
  AdvantageVector adv = grpo_advantages(batch, config.adv_eps);
  adv.method_tag = Method::UCPO;
  if (batch.n_correct == 0 || adv.a_plus == 0.0) return adv;

  // distinct correct tokens, ascending index
  std::map<std::size_t, std::size_t> token_count;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.rewards[i] == 1) ++token_count[batch.samples[i]];
  }
  const std::vector<double> probs = softmax(policy.logits);
  std::vector<double> token_probs;
  token_probs.reserve(token_count.size());
  for (const auto& [token, count] : token_count) token_probs.push_back(probs.at(token));

  const std::vector<double> share = token_shares(token_probs, config.tau, batch.n_correct);
  std::map<std::size_t, double> per_sample_adv;
  std::size_t t = 0;
  for (const auto& [token, count] : token_count) {
    per_sample_adv[token] = adv.a_plus * (share[t] / static_cast<double>(count));
    ++t;
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.rewards[i] == 1) adv.per_sample[i] = per_sample_adv[batch.samples[i]];
  }
  return adv;
}

AdvantageVector compute_advantages(const RolloutBatch& batch, const PolicyState& policy,
                                   const OptimizerConfig& config) {
  switch (config.method) {
    case Method::UCPO: return ucpo_advantages(batch, policy, config);
    case Method::GRPO: return grpo_advantages(batch, config.adv_eps);
    case Method::GlobalEntropy: {
      return mean_baseline_advantages(batch);
    }
  }
  throw InvalidConfig("compute_advantages: unknown method");
}

std::vector<double> global_entropy_gradient(const PolicyState& policy, double tau_ent) {
  if (!(tau_ent >= 0.0)) throw InvalidInput("global_entropy_gradient: tau_ent must be >= 0");
  std::vector<double> grad(policy.size(), 0.0);
  if (tau_ent == 0.0) return grad;
  const std::vector<double> logp = log_softmax(policy.logits);
  std::vector<double> p(logp.size());
  double h = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logp[k]);
    h -= p[k] * logp[k];
  }
  for (std::size_t k = 0; k < p.size(); ++k) grad[k] = -tau_ent * p[k] * (logp[k] + h);
  return grad;
}

std::vector<double> surrogate_gradient(const PolicyState& policy, const RolloutBatch& batch,
                                       std::span<const double> advantages) {
  if (advantages.size() != batch.size()) throw InvalidInput("surrogate_gradient: advantages not aligned with batch");
  const std::vector<double> probs = softmax(policy.logits);
  std::vector<double> grad(probs.size(), 0.0);
  double adv_total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grad.at(batch.samples[i]) += advantages[i];
    adv_total += advantages[i];
  }
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= probs[k] * adv_total;
  return grad;
}

UpdateResult policy_gradient_update(const PolicyState& policy, const RolloutBatch& batch,
                                    const AdvantageVector& adv, const OptimizerConfig& config) {
  const std::size_t v = policy.size();
  UpdateResult out;
  out.token_grad_mass.assign(v, 0.0);
  out.token_advantage.assign(v, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.token_grad_mass.at(batch.samples[i]) += std::abs(adv.per_sample.at(i));
    out.token_advantage[batch.samples[i]] += adv.per_sample[i];
  }

  std::vector<double> grad = surrogate_gradient(policy, batch, adv.per_sample);
  if (config.method == Method::GlobalEntropy && config.tau_ent > 0.0) {
    const std::vector<double> ent = global_entropy_gradient(policy, config.tau_ent);
    for (std::size_t k = 0; k < v; ++k) grad[k] += ent[k];
  }

  out.policy = policy;
  out.logit_delta.resize(v);
  bool finite = true;
  for (std::size_t k = 0; k < v; ++k) {
    out.logit_delta[k] = config.learning_rate * grad[k];
    out.policy.logits[k] += out.logit_delta[k];
    finite = finite && std::isfinite(out.policy.logits[k]);
  }
  ++out.policy.version;
  if (!finite) {
    std::ostringstream dump;
    dump << "non-finite policy after update " << out.policy.version << "\n  logits before: " << format_vector(policy.logits)
         << "\n  samples: " << format_vector(batch.samples) << "\n  advantages: " << format_vector(adv.per_sample)
         << "\n  learning_rate: " << format_double(config.learning_rate);
    throw NonFiniteUpdate(dump.str(), static_cast<long>(policy.version));
  }
  return out;
}

}  // namespace rlvr
