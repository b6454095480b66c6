#include "rlvr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rlvr/error.hpp"
#include "rlvr/rng.hpp"

namespace rlvr::oracle {
namespace {

std::vector<double> probs_of(std::span<const double> z) { return softmax(z); }

std::vector<double> correct_logits(std::span<const double> z, std::span<const std::size_t> correct) {
  std::vector<double> out;
  out.reserve(correct.size());
  for (std::size_t c : correct) out.push_back(z[c]);
  return out;
}

// grad_z log pi(y) = e_y - pi
std::vector<double> score(std::span<const double> pi, std::size_t y) {
  std::vector<double> g(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) g[k] = (k == y ? 1.0 : 0.0) - pi[k];
  return g;
}

void axpy(double a, std::span<const double> x, std::vector<double>& y) {
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_enumerable(std::size_t v) {
  if (v > kMaxEnumeratedVocab) {
    throw InvalidInput("oracle: output space of size " + std::to_string(v) + " exceeds enumeration limit " +
                       std::to_string(kMaxEnumeratedVocab));
  }
}

}  // namespace

std::vector<double> central_difference(const ScalarFn& f, std::span<const double> z, double h) {
  std::vector<double> x(z.begin(), z.end());
  std::vector<double> g(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f(x);
    x[k] = orig - h;
    const double down = f(x);
    x[k] = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> reference, std::span<const double> other) {
  if (reference.size() != other.size()) throw InvalidInput("max_relative_error: size mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < reference.size(); ++k) {
    diff = std::max(diff, std::abs(reference[k] - other[k]));
    scale = std::max(scale, std::abs(reference[k]));
  }
  return diff / std::max(scale, 1e-12);
}

double log_correct_mass(std::span<const double> z, std::span<const std::size_t> correct) {
  const std::vector<double> zc = correct_logits(z, correct);
  return log_sum_exp(zc) - log_sum_exp(z);
}

double kl_uniform_to_conditional(std::span<const double> z, std::span<const std::size_t> correct) {
  const std::vector<double> zc = correct_logits(z, correct);
  const double lse = log_sum_exp(zc);
  const double m = static_cast<double>(correct.size());
  // sum_y u (log u - log q) with log q = z_y - lse
  double kl = 0.0;
  for (double zy : zc) kl += (-std::log(m) - (zy - lse)) / m;
  return kl;
}

double kl_conditional_to_uniform(std::span<const double> z, std::span<const std::size_t> correct) {
  const std::vector<double> zc = correct_logits(z, correct);
  const std::vector<double> q = softmax(zc);
  return std::log(static_cast<double>(correct.size())) - entropy(q);
}

double full_entropy(std::span<const double> z) {
  const std::vector<double> logp = log_softmax(z);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  return h;
}

double ucpo_objective(std::span<const double> z, std::span<const std::size_t> correct, double tau) {
  const std::vector<double> q = softmax(correct_logits(z, correct));
  if (tau > 0.0) {
    for (double v : q) {
      if (v == 0.0) return -std::numeric_limits<double>::infinity();
    }
  }
  const double log_z = log_correct_mass(z, correct);
  return tau == 0.0 ? log_z : log_z - tau * kl_uniform_to_conditional(z, correct);
}

double entropy_regularized_objective(std::span<const double> z, std::span<const std::size_t> correct,
                                     double tau_ent) {
  return std::exp(log_correct_mass(z, correct)) + tau_ent * full_entropy(z);
}

std::vector<double> enumerated_log_z_gradient(std::span<const double> z, std::span<const std::size_t> correct) {
  const std::vector<double> pi = probs_of(z);
  const std::vector<double> q = softmax(correct_logits(z, correct));
  std::vector<double> g(z.size(), 0.0);
  for (std::size_t a = 0; a < correct.size(); ++a) axpy(q[a], score(pi, correct[a]), g);
  return g;
}

std::vector<double> enumerated_neg_kl_uq_gradient(std::span<const double> z, std::span<const std::size_t> correct) {
  const std::vector<double> pi = probs_of(z);
  const std::vector<double> q = softmax(correct_logits(z, correct));
  const double u = 1.0 / static_cast<double>(correct.size());
  std::vector<double> expect_u(z.size(), 0.0);
  std::vector<double> expect_q(z.size(), 0.0);
  for (std::size_t a = 0; a < correct.size(); ++a) {
    const std::vector<double> s = score(pi, correct[a]);
    axpy(u, s, expect_u);
    axpy(q[a], s, expect_q);
  }
  for (std::size_t k = 0; k < z.size(); ++k) expect_u[k] -= expect_q[k];
  return expect_u;
}

std::vector<double> enumerated_kl_qu_gradient(std::span<const double> z, std::span<const std::size_t> correct) {
  const std::vector<double> q = softmax(correct_logits(z, correct));
  std::vector<double> g(z.size(), 0.0);
  for (std::size_t a = 0; a < correct.size(); ++a) {
    // grad_z log q(c_a): 1 - q_a at c_a, -q_b at other correct c_b, 0 elsewhere
    std::vector<double> s(z.size(), 0.0);
    for (std::size_t b = 0; b < correct.size(); ++b) s[correct[b]] = (a == b ? 1.0 : 0.0) - q[b];
    axpy(q[a] * (1.0 + std::log(q[a])), s, g);
  }
  return g;
}

std::vector<double> enumerated_entropy_gradient(std::span<const double> z) {
  const std::vector<double> pi = probs_of(z);
  const std::vector<double> logp = log_softmax(z);
  std::vector<double> g(z.size(), 0.0);
  for (std::size_t y = 0; y < z.size(); ++y) axpy(-pi[y] * (1.0 + logp[y]), score(pi, y), g);
  return g;
}

std::vector<double> ucpo_decomposition_gradient(std::span<const double> z, std::span<const std::size_t> correct,
                                                double tau) {
  const std::vector<double> pi = probs_of(z);
  const std::vector<double> q = softmax(correct_logits(z, correct));
  const double u = 1.0 / static_cast<double>(correct.size());
  std::vector<double> g(z.size(), 0.0);
  for (std::size_t a = 0; a < correct.size(); ++a) axpy((1.0 - tau) * q[a] + tau * u, score(pi, correct[a]), g);
  return g;
}

SharedAdvantages expected_grpo_advantages(double correct_mass, double adv_eps) {
  const double sd = std::sqrt(correct_mass * (1.0 - correct_mass));
  if (sd == 0.0) return {};
  return {(1.0 - correct_mass) / (sd + adv_eps), -correct_mass / (sd + adv_eps)};
}

ExactGradientReport exact_expected_gradient(const PolicyState& policy, const EnvSpec& env,
                                            const OptimizerConfig& config, std::size_t k) {
  require_enumerable(env.vocab_size);
  const std::span<const double> z = policy.logits;
  const std::span<const std::size_t> correct = env.correct_indices;
  const std::vector<bool> mask = env.correct_mask();
  const std::vector<double> pi = probs_of(z);
  const std::size_t v = z.size();

  ExactGradientReport r;
  switch (config.method) {
    case Method::GRPO: {
      double z_mass = 0.0;
      for (std::size_t c : correct) z_mass += pi[c];
      const SharedAdvantages sa = expected_grpo_advantages(z_mass, config.adv_eps);
      std::vector<double> adv(v);
      for (std::size_t y = 0; y < v; ++y) adv[y] = mask[y] ? sa.a_plus : sa.a_minus;
      const double kd = static_cast<double>(k);

      r.enumerated.assign(v, 0.0);
      for (std::size_t y = 0; y < v; ++y) axpy(kd * pi[y] * adv[y], score(pi, y), r.enumerated);

      double mean_adv = 0.0;
      for (std::size_t y = 0; y < v; ++y) mean_adv += pi[y] * adv[y];
      r.analytic.resize(v);
      for (std::size_t j = 0; j < v; ++j) r.analytic[j] = kd * pi[j] * (adv[j] - mean_adv);

      const std::vector<double> frozen = pi;
      r.finite_difference = central_difference(
          [&](std::span<const double> x) {
            const std::vector<double> lp = log_softmax(x);
            double s = 0.0;
            for (std::size_t y = 0; y < v; ++y) s += kd * frozen[y] * adv[y] * lp[y];
            return s;
          },
          z);
      break;
    }
    case Method::UCPO: {
      const double tau = config.tau;
      r.analytic = ucpo_decomposition_gradient(z, correct, tau);
      r.enumerated = enumerated_log_z_gradient(z, correct);
      axpy(tau, enumerated_neg_kl_uq_gradient(z, correct), r.enumerated);
      r.finite_difference =
          central_difference([&](std::span<const double> x) { return ucpo_objective(x, correct, tau); }, z);
      break;
    }
    case Method::GlobalEntropy: {
      const double tau_ent = config.tau_ent;
      double z_mass = 0.0;
      for (std::size_t c : correct) z_mass += pi[c];
      r.analytic.resize(v);
      for (std::size_t j = 0; j < v; ++j) r.analytic[j] = pi[j] * ((mask[j] ? 1.0 : 0.0) - z_mass);
      const std::vector<double> ent = global_entropy_gradient(policy, tau_ent);
      for (std::size_t j = 0; j < v; ++j) r.analytic[j] += ent[j];

      r.enumerated.assign(v, 0.0);
      for (std::size_t c : correct) axpy(pi[c], score(pi, c), r.enumerated);
      axpy(tau_ent, enumerated_entropy_gradient(z), r.enumerated);

      r.finite_difference = central_difference(
          [&](std::span<const double> x) { return entropy_regularized_objective(x, correct, tau_ent); }, z);
      break;
    }
  }
  r.max_rel_error_enumerated = max_relative_error(r.analytic, r.enumerated);
  r.max_rel_error_fd = max_relative_error(r.analytic, r.finite_difference);
  r.max_rel_error = std::max(r.max_rel_error_enumerated, r.max_rel_error_fd);
  return r;
}

MonteCarloGradient monte_carlo_grpo_gradient(const PolicyState& policy, const EnvSpec& env, SharedAdvantages shared,
                                             std::size_t k, std::size_t batches, std::uint64_t seed) {
  const std::size_t v = env.vocab_size;
  const std::vector<double> pi = softmax(policy.logits);
  std::vector<double> sum(v, 0.0);
  std::vector<double> sum_sq(v, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    const RolloutBatch batch = sample_batch(policy, env, k, SeedStream(seed, b));
    std::vector<double> g(v, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      axpy(batch.rewards[i] == 1 ? shared.a_plus : shared.a_minus, score(pi, batch.samples[i]), g);
    }
    for (std::size_t j = 0; j < v; ++j) {
      sum[j] += g[j];
      sum_sq[j] += g[j] * g[j];
    }
  }
  MonteCarloGradient mc;
  const double n = static_cast<double>(batches);
  mc.mean.resize(v);
  mc.standard_error.resize(v);
  for (std::size_t j = 0; j < v; ++j) {
    mc.mean[j] = sum[j] / n;
    const double var = std::max(sum_sq[j] / n - mc.mean[j] * mc.mean[j], 0.0) * n / (n - 1.0);
    mc.standard_error[j] = std::sqrt(var / n);
  }
  return mc;
}

double ucpo_objective_value(const PolicyState& policy, const EnvSpec& env, double tau) {
  return ucpo_objective(policy.logits, env.correct_indices, tau);
}

// Larger steps satisfy Armijo along the slow incorrect-logit direction but make
// q oscillate around uniform.
constexpr double kMaxAscentStep = 4.0;

AscentRun ucpo_ascent(PolicyState start, const EnvSpec& env, double tau, std::size_t steps) {
  const std::span<const std::size_t> correct = env.correct_indices;
  std::vector<double> z = std::move(start.logits);
  AscentRun run;
  double f = ucpo_objective(z, correct, tau);
  run.initial_objective = f;
  run.kl_path.push_back(kl_uniform_to_conditional(z, correct));

  double step = 1.0;
  std::vector<double> g = ucpo_decomposition_gradient(z, correct, tau);
  for (std::size_t it = 0; it < steps; ++it) {
    const double gg = norm2(g) * norm2(g);
    if (gg == 0.0) break;
    step = std::min(step * 2.0, kMaxAscentStep);
    std::vector<double> trial(z.size());
    bool accepted = false;
    while (step > 1e-12) {
      for (std::size_t k = 0; k < z.size(); ++k) trial[k] = z[k] + step * g[k];
      const double ft = ucpo_objective(trial, correct, tau);
      if (ft >= f + 0.5 * step * gg) {
        z.swap(trial);
        f = ft;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    run.kl_path.push_back(kl_uniform_to_conditional(z, correct));
    g = ucpo_decomposition_gradient(z, correct, tau);
  }

  run.final_objective = f;
  run.final_correct_mass = std::exp(log_correct_mass(z, correct));
  const std::vector<double> q = softmax(correct_logits(z, correct));
  const double u = 1.0 / static_cast<double>(correct.size());
  for (double v : q) run.final_max_q_deviation = std::max(run.final_max_q_deviation, std::abs(v - u));
  run.final_gradient_norm = norm2(ucpo_decomposition_gradient(z, correct, tau));
  return run;
}

UniqueOptimumReport verify_unique_optimum(const EnvSpec& env, double tau, std::size_t ascent_steps, double tolerance,
                                          std::size_t restarts, std::uint64_t seed) {
  if (!(tau > 0.0)) throw InvalidInput("verify_unique_optimum: tau must be > 0");
  UniqueOptimumReport rep;
  CounterRng rng(seed, 0x0u);
  for (std::size_t r = 0; r < restarts; ++r) {
    PolicyState start;
    start.logits.resize(env.vocab_size);
    for (double& x : start.logits) x = rng.uniform(-3.0, 3.0);
    AscentRun run = ucpo_ascent(std::move(start), env, tau, ascent_steps);
    rep.min_correct_mass = std::min(rep.min_correct_mass, run.final_correct_mass);
    rep.max_q_deviation = std::max(rep.max_q_deviation, run.final_max_q_deviation);
    rep.runs.push_back(std::move(run));
  }
  rep.passed = rep.min_correct_mass > 1.0 - tolerance && rep.max_q_deviation < tolerance;
  return rep;
}

double retained_mass_by_sort(std::span<const double> q, std::size_t s) {
  std::vector<std::size_t> order(q.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] > q[b]; });
  std::vector<bool> removed(q.size(), false);
  for (std::size_t i = 0; i < s; ++i) removed[order[i]] = true;
  double kept = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!removed[i]) kept += q[i];
  }
  return kept;
}

double retained_mass_by_enumeration(std::span<const double> q, std::size_t s) {
  const std::size_t m = q.size();
  if (m > 20) throw InvalidInput("retained_mass_by_enumeration: m too large to enumerate");
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != s) continue;
    double kept = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!(mask & (1u << i))) kept += q[i];
    }
    worst = std::min(worst, kept);
  }
  return worst;
}

RobustnessReport robustness_minimax(std::span<const double> q, std::size_t s) {
  const std::size_t m = q.size();
  if (s < 1 || s >= m) throw InvalidInput("robustness_minimax: need 1 <= s < m");
  RobustnessReport r;
  r.by_sort = retained_mass_by_sort(q, s);
  r.by_enumeration = retained_mass_by_enumeration(q, s);
  r.uniform_bound = 1.0 - static_cast<double>(s) / static_cast<double>(m);
  return r;
}

namespace {

double optimum_incorrect_mass(std::size_t v, std::size_t m, double tau_ent) {
  // (V - m) / (m e^{1/tau} + V - m), evaluated without overflow
  const double ratio = static_cast<double>(v - m) / static_cast<double>(m);
  return 1.0 / (1.0 + std::exp(1.0 / tau_ent - std::log(ratio)));
}

}  // namespace

EntropyRegOptimum entropy_reg_optimum(const EnvSpec& env, double tau_ent) {
  if (!(tau_ent > 0.0)) throw InvalidInput("entropy_reg_optimum: tau_ent must be > 0");
  env.validate();
  const std::vector<bool> mask = env.correct_mask();
  std::vector<double> scaled(env.vocab_size);
  for (std::size_t y = 0; y < env.vocab_size; ++y) scaled[y] = (mask[y] ? 1.0 : 0.0) / tau_ent;

  EntropyRegOptimum opt;
  opt.probs = softmax(scaled);
  double z_mass = 0.0;
  for (std::size_t y = 0; y < env.vocab_size; ++y) {
    if (mask[y]) z_mass += opt.probs[y];
    else opt.incorrect_mass += opt.probs[y];
  }
  const double u = 1.0 / static_cast<double>(env.num_correct());
  for (std::size_t c : env.correct_indices) {
    opt.within_correct_deviation = std::max(opt.within_correct_deviation, std::abs(opt.probs[c] / z_mass - u));
  }

  // bisection on the monotone closed form
  double lo = 1e-6;
  double hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (optimum_incorrect_mass(env.vocab_size, env.num_correct(), mid) < 0.01) lo = mid;
    else hi = mid;
  }
  opt.crossover_tau = hi;
  return opt;
}

std::vector<double> entropy_reg_ascent(PolicyState start, const EnvSpec& env, double tau_ent, std::size_t steps) {
  const std::span<const std::size_t> correct = env.correct_indices;
  std::vector<double> z = std::move(start.logits);
  const std::vector<bool> mask = env.correct_mask();
  double f = entropy_regularized_objective(z, correct, tau_ent);
  double step = 1.0;
  for (std::size_t it = 0; it < steps; ++it) {
    const std::vector<double> pi = softmax(z);
    double z_mass = 0.0;
    for (std::size_t c : correct) z_mass += pi[c];
    std::vector<double> g(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) g[j] = pi[j] * ((mask[j] ? 1.0 : 0.0) - z_mass);
    axpy(tau_ent, enumerated_entropy_gradient(z), g);
    const double gg = norm2(g) * norm2(g);
    if (gg == 0.0) break;
    step *= 2.0;
    std::vector<double> trial(z.size());
    bool accepted = false;
    while (step > 1e-12) {
      for (std::size_t k = 0; k < z.size(); ++k) trial[k] = z[k] + step * g[k];
      const double ft = entropy_regularized_objective(trial, correct, tau_ent);
      if (ft >= f + 0.5 * step * gg) {
        z.swap(trial);
        f = ft;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return softmax(z);
}

}  // namespace rlvr::oracle
