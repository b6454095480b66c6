#include "rlvr/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rlvr/environment.hpp"
#include "rlvr/io.hpp"
#include "rlvr/optimizers.hpp"
#include "rlvr/oracle.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/rng.hpp"
#include "rlvr/rollout_analysis.hpp"

namespace rlvr::verify {

namespace {

EnvSpec random_env(CounterRng& rng, std::size_t min_v, std::size_t max_v) {
  EnvSpec env;
  env.vocab_size = rng.uniform_int(min_v, max_v);
  const std::size_t m = rng.uniform_int(1, env.vocab_size - 1);
  std::vector<std::size_t> idx(env.vocab_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  idx.resize(m);
  env.correct_indices = idx;
  env.init_profile = InitProfile::Uniform;
  return env;
}

PolicyState random_policy(CounterRng& rng, std::size_t v, double scale) {
  PolicyState p;
  p.logits.resize(v);
  for (double& z : p.logits) z = rng.uniform(-scale, scale);
  return p;
}

std::string fmt(double x) { return format_double(x); }

struct Family {
  std::string name;
  double worst_enumerated = 0.0;
  double worst_fd = 0.0;
};

void track(Family& f, std::span<const double> analytic, std::span<const double> enumerated,
           std::span<const double> fd) {
  f.worst_enumerated = std::max(f.worst_enumerated, oracle::max_relative_error(analytic, enumerated));
  f.worst_fd = std::max(f.worst_fd, oracle::max_relative_error(analytic, fd));
}

}  // namespace

CheckResult mass_preservation(std::size_t batches, double tolerance, std::uint64_t seed) {
  CounterRng rng(seed, 7);
  double worst = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const EnvSpec env = random_env(rng, 2, 24);
    const PolicyState policy = random_policy(rng, env.vocab_size, 4.0);
    const std::size_t k = rng.uniform_int(1, 32);
    std::vector<std::size_t> samples(k);
    for (auto& s : samples) s = rng.uniform_int(0, env.vocab_size - 1);
    const RolloutBatch batch = make_batch(env, samples);
    OptimizerConfig cfg;
    cfg.method = Method::UCPO;
    cfg.tau = rng.next_uniform();
    const AdvantageVector u = compute_advantages(batch, policy, cfg);
    const AdvantageVector g = grpo_advantages(batch, cfg.adv_eps);
    double su = 0.0;
    double sg = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (batch.rewards[i] == 1) {
        su += u.per_sample[i];
        sg += g.per_sample[i];
      }
    }
    worst = std::max(worst, std::abs(su - sg));
  }
  CheckResult r;
  r.name = "mass_preservation";
  r.passed = worst < tolerance;
  r.detail = "max |sum A_ucpo - sum A_grpo| = " + fmt(worst) + " over " + std::to_string(batches) + " batches";
  r.metrics = {{"max_abs_difference", worst}, {"batches", batches}, {"tolerance", tolerance}};
  return r;
}

CheckResult gradient_identities(std::size_t configs, double tol_enumerated, double tol_fd, std::uint64_t seed) {
  CounterRng rng(seed, 11);
  Family log_z{"log_Z"}, kl_uq{"kl_uniform_to_q"}, kl_qu{"kl_q_to_uniform"}, ent{"entropy"}, ucpo{"ucpo_objective"},
      decomposition{"decomposition"};
  for (std::size_t n = 0; n < configs; ++n) {
    const EnvSpec env = random_env(rng, 2, 12);
    const PolicyState policy = random_policy(rng, env.vocab_size, 2.0);
    const std::span<const std::size_t> correct = env.correct_indices;
    const std::vector<double>& z = policy.logits;
    const std::vector<double> pi = softmax(z);
    const ProbeSnapshot s = snapshot(policy, env);
    const std::size_t m = env.num_correct();
    const double u = 1.0 / static_cast<double>(m);
    const double tau = rng.next_uniform();

    std::vector<double> g_log_z(z.size()), g_neg_kl(z.size(), 0.0), g_kl_qu(z.size(), 0.0);
    for (std::size_t y = 0; y < z.size(); ++y) g_log_z[y] = -pi[y];
    for (std::size_t a = 0; a < m; ++a) {
      const std::size_t c = correct[a];
      const double q = s.conditional_q[a];
      g_log_z[c] += q;
      g_neg_kl[c] = u - q;
      g_kl_qu[c] = q * (std::log(q) + s.conditional_entropy);
    }
    track(log_z, g_log_z, oracle::enumerated_log_z_gradient(z, correct),
          oracle::central_difference([&](auto x) { return oracle::log_correct_mass(x, correct); }, z));
    track(kl_uq, g_neg_kl, oracle::enumerated_neg_kl_uq_gradient(z, correct),
          oracle::central_difference([&](auto x) { return -oracle::kl_uniform_to_conditional(x, correct); }, z));
    track(kl_qu, g_kl_qu, oracle::enumerated_kl_qu_gradient(z, correct),
          oracle::central_difference([&](auto x) { return oracle::kl_conditional_to_uniform(x, correct); }, z));
    const std::vector<double> g_ent = global_entropy_gradient(policy, 1.0);
    track(ent, g_ent, oracle::enumerated_entropy_gradient(z),
          oracle::central_difference([](auto x) { return oracle::full_entropy(x); }, z));

    OptimizerConfig cfg;
    cfg.method = Method::UCPO;
    cfg.tau = tau;
    const oracle::ExactGradientReport rep = oracle::exact_expected_gradient(policy, env, cfg, 1);
    ucpo.worst_enumerated = std::max(ucpo.worst_enumerated, rep.max_rel_error_enumerated);
    ucpo.worst_fd = std::max(ucpo.worst_fd, rep.max_rel_error_fd);

    std::vector<double> combined(z.size());
    for (std::size_t y = 0; y < z.size(); ++y) combined[y] = g_log_z[y] + tau * g_neg_kl[y];
    const std::vector<double> dec = oracle::ucpo_decomposition_gradient(z, correct, tau);
    decomposition.worst_enumerated =
        std::max(decomposition.worst_enumerated, oracle::max_relative_error(combined, dec));
  }

  CheckResult r;
  r.name = "gradient_identities";
  r.passed = true;
  std::ostringstream detail;
  for (const Family* f : {&log_z, &kl_uq, &kl_qu, &ent, &ucpo, &decomposition}) {
    const bool fd_checked = f != &decomposition;
    const bool ok = f->worst_enumerated < tol_enumerated && (!fd_checked || f->worst_fd < tol_fd);
    r.passed = r.passed && ok;
    detail << f->name << " enum " << fmt(f->worst_enumerated);
    if (fd_checked) detail << " fd " << fmt(f->worst_fd);
    detail << "; ";
    r.metrics[f->name] = {{"max_rel_error_enumerated", f->worst_enumerated}};
    if (fd_checked) r.metrics[f->name]["max_rel_error_fd"] = f->worst_fd;
  }
  r.detail = detail.str() + std::to_string(configs) + " configurations each";
  r.metrics["configurations"] = configs;
  return r;
}

CheckResult expected_update_directions(std::size_t configs, double tol, double z_max, std::uint64_t seed) {
  CounterRng rng(seed, 13);
  double worst_grpo = 0.0;
  double worst_ge = 0.0;
  double worst_z = 0.0;
  for (std::size_t n = 0; n < configs; ++n) {
    const EnvSpec env = random_env(rng, 2, 10);
    const PolicyState policy = random_policy(rng, env.vocab_size, 1.5);
    const std::size_t k = rng.uniform_int(2, 16);
    OptimizerConfig g;
    g.method = Method::GRPO;
    const oracle::ExactGradientReport rg = oracle::exact_expected_gradient(policy, env, g, k);
    worst_grpo = std::max(worst_grpo, rg.max_rel_error);
    OptimizerConfig e;
    e.method = Method::GlobalEntropy;
    e.tau_ent = rng.uniform(0.01, 1.0);
    const oracle::ExactGradientReport re = oracle::exact_expected_gradient(policy, env, e, k);
    worst_ge = std::max(worst_ge, re.max_rel_error);

    const ProbeSnapshot s = snapshot(policy, env);
    const oracle::SharedAdvantages shared = oracle::expected_grpo_advantages(s.correct_mass, g.adv_eps);
    const oracle::MonteCarloGradient mc = oracle::monte_carlo_grpo_gradient(policy, env, shared, k, 4000, seed + n);
    for (std::size_t y = 0; y < env.vocab_size; ++y) {
      const double diff = std::abs(mc.mean[y] - rg.enumerated[y]);
      if (diff < 1e-12) continue;
      worst_z = std::max(worst_z, diff / std::max(mc.standard_error[y], 1e-300));
    }
  }
  CheckResult r;
  r.name = "expected_update_directions";
  r.passed = worst_grpo < tol && worst_ge < tol && worst_z < z_max;
  r.detail = "grpo " + fmt(worst_grpo) + ", global_entropy " + fmt(worst_ge) + ", monte carlo max z " +
             fmt(worst_z);
  r.metrics = {{"grpo_max_rel_error", worst_grpo},
               {"global_entropy_max_rel_error", worst_ge},
               {"monte_carlo_max_z", worst_z},
               {"configurations", configs}};
  return r;
}

CheckResult unique_optimum(const std::vector<std::size_t>& ms, const std::vector<double>& taus,
                           std::size_t restarts, double tolerance, std::uint64_t seed) {
  CheckResult r;
  r.name = "unique_optimum";
  r.passed = true;
  double min_z = 1.0;
  double max_dev = 0.0;
  nlohmann::json grid = nlohmann::json::array();
  for (std::size_t m : ms) {
    EnvSpec env;
    env.vocab_size = 2 * m + 4;
    env.correct_indices.resize(m);
    std::iota(env.correct_indices.begin(), env.correct_indices.end(), 0);
    env.init_profile = InitProfile::Uniform;
    for (double tau : taus) {
      const oracle::UniqueOptimumReport rep = oracle::verify_unique_optimum(env, tau, 3000, tolerance, restarts, seed);
      r.passed = r.passed && rep.passed;
      min_z = std::min(min_z, rep.min_correct_mass);
      max_dev = std::max(max_dev, rep.max_q_deviation);
      grid.push_back({{"m", m},
                      {"tau", tau},
                      {"min_correct_mass", rep.min_correct_mass},
                      {"max_q_deviation", rep.max_q_deviation},
                      {"passed", rep.passed}});
    }
  }
  r.detail = "min Z " + fmt(min_z) + ", max |q - 1/m| " + fmt(max_dev) + " over " + std::to_string(restarts) +
             " starts per (m, tau)";
  r.metrics = {{"grid", grid}, {"min_correct_mass", min_z}, {"max_q_deviation", max_dev}};
  return r;
}

CheckResult robustness(std::size_t max_m, std::size_t samples, std::uint64_t seed) {
  CounterRng rng(seed, 17);
  bool uniform_ok = true;
  bool strict_ok = true;
  bool agree_ok = true;
  double worst_uniform = 0.0;
  double min_gap = 1.0;
  for (std::size_t m = 2; m <= max_m; ++m) {
    const std::vector<double> uq(m, 1.0 / static_cast<double>(m));
    for (std::size_t s = 1; s < m; ++s) {
      const oracle::RobustnessReport ru = oracle::robustness_minimax(uq, s);
      const double err = std::abs(ru.by_sort - ru.uniform_bound);
      worst_uniform = std::max(worst_uniform, err);
      // (m - s) copies of the rounded 1/m against 1 - s/m: a few ulp apart at most.
      uniform_ok = uniform_ok && err <= 4.0 * std::numeric_limits<double>::epsilon();
      agree_ok = agree_ok && ru.by_sort == ru.by_enumeration;
    }
  }
  for (std::size_t n = 0; n < samples; ++n) {
    const std::size_t m = rng.uniform_int(2, max_m);
    std::vector<double> q(m);
    for (double& x : q) x = rng.uniform(0.01, 1.0);
    const double total = std::accumulate(q.begin(), q.end(), 0.0);
    for (double& x : q) x /= total;
    for (std::size_t s = 1; s < m; ++s) {
      const oracle::RobustnessReport rq = oracle::robustness_minimax(q, s);
      strict_ok = strict_ok && rq.by_sort < rq.uniform_bound;
      min_gap = std::min(min_gap, rq.uniform_bound - rq.by_sort);
      agree_ok = agree_ok && rq.by_sort == rq.by_enumeration;
    }
  }
  CheckResult r;
  r.name = "robustness_minimax";
  r.passed = uniform_ok && strict_ok && agree_ok;
  r.detail = "uniform |retained - (1 - s/m)| " + fmt(worst_uniform) + ", min gap for non-uniform q " + fmt(min_gap) +
             ", oracles agree: " + (agree_ok ? "yes" : "no");
  r.metrics = {{"uniform_max_abs_error", worst_uniform},
               {"non_uniform_min_gap", min_gap},
               {"oracles_agree", agree_ok},
               {"samples", samples}};
  return r;
}

CheckResult entropy_regularized_optimum(const std::vector<double>& taus, double small_tau_bound) {
  EnvSpec env;
  CheckResult r;
  r.name = "entropy_regularized_optimum";
  r.passed = true;
  double max_dev = 0.0;
  double max_ascent_gap = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  for (double tau : taus) {
    const oracle::EntropyRegOptimum opt = oracle::entropy_reg_optimum(env, tau);
    max_dev = std::max(max_dev, opt.within_correct_deviation);
    r.passed = r.passed && opt.within_correct_deviation <= 1e-15;
    nlohmann::json row{{"tau_ent", tau},
                       {"incorrect_mass", opt.incorrect_mass},
                       {"within_correct_deviation", opt.within_correct_deviation},
                       {"crossover_tau", opt.crossover_tau}};
    // Ascent only where the optimum is reachable in finitely many steps of
    // moderate size; for small tau_ent the incorrect logits must diverge.
    if (tau >= 0.2) {
      const std::vector<double> p = oracle::entropy_reg_ascent(init_policy(env), env, tau, 5000);
      double gap = 0.0;
      for (std::size_t y = 0; y < p.size(); ++y) gap = std::max(gap, std::abs(p[y] - opt.probs[y]));
      max_ascent_gap = std::max(max_ascent_gap, gap);
      r.passed = r.passed && gap < 1e-6;
      row["ascent_max_abs_gap"] = gap;
    }
    rows.push_back(row);
  }
  const double smallest = *std::min_element(taus.begin(), taus.end());
  const double small_mass = oracle::entropy_reg_optimum(env, smallest).incorrect_mass;
  r.passed = r.passed && small_mass < small_tau_bound;
  r.detail = "max within-correct deviation " + fmt(max_dev) + ", incorrect mass at tau_ent " + fmt(smallest) + " = " +
             fmt(small_mass) + ", ascent gap " + fmt(max_ascent_gap);
  r.metrics = {{"rows", rows}, {"small_tau_incorrect_mass", small_mass}};
  return r;
}

CheckResult pass_at_k_estimator(std::size_t max_n) {
  bool exact_ok = true;
  bool float_ok = true;
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    for (std::size_t c = 0; c <= n; ++c) {
      for (std::size_t k = 1; k <= n; ++k) {
        // subsets of size k; the first c items are the correct ones
        std::uint64_t hit = 0;
        std::uint64_t total = 0;
        const std::uint64_t correct_bits = c == 64 ? ~0ULL : ((std::uint64_t{1} << c) - 1);
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
          if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
          ++total;
          if (mask & correct_bits) ++hit;
        }
        const std::uint64_t g = std::gcd(hit, total);
        const Rational expected{g == 0 ? 0 : hit / g, g == 0 ? 1 : total / g};
        exact_ok = exact_ok && pass_at_k_exact(n, c, k) == expected;
        const double x = pass_at_k(n, c, k);
        float_ok = float_ok && std::abs(x - static_cast<double>(hit) / static_cast<double>(total)) < 1e-12;
        ++cases;
      }
    }
  }
  bool stable = true;
  for (std::size_t c = 0; c <= 64; ++c) {
    double prev = -1.0;
    for (std::size_t k = 1; k <= 64; ++k) {
      const double x = pass_at_k(64, c, k);
      stable = stable && std::isfinite(x) && x >= 0.0 && x <= 1.0 && x >= prev;
      prev = x;
    }
  }
  CheckResult r;
  r.name = "pass_at_k";
  r.passed = exact_ok && float_ok && stable;
  r.detail = std::to_string(cases) + " (n, c, k) cases up to n=" + std::to_string(max_n) +
             ": rational " + (exact_ok ? "exact" : "MISMATCH") + ", float " + (float_ok ? "ok" : "off") +
             "; n=64 " + (stable ? "stable" : "UNSTABLE");
  r.metrics = {{"cases", cases}, {"rational_exact", exact_ok}, {"float_close", float_ok}, {"n64_stable", stable}};
  return r;
}

CheckResult diversity_example() {
  RolloutLog log;
  log.prompts.push_back({"p", {{"$a$ and $b$", true}, {"$b$ then $c$", true}, {"$d$", true}}});
  const DiversityReport rep = equation_diversity(log);
  const double score = rep.per_prompt_scores.at("p");
  CheckResult r;
  r.name = "equation_diversity";
  r.passed = score == 2.0 / 3.0 && rep.dataset_mean == 2.0 / 3.0;
  r.detail = "prompt score " + fmt(score) + " (expected 2/3)";
  r.metrics = {{"prompt_score", score}};
  return r;
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {mass_preservation(1000, 1e-9, seed),
          gradient_identities(20, 1e-9, 1e-6, seed),
          expected_update_directions(20, 1e-6, 5.0, seed),
          unique_optimum({2, 3, 5}, {0.1, 0.2, 0.5}, 20, 1e-3, seed),
          robustness(8, 1000, seed),
          entropy_regularized_optimum({0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0}, 1e-3),
          pass_at_k_estimator(12),
          diversity_example()};
}

nlohmann::json to_json(const std::vector<CheckResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  bool all = true;
  for (const CheckResult& c : results) {
    all = all && c.passed;
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}, {"metrics", c.metrics}});
  }
  return {{"passed", all}, {"checks", arr}};
}

}  // namespace rlvr::verify
