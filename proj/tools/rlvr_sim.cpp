// Command-line front end: training presets and configs, the oracle suite, and
// offline rollout evaluation.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlvr/error.hpp"
#include "rlvr/experiment.hpp"
#include "rlvr/io.hpp"
#include "rlvr/oracle.hpp"
#include "rlvr/rollout_analysis.hpp"
#include "rlvr/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAbort = 2;
constexpr int kExitIo = 3;
constexpr int kExitVerifyFailed = 4;

constexpr const char* kOutEnv = "RLVR_SIM_OUT";

struct Overrides {
  std::string out;
  std::size_t seeds = 0;
  std::vector<std::uint64_t> seed_list;
  std::size_t steps = 0;
  std::size_t k = 0;
  double lr = 0.0;
  std::vector<std::string> emit;
  bool print_config = false;
  bool quiet = false;
};

void add_override_flags(CLI::App* app, Overrides& o) {
  app->add_option("--out", o.out, "Output directory");
  app->add_option("--seeds", o.seeds, "Use seeds 1..N")->check(CLI::PositiveNumber);
  app->add_option("--seed-list", o.seed_list, "Explicit seeds")->delimiter(',')->excludes("--seeds");
  app->add_option("--steps", o.steps, "Training steps")->check(CLI::PositiveNumber);
  app->add_option("--k", o.k, "Batch size K")->check(CLI::PositiveNumber);
  app->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
  app->add_option("--emit", o.emit, "Outputs: traces_csv, summary_json, figure_data")->delimiter(',');
  app->add_flag("--print-config", o.print_config, "Print the effective config as JSON and exit");
  app->add_flag("-q,--quiet", o.quiet, "Suppress the per-cell summary");
}

void apply(rlvr::ExperimentConfig& c, const Overrides& o) {
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seeds > 0) {
    c.seeds.clear();
    for (std::uint64_t s = 1; s <= o.seeds; ++s) c.seeds.push_back(s);
  }
  if (!o.seed_list.empty()) c.seeds = o.seed_list;
  if (o.steps > 0) c.steps = o.steps;
  if (o.k > 0) c.k = o.k;
  if (o.lr > 0.0) c.optimizer.learning_rate = o.lr;
  if (!o.emit.empty()) {
    nlohmann::json j = rlvr::to_json(c);
    j["emit"] = o.emit;
    c = rlvr::config_from_json(j);
  }
  c.validate();
}

std::filesystem::path default_out_base() {
  const char* env = std::getenv(kOutEnv);
  return env != nullptr && *env != '\0' ? std::filesystem::path(env) : std::filesystem::path("out");
}

std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void print_summary(const rlvr::ExperimentResult& r) {
  std::cout << "cell  H_q_normalized(mean+-std)  Z(mean)  incorrect(mean)  winners  collapse_rate\n";
  for (const auto& c : r.summary.cells) {
    std::string winners;
    for (std::size_t n : c.winner_histogram) winners += (winners.empty() ? "" : "/") + std::to_string(n);
    std::cout << c.cell.name << "  " << fixed(c.normalized_entropy.mean) << "+-" << fixed(c.normalized_entropy.std)
              << "  " << fixed(c.correct_mass.mean) << "  " << fixed(c.incorrect_mass.mean, 6) << "  " << winners
              << "  " << fixed(c.collapse_rate, 2);
    if (c.aborted > 0) std::cout << "  ABORTED " << c.aborted;
    std::cout << "\n";
  }
  std::cout << "outputs: " << r.config.output_dir.string() << "\n";
}

int execute(rlvr::ExperimentConfig config, const Overrides& o) {
  apply(config, o);
  if (o.print_config) {
    std::cout << rlvr::to_json(config).dump(2) << "\n";
    return kExitOk;
  }
  const rlvr::ExperimentResult result = rlvr::run_experiment(config);
  if (!o.quiet) print_summary(result);
  if (result.any_aborted) {
    std::cerr << "error: at least one run aborted on a non-finite update; see the partial traces\n";
    return kExitAbort;
  }
  return kExitOk;
}

// Non-finite values cannot be represented in JSON; -inf becomes the sentinel.
void sanitize(nlohmann::json& j) {
  if (j.is_number_float()) {
    const double x = j.get<double>();
    if (std::isinf(x)) j = x < 0 ? rlvr::oracle::kNegInfSentinel : -rlvr::oracle::kNegInfSentinel;
    else if (std::isnan(x)) j = nullptr;
  } else if (j.is_structured()) {
    for (auto& el : j) sanitize(el);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Softmax-policy simulator for RLVR diversity collapse"};
  app.require_subcommand(1);

  Overrides run_o;
  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment config file");
  run->add_option("config", config_path, "Config JSON")->required();
  add_override_flags(run, run_o);

  Overrides preset_o;
  std::string preset_name;
  auto* pre = app.add_subcommand("preset", "Run a named figure preset");
  pre->add_option("name", preset_name, "Preset name")->required();
  add_override_flags(pre, preset_o);

  std::string verify_json;
  std::uint64_t verify_seed = 1;
  auto* ver = app.add_subcommand("verify", "Run the oracle suite");
  ver->add_option("--json", verify_json, "Also write the report as JSON to this file");
  ver->add_option("--seed", verify_seed, "Seed for the random configurations");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a rollout log");
  eval->require_subcommand(1);
  std::string passk_log;
  std::vector<std::size_t> passk_ks{1, 2, 4, 8, 16, 32, 64};
  auto* passk = eval->add_subcommand("passk", "Mean Pass@K over prompts as CSV");
  passk->add_option("--log", passk_log, "JSONL rollout log")->required();
  passk->add_option("--k", passk_ks, "Comma-separated K values")->delimiter(',');
  std::string div_log;
  std::size_t max_chars = rlvr::kDefaultMaxChars;
  auto* div = eval->add_subcommand("diversity", "Equation-level diversity as JSON");
  div->add_option("--log", div_log, "JSONL rollout log")->required();
  div->add_option("--max-chars", max_chars, "Characters of each rollout to scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      const std::string text = rlvr::read_text_file(config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw rlvr::InvalidConfig(config_path + ": " + e.what());
      }
      rlvr::ExperimentConfig config = rlvr::config_from_json(j);
      if (!j.contains("output_dir")) config.output_dir = default_out_base() / config.name;
      return execute(std::move(config), run_o);
    }
    if (*pre) {
      rlvr::ExperimentConfig config = rlvr::preset(preset_name);
      config.output_dir = default_out_base() / config.name;
      return execute(std::move(config), preset_o);
    }
    if (*ver) {
      const auto results = rlvr::verify::run_all(verify_seed);
      bool all = true;
      for (const auto& c : results) {
        all = all && c.passed;
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
      }
      if (!verify_json.empty()) {
        nlohmann::json j = rlvr::verify::to_json(results);
        sanitize(j);
        rlvr::write_text_file(verify_json, j.dump(2) + "\n");
      }
      return all ? kExitOk : kExitVerifyFailed;
    }
    if (*passk) {
      const rlvr::RolloutLog log = rlvr::load_rollout_log(passk_log);
      std::cout << "k,pass_at_k\n";
      for (const auto& row : rlvr::pass_at_k_table(log, passk_ks)) {
        std::cout << rlvr::CsvRow().add(row.k).add(row.mean).str();
      }
      return kExitOk;
    }
    if (*div) {
      const rlvr::RolloutLog log = rlvr::load_rollout_log(div_log);
      const rlvr::DiversityReport rep = rlvr::equation_diversity(log, max_chars);
      nlohmann::json j{{"per_prompt_scores", rep.per_prompt_scores},
                       {"dataset_mean", rep.dataset_mean},
                       {"max_chars", max_chars},
                       {"counts",
                        {{"prompts_total", rep.prompts_total},
                         {"prompts_scored", rep.prompts_scored},
                         {"prompts_without_correct", rep.prompts_without_correct},
                         {"rollouts_total", rep.rollouts_total},
                         {"rollouts_considered", rep.rollouts_considered}}}};
      sanitize(j);
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }
  } catch (const rlvr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const rlvr::NonFiniteUpdate& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAbort;
  } catch (const rlvr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
