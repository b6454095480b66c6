#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "rlvr/error.hpp"
#include "rlvr/experiment.hpp"

using namespace rlvr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("rlvr_test_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

ExperimentConfig small(const std::string& name) {
  ExperimentConfig c = preset(name);
  c.steps = 20;
  c.seeds = {1, 2};
  return c;
}

}  // namespace

TEST_CASE("config json round trip") {
  for (const std::string& name : preset_names()) {
    const ExperimentConfig c = preset(name);
    const nlohmann::json j = to_json(c);
    CHECK(j.at("schema_version") == kConfigSchemaVersion);
    CHECK(to_json(config_from_json(j)) == j);
  }
  ExperimentConfig c;
  c.optimizer.method = Method::GlobalEntropy;
  c.optimizer.tau_ent = 0.05;
  c.env.init_profile = InitProfile::MildSkew;
  c.seeds = {7, 11};
  CHECK(to_json(config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("config parsing is strict") {
  nlohmann::json j = to_json(ExperimentConfig{});
  nlohmann::json unknown = j;
  unknown["bogus"] = 1;
  CHECK_THROWS_AS(config_from_json(unknown), InvalidConfig);
  nlohmann::json nested = j;
  nested["optimizer"]["momentum"] = 0.9;
  CHECK_THROWS_AS(config_from_json(nested), InvalidConfig);
  nlohmann::json missing = j;
  missing.erase("schema_version");
  CHECK_THROWS_AS(config_from_json(missing), InvalidConfig);
  nlohmann::json future = j;
  future["schema_version"] = kConfigSchemaVersion + 1;
  CHECK_THROWS_AS(config_from_json(future), InvalidConfig);
  nlohmann::json zero_steps = j;
  zero_steps["steps"] = 0;
  CHECK_THROWS_AS(config_from_json(zero_steps), InvalidConfig);
  nlohmann::json bad_method = j;
  bad_method["optimizer"]["method"] = "ppo";
  CHECK_THROWS(config_from_json(bad_method));
}

TEST_CASE("validate rejects broken configs") {
  ExperimentConfig c;
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = ExperimentConfig{};
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = ExperimentConfig{};
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  CHECK_NOTHROW(ExperimentConfig{}.validate());
}

TEST_CASE("preset catalog") {
  CHECK(preset_names() == std::vector<std::string>{"fig3", "fig6", "fig7", "fig8", "fig9", "fig10"});
  try {
    preset("fig99");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("fig10") != std::string::npos);
  }
  const ExperimentConfig f6 = preset("fig6");
  REQUIRE(f6.sweep);
  CHECK(f6.sweep->profiles ==
        std::vector<InitProfile>{InitProfile::Uniform, InitProfile::MildSkew, InitProfile::Skewed});
  CHECK(f6.optimizer.method == Method::GRPO);
  const ExperimentConfig f10 = preset("fig10");
  REQUIRE(f10.sweep);
  CHECK(f10.sweep->taus == std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5});
  for (const std::string& name : preset_names()) {
    const ExperimentConfig c = preset(name);
    CHECK(c.figure == name);
    CHECK(c.k == 16);
    CHECK(c.steps == 300);
    CHECK(c.seeds.size() == 5);
  }
}

TEST_CASE("expand_cells") {
  CHECK(expand_cells(preset("fig3")).size() == 1);
  CHECK(expand_cells(preset("fig3"))[0].name == "grpo_skewed");
  const auto f9 = expand_cells(preset("fig9"));
  REQUIRE(f9.size() == 5);
  CHECK(f9[0].name == "global_entropy_tauent0.01_skewed");
  CHECK(f9[4].name == "ucpo_tau0.2_skewed");
  CHECK(f9[4].optimizer.tau_ent == 0.0);

  ExperimentConfig c;
  c.sweep = SweepGrid{};
  c.sweep->methods = {Method::GRPO, Method::GRPO};
  c.sweep->taus = {0.1, 0.2};
  const auto cells = expand_cells(c);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].name == "grpo_skewed");
}

TEST_CASE("trace csv header") {
  CHECK(trace_csv_header(3) ==
        "step,seed,method,q_0,q_1,q_2,count_0,count_1,count_2,gradmass_0,gradmass_1,gradmass_2,Z,H_q,"
        "H_q_normalized,incorrect_mass,logratio_01,logratio_02\n");
}

TEST_CASE("run_experiment writes traces, summary and figure data") {
  TempDir tmp("outputs");
  ExperimentConfig c = small("fig7");
  c.output_dir = tmp.path;
  const ExperimentResult r = run_experiment(c);
  CHECK_FALSE(r.any_aborted);
  REQUIRE(r.cells.size() == 3);
  for (const CellResult& cell : r.cells) {
    const fs::path p = tmp.path / "traces" / (cell.cell.name + ".csv");
    REQUIRE(fs::exists(p));
    CHECK(first_line(p) + "\n" == trace_csv_header(3));
    const std::string text = slurp(p);
    // one header, (steps + 1) rows per seed
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 21);
  }
  const nlohmann::json s = nlohmann::json::parse(slurp(tmp.path / "summary.json"));
  CHECK(s.at("schema_version") == kConfigSchemaVersion);
  CHECK(s.at("cells").size() == 3);
  CHECK(s.contains("metadata"));
  CHECK(first_line(tmp.path / "figures" / "fig7_trajectories.csv").rfind("method,profile,step,seed,q_0", 0) == 0);
}

TEST_CASE("runs are reproducible byte for byte") {
  for (const std::string& name : {"fig3", "fig9"}) {
    const ExperimentConfig c = small(name);
    const ExperimentResult a = run_experiment(c, false);
    const ExperimentResult b = run_experiment(c, false);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) CHECK(trace_csv(a.cells[i]) == trace_csv(b.cells[i]));
  }
}

TEST_CASE("summary invariants") {
  const ExperimentResult r = run_experiment(small("fig6"), false);
  for (const CellSummary& cs : r.summary.cells) {
    std::size_t total = 0;
    for (std::size_t n : cs.winner_histogram) total += n;
    CHECK(total == cs.seeds.size());
    CHECK(cs.winner_histogram.size() == 3);
    CHECK(cs.collapse_rate >= 0.0);
    CHECK(cs.collapse_rate <= 1.0);
    CHECK(cs.correct_mass.mean + cs.incorrect_mass.mean == doctest::Approx(1.0));
    CHECK(r.summary.find(cs.cell.name) == &cs);
  }
  CHECK(r.summary.find("nope") == nullptr);
}

TEST_CASE("figure files and their columns") {
  TempDir tmp("figures");
  const ExperimentResult f3 = run_experiment(small("fig3"), false);
  const auto w3 = emit_figure_data(f3, "fig3", tmp.path);
  CHECK(w3.size() == 5);
  CHECK(first_line(tmp.path / "fig3_panelA.csv") == "token,pi,expected_count,empirical_mean_count");
  CHECK(first_line(tmp.path / "fig3_panelC.csv") == "step,seed,logratio,realized_drift,theoretical_drift");

  const ExperimentResult f9 = run_experiment(small("fig9"), false);
  emit_figure_data(f9, "fig9", tmp.path);
  CHECK(first_line(tmp.path / "fig9.csv") == "tau_ent,incorrect_mass_mean,incorrect_mass_std,Z_mean,Hq_mean");
  CHECK(fs::exists(tmp.path / "fig9_reference.csv"));

  const ExperimentResult f10 = run_experiment(small("fig10"), false);
  emit_figure_data(f10, "fig10", tmp.path);
  CHECK(first_line(tmp.path / "fig10.csv") ==
        "tau,Hq_normalized_mean,Hq_normalized_std,Z_mean,incorrect_mass_mean,collapse_rate");
}

TEST_CASE("figures needing absent cells are refused") {
  TempDir tmp("missing");
  const ExperimentResult f3 = run_experiment(small("fig3"), false);
  CHECK_THROWS_AS(emit_figure_data(f3, "fig10", tmp.path), InvalidConfig);
  CHECK_THROWS_AS(emit_figure_data(f3, "fig9", tmp.path), InvalidConfig);
  CHECK_THROWS(emit_figure_data(f3, "fig42", tmp.path));
}

TEST_CASE("uniform initialization picks more than one winner across seeds") {
  ExperimentConfig c = preset("fig6");
  c.sweep->profiles = {InitProfile::Uniform};
  c.seeds.clear();
  for (std::uint64_t s = 1; s <= 20; ++s) c.seeds.push_back(s);
  const ExperimentResult r = run_experiment(c, false);
  const CellSummary& cs = r.summary.cells.at(0);
  std::size_t winners = 0;
  for (std::size_t n : cs.winner_histogram) winners += n > 0 ? 1 : 0;
  CHECK(winners >= 2);
}
