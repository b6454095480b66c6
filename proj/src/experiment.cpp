#include "rlvr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "rlvr/error.hpp"
#include "rlvr/io.hpp"
#include "rlvr/rng.hpp"
#include "rlvr/training.hpp"

namespace rlvr {

namespace {

using nlohmann::json;

std::string_view emit_name(Emit e) {
  switch (e) {
    case Emit::TracesCsv: return "traces_csv";
    case Emit::SummaryJson: return "summary_json";
    case Emit::FigureData: return "figure_data";
  }
  return "?";
}

Emit parse_emit(std::string_view s) {
  if (s == "traces_csv") return Emit::TracesCsv;
  if (s == "summary_json") return Emit::SummaryJson;
  if (s == "figure_data") return Emit::FigureData;
  throw InvalidConfig("unknown emit entry '" + std::string(s) + "' (expected traces_csv, summary_json, figure_data)");
}

// Shortest decimal form, used only for cell names.
std::string short_number(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw InvalidConfig(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InvalidConfig(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_as(const json& j, std::string_view key, std::string_view where) {
  try {
    return j.at(std::string(key)).get<T>();
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string(where) + "." + std::string(key) + ": " + e.what());
  }
}

std::string cell_name(const EnvSpec& env, const OptimizerConfig& opt) {
  std::string name(to_string(opt.method));
  if (opt.method == Method::UCPO) name += "_tau" + short_number(opt.tau);
  if (opt.method == Method::GlobalEntropy) name += "_tauent" + short_number(opt.tau_ent);
  name += "_";
  name += to_string(env.init_profile);
  return name;
}

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

// Streams for figure-only sampling sit far above any training step index.
constexpr std::uint64_t kFigureStreamBase = std::uint64_t{1} << 40;
constexpr std::size_t kFigureBatches = 10000;

const CellResult* find_cell(const ExperimentResult& result, Method method) {
  for (const auto& c : result.cells) {
    if (c.cell.optimizer.method == method) return &c;
  }
  return nullptr;
}

const CellResult& require_cell(const ExperimentResult& result, Method method, std::string_view figure) {
  const CellResult* c = find_cell(result, method);
  if (c == nullptr) {
    throw InvalidConfig("figure " + std::string(figure) + " needs a " + std::string(to_string(method)) +
                        " cell, which the results do not contain");
  }
  return *c;
}

std::vector<const CellResult*> cells_with(const ExperimentResult& result, Method method) {
  std::vector<const CellResult*> out;
  for (const auto& c : result.cells) {
    if (c.cell.optimizer.method == method) out.push_back(&c);
  }
  return out;
}

std::string correct_columns(std::string_view prefix, std::size_t m) {
  std::string s;
  for (std::size_t a = 0; a < m; ++a) {
    s += ",";
    s += prefix;
    s += std::to_string(a);
  }
  return s;
}

std::filesystem::path write_csv(const std::filesystem::path& dir, const std::string& file, const std::string& text) {
  const auto path = dir / file;
  write_text_file(path, text);
  return path;
}

void fig3_data(const ExperimentResult& result, const std::filesystem::path& dir,
               std::vector<std::filesystem::path>& written) {
  const CellResult& cell = require_cell(result, Method::GRPO, "fig3");
  const EnvSpec& env = cell.cell.env;
  const std::size_t k = result.config.k;
  const std::size_t m = env.num_correct();
  const PolicyState init = init_policy(env);
  const std::vector<double> pi = softmax(init.logits);

  // Panel A: expected vs empirical counts at the initial policy.
  std::vector<double> count_sum(env.vocab_size, 0.0);
  const std::uint64_t seed = result.config.seeds.front();
  for (std::size_t b = 0; b < kFigureBatches; ++b) {
    const RolloutBatch batch = sample_batch(init, env, k, SeedStream(seed, kFigureStreamBase + b));
    for (std::size_t y = 0; y < env.vocab_size; ++y) count_sum[y] += static_cast<double>(batch.counts[y]);
  }
  std::string a = "token,pi,expected_count,empirical_mean_count\n";
  for (std::size_t y = 0; y < env.vocab_size; ++y) {
    a += CsvRow()
             .add(y)
             .add(pi[y])
             .add(static_cast<double>(k) * pi[y])
             .add(count_sum[y] / static_cast<double>(kFigureBatches))
             .str();
  }
  written.push_back(write_csv(dir, "fig3_panelA.csv", a));

  // Panel B: f(p) = p(1 - p) and the correct tokens' initial points.
  std::string b = "p,f\n";
  for (int i = 0; i <= 100; ++i) {
    const double p = static_cast<double>(i) / 100.0;
    b += CsvRow().add(p).add(p * (1.0 - p)).str();
  }
  written.push_back(write_csv(dir, "fig3_panelB.csv", b));
  std::string bp = "token,p,f\n";
  for (std::size_t c : env.correct_indices) bp += CsvRow().add(c).add(pi[c]).add(pi[c] * (1.0 - pi[c])).str();
  written.push_back(write_csv(dir, "fig3_panelB_points.csv", bp));

  // Panel C: dominant-vs-minority log-ratio and its per-step drift.
  std::string c = "step,seed,logratio,realized_drift,theoretical_drift\n";
  for (const RunResult& run : cell.runs) {
    if (m < 2 || run.traces.empty()) continue;
    const std::vector<StepTrace>& traces = run.traces;
    const std::size_t last = m - 1;
    DriftReport drift;
    if (traces.size() >= 2) drift = divergence_drift(traces, 0, last, run.optimizer.learning_rate);
    for (std::size_t t = 0; t < traces.size(); ++t) {
      CsvRow row;
      row.add(traces[t].step).add(static_cast<std::size_t>(run.seed)).add(traces[t].snapshot.log_ratio(0, last));
      if (t < drift.realized.size()) {
        row.add(drift.realized[t]).add(drift.theoretical[t]);
      } else {
        row.add_empty().add_empty();
      }
      c += row.str();
    }
    c += CsvRow()
             .add(run.traces.size())
             .add(static_cast<std::size_t>(run.seed))
             .add(run.final_snapshot.log_ratio(0, last))
             .add_empty()
             .add_empty()
             .str();
  }
  written.push_back(write_csv(dir, "fig3_panelC.csv", c));

  // Panel D: q at five evenly spaced checkpoints.
  std::string d = "step,seed" + correct_columns("q_", m) + "\n";
  for (const RunResult& run : cell.runs) {
    const std::size_t n = run.traces.size();
    std::vector<std::size_t> marks;
    for (std::size_t i = 0; i <= 4; ++i) marks.push_back(n * i / 4);
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
    for (std::size_t t : marks) {
      const ProbeSnapshot& s = t < n ? run.traces[t].snapshot : run.final_snapshot;
      CsvRow row;
      row.add(t).add(static_cast<std::size_t>(run.seed));
      for (double q : s.conditional_q) row.add(q);
      d += row.str();
    }
  }
  written.push_back(write_csv(dir, "fig3_panelD.csv", d));
}

// One row per step per seed for the given cells, plus the final state.
std::string q_trajectories(const std::vector<const CellResult*>& cells, bool with_method) {
  if (cells.empty()) return {};
  const std::size_t m = cells.front()->cell.env.num_correct();
  std::string out = std::string(with_method ? "method," : "") + "profile,step,seed" + correct_columns("q_", m) +
                    ",Z,H_q_normalized,H_pi\n";
  for (const CellResult* cell : cells) {
    for (const RunResult& run : cell->runs) {
      auto emit = [&](std::size_t step, const ProbeSnapshot& s) {
        CsvRow row;
        if (with_method) row.add(std::string(to_string(cell->cell.optimizer.method)));
        row.add(std::string(to_string(cell->cell.env.init_profile))).add(step).add(static_cast<std::size_t>(run.seed));
        for (double q : s.conditional_q) row.add(q);
        row.add(s.correct_mass).add(s.normalized_entropy).add(entropy(s.probs));
        out += row.str();
      };
      for (const StepTrace& t : run.traces) emit(t.step, t.snapshot);
      emit(run.traces.size(), run.final_snapshot);
    }
  }
  return out;
}

void fig6_data(const ExperimentResult& result, const std::filesystem::path& dir,
               std::vector<std::filesystem::path>& written) {
  const auto cells = cells_with(result, Method::GRPO);
  if (cells.empty()) throw InvalidConfig("figure fig6 needs grpo cells, which the results do not contain");
  written.push_back(write_csv(dir, "fig6_trajectories.csv", q_trajectories(cells, false)));
  std::string s = "profile,seed,winner,collapsed,H_q_normalized\n";
  for (const CellResult* cell : cells) {
    for (const RunResult& run : cell->runs) {
      s += CsvRow()
               .add(std::string(to_string(cell->cell.env.init_profile)))
               .add(static_cast<std::size_t>(run.seed))
               .add(run.winner)
               .add(std::size_t{run.collapsed ? 1u : 0u})
               .add(run.final_snapshot.normalized_entropy)
               .str();
    }
  }
  written.push_back(write_csv(dir, "fig6_outcomes.csv", s));
}

void fig7_data(const ExperimentResult& result, const std::filesystem::path& dir,
               std::vector<std::filesystem::path>& written) {
  std::vector<const CellResult*> cells;
  for (Method m : {Method::GRPO, Method::UCPO, Method::GlobalEntropy}) cells.push_back(&require_cell(result, m, "fig7"));
  written.push_back(write_csv(dir, "fig7_trajectories.csv", q_trajectories(cells, true)));
}

void fig8_data(const ExperimentResult& result, const std::filesystem::path& dir,
               std::vector<std::filesystem::path>& written) {
  const CellResult& grpo = require_cell(result, Method::GRPO, "fig8");
  const CellResult& ucpo = require_cell(result, Method::UCPO, "fig8");
  const EnvSpec& env = ucpo.cell.env;
  const std::size_t k = result.config.k;
  const std::size_t m = env.num_correct();
  const PolicyState init = init_policy(env);
  const std::vector<double> pi = softmax(init.logits);

  // Same batches, both advantage rules, at the initial policy.
  std::vector<double> count(m, 0.0), mass_g(m, 0.0), mass_u(m, 0.0);
  const std::uint64_t seed = result.config.seeds.front();
  for (std::size_t b = 0; b < kFigureBatches; ++b) {
    const RolloutBatch batch = sample_batch(init, env, k, SeedStream(seed, kFigureStreamBase + b));
    const AdvantageVector ag = compute_advantages(batch, init, grpo.cell.optimizer);
    const AdvantageVector au = compute_advantages(batch, init, ucpo.cell.optimizer);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto it = std::find(env.correct_indices.begin(), env.correct_indices.end(), batch.samples[i]);
      if (it == env.correct_indices.end()) continue;
      const auto a = static_cast<std::size_t>(it - env.correct_indices.begin());
      count[a] += 1.0;
      mass_g[a] += std::abs(ag.per_sample[i]);
      mass_u[a] += std::abs(au.per_sample[i]);
    }
  }
  const auto nb = static_cast<double>(kFigureBatches);
  std::string a = "token,pi,count_mean,grpo_gradmass_mean,ucpo_gradmass_mean\n";
  for (std::size_t i = 0; i < m; ++i) {
    a += CsvRow()
             .add(env.correct_indices[i])
             .add(pi[env.correct_indices[i]])
             .add(count[i] / nb)
             .add(mass_g[i] / nb)
             .add(mass_u[i] / nb)
             .str();
  }
  written.push_back(write_csv(dir, "fig8_panelA.csv", a));

  // Per-step gradient mass along training, averaged over seeds.
  std::string b = "method,step" + correct_columns("gradmass_", m) + "\n";
  for (const CellResult* cell : {&grpo, &ucpo}) {
    std::size_t steps = 0;
    for (const RunResult& r : cell->runs) steps = std::max(steps, r.traces.size());
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<double> sum(m, 0.0);
      std::size_t n = 0;
      for (const RunResult& r : cell->runs) {
        if (t >= r.traces.size()) continue;
        ++n;
        for (std::size_t i = 0; i < m; ++i) sum[i] += r.traces[t].per_token_grad_mass[env.correct_indices[i]];
      }
      CsvRow row;
      row.add(std::string(to_string(cell->cell.optimizer.method))).add(t);
      for (double s : sum) row.add(s / static_cast<double>(n));
      b += row.str();
    }
  }
  written.push_back(write_csv(dir, "fig8_panelB.csv", b));
}

void fig9_data(const ExperimentResult& result, const std::filesystem::path& dir,
               std::vector<std::filesystem::path>& written) {
  auto cells = cells_with(result, Method::GlobalEntropy);
  if (cells.empty()) throw InvalidConfig("figure fig9 needs global_entropy cells, which the results do not contain");
  std::stable_sort(cells.begin(), cells.end(), [](const CellResult* x, const CellResult* y) {
    return x->cell.optimizer.tau_ent < y->cell.optimizer.tau_ent;
  });
  std::string s = "tau_ent,incorrect_mass_mean,incorrect_mass_std,Z_mean,Hq_mean\n";
  for (const CellResult* c : cells) {
    const CellSummary* cs = result.summary.find(c->cell.name);
    s += CsvRow()
             .add(c->cell.optimizer.tau_ent)
             .add(cs->incorrect_mass.mean)
             .add(cs->incorrect_mass.std)
             .add(cs->correct_mass.mean)
             .add(cs->conditional_entropy.mean)
             .str();
  }
  written.push_back(write_csv(dir, "fig9.csv", s));
  if (const CellResult* u = find_cell(result, Method::UCPO)) {
    const CellSummary* cs = result.summary.find(u->cell.name);
    std::string r = "method,tau,incorrect_mass_mean,incorrect_mass_std,Z_mean,Hq_mean\n";
    r += CsvRow()
             .add(std::string("ucpo"))
             .add(u->cell.optimizer.tau)
             .add(cs->incorrect_mass.mean)
             .add(cs->incorrect_mass.std)
             .add(cs->correct_mass.mean)
             .add(cs->conditional_entropy.mean)
             .str();
    written.push_back(write_csv(dir, "fig9_reference.csv", r));
  }
}

void fig10_data(const ExperimentResult& result, const std::filesystem::path& dir,
                std::vector<std::filesystem::path>& written) {
  auto cells = cells_with(result, Method::UCPO);
  if (cells.empty()) throw InvalidConfig("figure fig10 needs ucpo cells, which the results do not contain");
  std::stable_sort(cells.begin(), cells.end(), [](const CellResult* x, const CellResult* y) {
    return x->cell.optimizer.tau < y->cell.optimizer.tau;
  });
  std::string s =
      "tau,Hq_normalized_mean,Hq_normalized_std,Z_mean,incorrect_mass_mean,collapse_rate\n";
  for (const CellResult* c : cells) {
    const CellSummary* cs = result.summary.find(c->cell.name);
    s += CsvRow()
             .add(c->cell.optimizer.tau)
             .add(cs->normalized_entropy.mean)
             .add(cs->normalized_entropy.std)
             .add(cs->correct_mass.mean)
             .add(cs->incorrect_mass.mean)
             .add(cs->collapse_rate)
             .str();
  }
  written.push_back(write_csv(dir, "fig10.csv", s));
}

std::filesystem::path trace_path(const std::filesystem::path& out, const Cell& cell) {
  return out / "traces" / (cell.name + ".csv");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (steps < 1) throw InvalidConfig("steps must be >= 1");
  if (k < 1) throw InvalidConfig("K must be >= 1");
  if (seeds.empty()) throw InvalidConfig("seeds must be nonempty");
  if (!(entropy_threshold > 0.0 && entropy_threshold <= 1.0)) {
    throw InvalidConfig("entropy_threshold must lie in (0, 1]");
  }
  if (!figure.empty()) {
    const auto& names = preset_names();
    if (std::find(names.begin(), names.end(), figure) == names.end()) {
      throw InvalidConfig("unknown figure '" + figure + "'");
    }
  }
  // Expanding validates every cell's env and optimizer.
  for (const Cell& c : expand_cells(*this)) {
    c.env.validate();
    c.optimizer.validate();
  }
}

json to_json(const ExperimentConfig& config) {
  json env{{"vocab_size", config.env.vocab_size},
           {"correct_indices", config.env.correct_indices},
           {"init_profile", std::string(to_string(config.env.init_profile))},
           {"custom_ratios", config.env.custom_ratios},
           {"background_mass", config.env.background_mass}};
  json opt{{"method", std::string(to_string(config.optimizer.method))},
           {"learning_rate", config.optimizer.learning_rate},
           {"tau", config.optimizer.tau},
           {"tau_ent", config.optimizer.tau_ent},
           {"adv_eps", config.optimizer.adv_eps}};
  json emit = json::array();
  for (Emit e : config.emit) emit.push_back(std::string(emit_name(e)));
  json j{{"schema_version", kConfigSchemaVersion},
         {"name", config.name},
         {"env", env},
         {"optimizer", opt},
         {"steps", config.steps},
         {"k", config.k},
         {"seeds", config.seeds},
         {"entropy_threshold", config.entropy_threshold},
         {"output_dir", config.output_dir.string()},
         {"emit", emit},
         {"figure", config.figure}};
  if (config.sweep) {
    json sweep = json::object();
    json methods = json::array();
    for (Method m : config.sweep->methods) methods.push_back(std::string(to_string(m)));
    json profiles = json::array();
    for (InitProfile p : config.sweep->profiles) profiles.push_back(std::string(to_string(p)));
    sweep["method"] = methods;
    sweep["tau"] = config.sweep->taus;
    sweep["tau_ent"] = config.sweep->tau_ents;
    sweep["init_profile"] = profiles;
    j["sweep"] = sweep;
  }
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"schema_version", "name", "env", "optimizer", "steps", "k", "seeds", "sweep", "entropy_threshold",
              "output_dir", "emit", "figure"});
  if (!j.contains("schema_version")) throw InvalidConfig("config: missing schema_version");
  const int version = get_as<int>(j, "schema_version", "config");
  if (version != kConfigSchemaVersion) {
    throw InvalidConfig("config: unsupported schema_version " + std::to_string(version));
  }

  ExperimentConfig c;
  if (j.contains("name")) c.name = get_as<std::string>(j, "name", "config");
  if (j.contains("env")) {
    const json& e = j.at("env");
    check_keys(e, "env", {"vocab_size", "correct_indices", "init_profile", "custom_ratios", "background_mass"});
    if (e.contains("vocab_size")) c.env.vocab_size = get_as<std::size_t>(e, "vocab_size", "env");
    if (e.contains("correct_indices")) {
      c.env.correct_indices = get_as<std::vector<std::size_t>>(e, "correct_indices", "env");
    }
    if (e.contains("init_profile")) {
      c.env.init_profile = parse_init_profile(get_as<std::string>(e, "init_profile", "env"));
    }
    if (e.contains("custom_ratios")) c.env.custom_ratios = get_as<std::vector<double>>(e, "custom_ratios", "env");
    if (e.contains("background_mass")) c.env.background_mass = get_as<double>(e, "background_mass", "env");
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_keys(o, "optimizer", {"method", "learning_rate", "tau", "tau_ent", "adv_eps"});
    if (o.contains("method")) c.optimizer.method = parse_method(get_as<std::string>(o, "method", "optimizer"));
    if (o.contains("learning_rate")) c.optimizer.learning_rate = get_as<double>(o, "learning_rate", "optimizer");
    if (o.contains("tau")) c.optimizer.tau = get_as<double>(o, "tau", "optimizer");
    if (o.contains("tau_ent")) c.optimizer.tau_ent = get_as<double>(o, "tau_ent", "optimizer");
    if (o.contains("adv_eps")) c.optimizer.adv_eps = get_as<double>(o, "adv_eps", "optimizer");
  }
  if (j.contains("steps")) c.steps = get_as<std::size_t>(j, "steps", "config");
  if (j.contains("k")) c.k = get_as<std::size_t>(j, "k", "config");
  if (j.contains("seeds")) c.seeds = get_as<std::vector<std::uint64_t>>(j, "seeds", "config");
  if (j.contains("entropy_threshold")) c.entropy_threshold = get_as<double>(j, "entropy_threshold", "config");
  if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j, "output_dir", "config");
  if (j.contains("figure")) c.figure = get_as<std::string>(j, "figure", "config");
  if (j.contains("emit")) {
    c.emit.clear();
    for (const auto& s : get_as<std::vector<std::string>>(j, "emit", "config")) c.emit.insert(parse_emit(s));
  }
  if (j.contains("sweep") && !j.at("sweep").is_null()) {
    const json& s = j.at("sweep");
    check_keys(s, "sweep", {"method", "tau", "tau_ent", "init_profile"});
    SweepGrid g;
    if (s.contains("method")) {
      for (const auto& m : get_as<std::vector<std::string>>(s, "method", "sweep")) g.methods.push_back(parse_method(m));
    }
    if (s.contains("tau")) g.taus = get_as<std::vector<double>>(s, "tau", "sweep");
    if (s.contains("tau_ent")) g.tau_ents = get_as<std::vector<double>>(s, "tau_ent", "sweep");
    if (s.contains("init_profile")) {
      for (const auto& p : get_as<std::vector<std::string>>(s, "init_profile", "sweep")) {
        g.profiles.push_back(parse_init_profile(p));
      }
    }
    c.sweep = std::move(g);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig3", "fig6", "fig7", "fig8", "fig9", "fig10"};
  return names;
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig c;
  c.name = std::string(name);
  c.figure = std::string(name);
  c.output_dir = std::filesystem::path("out") / c.name;
  c.emit = {Emit::TracesCsv, Emit::SummaryJson, Emit::FigureData};
  c.env.init_profile = InitProfile::Skewed;
  c.optimizer.method = Method::GRPO;

  if (name == "fig3") return c;
  SweepGrid g;
  if (name == "fig6") {
    g.profiles = {InitProfile::Uniform, InitProfile::MildSkew, InitProfile::Skewed};
  } else if (name == "fig7") {
    g.methods = {Method::GRPO, Method::UCPO, Method::GlobalEntropy};
    g.taus = {0.2};
    g.tau_ents = {0.1};
  } else if (name == "fig8") {
    g.methods = {Method::GRPO, Method::UCPO};
    g.taus = {0.2};
  } else if (name == "fig9") {
    g.methods = {Method::GlobalEntropy, Method::UCPO};
    g.taus = {0.2};
    g.tau_ents = {0.01, 0.05, 0.1, 0.5};
  } else if (name == "fig10") {
    g.methods = {Method::UCPO};
    g.taus = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  } else {
    std::string catalog;
    for (const auto& n : preset_names()) catalog += (catalog.empty() ? "" : ", ") + n;
    throw UsageError("unknown preset '" + std::string(name) + "'; available presets: " + catalog);
  }
  c.sweep = std::move(g);
  return c;
}

std::vector<Cell> expand_cells(const ExperimentConfig& config) {
  std::vector<Method> methods{config.optimizer.method};
  std::vector<double> taus{config.optimizer.tau};
  std::vector<double> tau_ents{config.optimizer.tau_ent};
  std::vector<InitProfile> profiles{config.env.init_profile};
  if (config.sweep) {
    if (!config.sweep->methods.empty()) methods = config.sweep->methods;
    if (!config.sweep->taus.empty()) taus = config.sweep->taus;
    if (!config.sweep->tau_ents.empty()) tau_ents = config.sweep->tau_ents;
    if (!config.sweep->profiles.empty()) profiles = config.sweep->profiles;
  }

  std::vector<Cell> cells;
  auto push = [&](const OptimizerConfig& opt, InitProfile profile) {
    Cell c;
    c.env = config.env;
    c.env.init_profile = profile;
    c.optimizer = opt;
    c.name = cell_name(c.env, c.optimizer);
    for (const Cell& existing : cells) {
      if (existing.name == c.name) return;
    }
    cells.push_back(std::move(c));
  };
  for (Method m : methods) {
    const std::vector<double> coeffs = m == Method::UCPO            ? taus
                                       : m == Method::GlobalEntropy ? tau_ents
                                                                    : std::vector<double>{0.0};
    for (double coeff : coeffs) {
      for (InitProfile p : profiles) {
        OptimizerConfig opt = config.optimizer;
        opt.method = m;
        if (m == Method::UCPO) opt.tau = coeff;
        if (m == Method::GlobalEntropy) opt.tau_ent = coeff;
        push(opt, p);
      }
    }
  }
  return cells;
}

const CellSummary* SweepSummary::find(std::string_view cell_name) const {
  for (const auto& c : cells) {
    if (c.cell.name == cell_name) return &c;
  }
  return nullptr;
}

SweepSummary summarize(const std::vector<CellResult>& cells) {
  SweepSummary summary;
  for (const CellResult& cr : cells) {
    CellSummary cs;
    cs.cell = cr.cell;
    cs.winner_histogram.assign(cr.cell.env.num_correct(), 0);
    std::vector<double> hn, hq, z, inc;
    std::size_t collapsed = 0;
    for (const RunResult& r : cr.runs) {
      SeedFinal f;
      f.seed = r.seed;
      f.normalized_entropy = r.final_snapshot.normalized_entropy;
      f.conditional_entropy = r.final_snapshot.conditional_entropy;
      f.correct_mass = r.final_snapshot.correct_mass;
      f.incorrect_mass = r.final_snapshot.incorrect_mass;
      f.winner = r.winner;
      f.collapsed = r.collapsed;
      f.aborted = r.aborted;
      cs.seeds.push_back(f);
      hn.push_back(f.normalized_entropy);
      hq.push_back(f.conditional_entropy);
      z.push_back(f.correct_mass);
      inc.push_back(f.incorrect_mass);
      ++cs.winner_histogram[r.winner];
      if (r.collapsed) ++collapsed;
      if (r.aborted) ++cs.aborted;
    }
    cs.normalized_entropy = stat_of(hn);
    cs.conditional_entropy = stat_of(hq);
    cs.correct_mass = stat_of(z);
    cs.incorrect_mass = stat_of(inc);
    cs.collapse_rate =
        cr.runs.empty() ? 0.0 : static_cast<double>(collapsed) / static_cast<double>(cr.runs.size());
    summary.cells.push_back(std::move(cs));
  }
  return summary;
}

std::string trace_csv_header(std::size_t num_correct) {
  return "step,seed,method" + correct_columns("q_", num_correct) + correct_columns("count_", num_correct) +
         correct_columns("gradmass_", num_correct) + ",Z,H_q,H_q_normalized,incorrect_mass,logratio_01,logratio_02\n";
}

std::string trace_csv(const CellResult& cell) {
  const EnvSpec& env = cell.cell.env;
  const std::size_t m = env.num_correct();
  const std::string method(to_string(cell.cell.optimizer.method));
  std::string out = trace_csv_header(m);

  auto tail = [m](CsvRow& row, const ProbeSnapshot& s) {
    row.add(s.correct_mass).add(s.conditional_entropy).add(s.normalized_entropy).add(s.incorrect_mass);
    if (m >= 2) row.add(s.log_ratio(0, 1)); else row.add_empty();
    if (m >= 3) row.add(s.log_ratio(0, 2)); else row.add_empty();
  };

  for (const RunResult& run : cell.runs) {
    const auto seed = static_cast<std::size_t>(run.seed);
    for (const StepTrace& t : run.traces) {
      CsvRow row;
      row.add(t.step).add(seed).add(method);
      for (double q : t.snapshot.conditional_q) row.add(q);
      for (std::size_t c : env.correct_indices) row.add(t.counts[c]);
      for (std::size_t c : env.correct_indices) row.add(t.per_token_grad_mass[c]);
      tail(row, t.snapshot);
      out += row.str();
    }
    if (run.aborted) {
      out += "# partial trace: seed " + std::to_string(run.seed) + " aborted at " + run.abort_reason + "\n";
      continue;
    }
    CsvRow row;
    row.add(run.traces.size()).add(seed).add(method);
    for (double q : run.final_snapshot.conditional_q) row.add(q);
    for (std::size_t i = 0; i < 2 * m; ++i) row.add_empty();
    tail(row, run.final_snapshot);
    out += row.str();
  }
  return out;
}

json summary_json(const ExperimentResult& result) {
  const ExperimentConfig& cfg = result.config;
  json cells = json::array();
  for (const CellSummary& cs : result.summary.cells) {
    json seeds = json::array();
    for (const SeedFinal& f : cs.seeds) {
      seeds.push_back({{"seed", f.seed},
                       {"H_q_normalized", f.normalized_entropy},
                       {"H_q", f.conditional_entropy},
                       {"Z", f.correct_mass},
                       {"incorrect_mass", f.incorrect_mass},
                       {"winner", f.winner},
                       {"collapsed", f.collapsed},
                       {"aborted", f.aborted}});
    }
    cells.push_back({{"name", cs.cell.name},
                     {"method", std::string(to_string(cs.cell.optimizer.method))},
                     {"tau", cs.cell.optimizer.tau},
                     {"tau_ent", cs.cell.optimizer.tau_ent},
                     {"init_profile", std::string(to_string(cs.cell.env.init_profile))},
                     {"H_q_normalized", stat_json(cs.normalized_entropy)},
                     {"H_q", stat_json(cs.conditional_entropy)},
                     {"Z", stat_json(cs.correct_mass)},
                     {"incorrect_mass", stat_json(cs.incorrect_mass)},
                     {"winner_histogram", cs.winner_histogram},
                     {"collapse_rate", cs.collapse_rate},
                     {"aborted", cs.aborted},
                     {"seeds", seeds}});
  }
  return json{{"schema_version", kConfigSchemaVersion},
              {"metadata",
               {{"name", cfg.name},
                {"steps", cfg.steps},
                {"k", cfg.k},
                {"learning_rate", cfg.optimizer.learning_rate},
                {"adv_eps", cfg.optimizer.adv_eps},
                {"entropy_threshold", cfg.entropy_threshold},
                {"seeds", cfg.seeds}}},
              {"config", to_json(cfg)},
              {"cells", cells}};
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool write_outputs) {
  config.validate();
  ExperimentResult result;
  result.config = config;
  const std::vector<Cell> cells = expand_cells(config);
  const std::size_t ns = config.seeds.size();
  const std::size_t jobs = cells.size() * ns;

  std::vector<RunResult> runs(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) {
      const Cell& cell = cells[i / ns];
      try {
        runs[i] = run_training(cell.env, cell.optimizer, config.k, config.steps, config.seeds[i % ns],
                               config.entropy_threshold);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(jobs, std::max(1u, std::thread::hardware_concurrency()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellResult cr;
    cr.cell = cells[c];
    for (std::size_t s = 0; s < ns; ++s) {
      cr.runs.push_back(std::move(runs[c * ns + s]));
      if (cr.runs.back().aborted) result.any_aborted = true;
    }
    result.cells.push_back(std::move(cr));
  }
  result.summary = summarize(result.cells);

  if (write_outputs) {
    if (config.emit.count(Emit::TracesCsv)) {
      for (const CellResult& cr : result.cells) write_text_file(trace_path(config.output_dir, cr.cell), trace_csv(cr));
    }
    if (config.emit.count(Emit::SummaryJson)) {
      write_text_file(config.output_dir / "summary.json", summary_json(result).dump(2) + "\n");
    }
    if (config.emit.count(Emit::FigureData) && !config.figure.empty()) {
      emit_figure_data(result, config.figure, config.output_dir / "figures");
    }
  }
  return result;
}

std::vector<std::filesystem::path> emit_figure_data(const ExperimentResult& result, std::string_view figure_id,
                                                    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  if (figure_id == "fig3") {
    fig3_data(result, dir, written);
  } else if (figure_id == "fig6") {
    fig6_data(result, dir, written);
  } else if (figure_id == "fig7") {
    fig7_data(result, dir, written);
  } else if (figure_id == "fig8") {
    fig8_data(result, dir, written);
  } else if (figure_id == "fig9") {
    fig9_data(result, dir, written);
  } else if (figure_id == "fig10") {
    fig10_data(result, dir, written);
  } else {
    throw InvalidConfig("unknown figure '" + std::string(figure_id) + "'");
  }
  return written;
}

}  // namespace rlvr
