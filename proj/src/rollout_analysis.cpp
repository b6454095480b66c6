#include "rlvr/rollout_analysis.hpp"

#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "rlvr/error.hpp"

namespace rlvr {

RolloutLog parse_rollout_log(std::istream& in) {
  RolloutLog log;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidInput("rollout log line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("prompt_id") || !rec.contains("text") || !rec.contains("correct") ||
        !rec["prompt_id"].is_string() || !rec["text"].is_string() || !rec["correct"].is_boolean()) {
      throw InvalidInput("rollout log line " + std::to_string(line_no) +
                         ": expected {\"prompt_id\": string, \"text\": string, \"correct\": bool}");
    }
    const std::string id = rec["prompt_id"].get<std::string>();
    auto [it, inserted] = index.try_emplace(id, log.prompts.size());
    if (inserted) log.prompts.push_back(PromptRecord{id, {}});
    log.prompts[it->second].rollouts.push_back(Rollout{rec["text"].get<std::string>(), rec["correct"].get<bool>()});
  }
  return log;
}

RolloutLog load_rollout_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rollout log " + path.string());
  return parse_rollout_log(in);
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // acc * (n - k + i) / i stays integral at every step
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) throw InvalidInput("binomial: overflow");
  }
  return static_cast<std::uint64_t>(acc);
}

namespace {

void check_pass_args(std::size_t n, std::size_t c, std::size_t k) {
  if (c > n) throw InvalidInput("pass_at_k: c > n");
  if (k < 1 || k > n) throw InvalidInput("pass_at_k: need 1 <= k <= n");
}

}  // namespace

Rational pass_at_k_exact(std::size_t n, std::size_t c, std::size_t k) {
  check_pass_args(n, c, k);
  if (n > 64) throw InvalidInput("pass_at_k_exact: n must be <= 64");
  const std::uint64_t total = binomial(n, k);
  const std::uint64_t miss = binomial(n - c, k);
  Rational r{total - miss, total};
  const std::uint64_t g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  if (r.num == 0) r.den = 1;
  return r;
}

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
  check_pass_args(n, c, k);
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (std::size_t i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

// Position of the first unescaped `close` at or after `from`, or npos.
std::size_t find_close(std::string_view text, std::string_view close, std::size_t from) {
  for (std::size_t p = from; p + close.size() <= text.size(); ++p) {
    if (close == "$" || close == "$$") {
      if (text[p] == '\\') {
        ++p;  // skip escaped char
        continue;
      }
    }
    if (text.compare(p, close.size(), close) == 0) return p;
  }
  return std::string_view::npos;
}

}  // namespace

std::set<std::string> extract_formulas(std::string_view text, std::size_t max_chars) {
  const std::string_view window = text.substr(0, std::min(max_chars, text.size()));
  std::set<std::string> out;
  std::size_t p = 0;
  while (p < window.size()) {
    std::string_view open;
    std::string_view close;
    if (window[p] == '\\' && p + 1 < window.size()) {
      const char next = window[p + 1];
      if (next == '(') {
        open = "\\(";
        close = "\\)";
      } else if (next == '[') {
        open = "\\[";
        close = "\\]";
      } else {
        p += 2;  // escaped char such as \$
        continue;
      }
    } else if (window[p] == '$') {
      open = (p + 1 < window.size() && window[p + 1] == '$') ? "$$" : "$";
      close = open;
    } else {
      ++p;
      continue;
    }
    const std::size_t body = p + open.size();
    const std::size_t end = find_close(window, close, body);
    if (end == std::string_view::npos) {
      // unterminated within the window: drop the opener, keep scanning
      p = body;
      continue;
    }
    std::string content = trim(window.substr(body, end - body));
    if (!content.empty()) out.insert(std::move(content));
    p = end + close.size();
  }
  return out;
}

std::vector<double> uniqueness_scores(const std::vector<std::set<std::string>>& formula_sets) {
  std::map<std::string, std::size_t> owners;
  for (const auto& f : formula_sets) {
    for (const auto& s : f) ++owners[s];
  }
  std::vector<double> scores;
  scores.reserve(formula_sets.size());
  for (const auto& f : formula_sets) {
    std::size_t unique = 0;
    for (const auto& s : f) {
      if (owners[s] == 1) ++unique;
    }
    scores.push_back(static_cast<double>(unique) / static_cast<double>(std::max<std::size_t>(1, f.size())));
  }
  return scores;
}

DiversityReport equation_diversity(const RolloutLog& log, std::size_t max_chars) {
  DiversityReport rep;
  rep.prompts_total = log.prompts.size();
  double total = 0.0;
  for (const PromptRecord& p : log.prompts) {
    rep.rollouts_total += p.rollouts.size();
    std::vector<std::set<std::string>> sets;
    for (const Rollout& r : p.rollouts) {
      if (r.correct) sets.push_back(extract_formulas(r.text, max_chars));
    }
    if (sets.empty()) {
      ++rep.prompts_without_correct;
      continue;
    }
    rep.rollouts_considered += sets.size();
    const std::vector<double> scores = uniqueness_scores(sets);
    const double prompt_score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    rep.per_prompt_scores[p.prompt_id] = prompt_score;
    total += prompt_score;
    ++rep.prompts_scored;
  }
  rep.dataset_mean = rep.prompts_scored > 0 ? total / static_cast<double>(rep.prompts_scored) : 0.0;
  return rep;
}

std::vector<PassAtKRow> pass_at_k_table(const RolloutLog& log, const std::vector<std::size_t>& ks) {
  std::vector<PassAtKRow> rows;
  for (std::size_t k : ks) {
    PassAtKRow row{k, 0.0, 0};
    for (const PromptRecord& p : log.prompts) {
      std::size_t c = 0;
      for (const Rollout& r : p.rollouts) c += r.correct ? 1 : 0;
      if (p.rollouts.size() < k) {
        throw InvalidInput("pass@k: prompt '" + p.prompt_id + "' has " + std::to_string(p.rollouts.size()) +
                           " rollouts, fewer than k=" + std::to_string(k));
      }
      row.mean += pass_at_k(p.rollouts.size(), c, k);
      ++row.prompts;
    }
    if (row.prompts > 0) row.mean /= static_cast<double>(row.prompts);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rlvr
