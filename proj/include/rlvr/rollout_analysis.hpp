#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rlvr {

struct Rollout {
  std::string text;
  bool correct = false;
};

struct PromptRecord {
  std::string prompt_id;
  std::vector<Rollout> rollouts;
};

/// Prompts in first-appearance order.
struct RolloutLog {
  std::vector<PromptRecord> prompts;
};

/// Parses line-delimited JSON records {"prompt_id": str, "text": str,
/// "correct": bool}; blank lines are skipped. Records sharing a prompt_id are
/// grouped. Throws InvalidInput with the line number on malformed records.
RolloutLog parse_rollout_log(std::istream& in);
RolloutLog load_rollout_log(const std::filesystem::path& path);

/// Exact value num/den of the unbiased estimator.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  bool operator==(const Rational&) const = default;
};

/// Binomial coefficient; exact for every n <= 64. Throws InvalidInput on overflow.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// 1 - C(n - c, k) / C(n, k) as a reduced fraction. Requires n <= 64.
Rational pass_at_k_exact(std::size_t n, std::size_t c, std::size_t k);

/// 1 - C(n - c, k) / C(n, k) via the product 1 - prod_{i = n-c+1}^{n} (1 - k / i).
/// Throws InvalidInput unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

/// Distinct whitespace-trimmed contents of $...$, $$...$$, \(...\) and \[...\]
/// within the first max_chars characters. Unterminated spans and empty
/// contents are dropped; "\$" is a literal dollar sign.
std::set<std::string> extract_formulas(std::string_view text, std::size_t max_chars);

inline constexpr std::size_t kDefaultMaxChars = 2000;

struct DiversityReport {
  std::map<std::string, double> per_prompt_scores;
  double dataset_mean = 0.0;
  std::size_t prompts_total = 0;
  std::size_t prompts_scored = 0;
  /// Prompts skipped because none of their rollouts is correct.
  std::size_t prompts_without_correct = 0;
  std::size_t rollouts_total = 0;
  std::size_t rollouts_considered = 0;
};

/// Per correct rollout i: |F_i minus the union of F_j over the other correct
/// rollouts j| / max(1, |F_i|). Prompt score = mean over its correct rollouts;
/// dataset_mean = mean over prompts with at least one correct rollout.
DiversityReport equation_diversity(const RolloutLog& log, std::size_t max_chars = kDefaultMaxChars);

/// Scores of the individual rollouts given their formula sets.
std::vector<double> uniqueness_scores(const std::vector<std::set<std::string>>& formula_sets);

struct PassAtKRow {
  std::size_t k = 0;
  double mean = 0.0;
  std::size_t prompts = 0;
};

/// Mean pass@k over prompts for each requested k. Throws InvalidInput when a
/// prompt has fewer than k rollouts.
std::vector<PassAtKRow> pass_at_k_table(const RolloutLog& log, const std::vector<std::size_t>& ks);

}  // namespace rlvr
