#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona_harness/eval_builder.hpp"
#include "persona_harness/judge.hpp"

namespace ph {

/// counts[true slot][predicted slot], slots A..C as 0..2.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 3>, 3> counts{};

  void add(char correct_slot, char predicted_slot);
  std::int64_t total() const;
};

struct MacroScores {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Accuracy plus precision/recall/F1 averaged over the three slot classes.
/// Undefined ratios (no predictions / no instances of a class) count as 0.
MacroScores macro_scores(const ConfusionMatrix& m);

/// Slice keys understood by identification_metrics.
extern const std::vector<std::string> kSliceKeys;
// disclosure, pairing, topic, experiment, role, position, arm, evaluator_kind, evaluator

struct SliceRow {
  std::vector<std::string> key;  // values in group_by order
  std::size_t n = 0;             // parsed judgments
  std::size_t unparsed = 0;
  double accuracy = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  double unparsed_rate = 0;
};

struct MetricsReport {
  std::vector<std::string> group_by;
  std::vector<SliceRow> slices;  // sorted by key
  double baseline_accuracy = 1.0 / 3.0;
  std::vector<std::string> notes;
};

/// Groups judgments by the requested keys (none = one overall row). Unparsed
/// judgments are left out of n and every score, and reported as unparsed_rate.
/// Throws ReferentialError for judgments on unknown items, ConfigError for
/// unknown keys.
MetricsReport identification_metrics(const std::vector<Judgment>& judgments, const std::vector<EvaluationItem>& items,
                                     const std::vector<std::string>& group_by);

nlohmann::json to_json(const MetricsReport& r);
std::string format_metrics_table(const MetricsReport& r, const std::string& title);

}  // namespace ph
