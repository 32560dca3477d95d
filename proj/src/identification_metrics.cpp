#include "persona_harness/identification_metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "persona_harness/errors.hpp"

namespace ph {

using nlohmann::json;

void ConfusionMatrix::add(char correct_slot, char predicted_slot) {
  ++counts[static_cast<std::size_t>(correct_slot - 'A')][static_cast<std::size_t>(predicted_slot - 'A')];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

MacroScores macro_scores(const ConfusionMatrix& m) {
  MacroScores s;
  const auto total = m.total();
  if (total == 0) return s;
  std::int64_t diag = 0;
  for (std::size_t k = 0; k < 3; ++k) diag += m.counts[k][k];
  s.accuracy = static_cast<double>(diag) / static_cast<double>(total);
  for (std::size_t k = 0; k < 3; ++k) {
    std::int64_t predicted = 0, actual = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      predicted += m.counts[i][k];
      actual += m.counts[k][i];
    }
    const auto tp = static_cast<double>(m.counts[k][k]);
    const double p = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double r = actual ? tp / static_cast<double>(actual) : 0.0;
    s.precision += p;
    s.recall += r;
    // 2PR/(P+R) written over counts: 2tp / (predicted + actual)
    s.f1 += (predicted + actual) ? 2.0 * tp / static_cast<double>(predicted + actual) : 0.0;
  }
  s.precision /= 3.0;
  s.recall /= 3.0;
  s.f1 /= 3.0;
  return s;
}

const std::vector<std::string> kSliceKeys = {"disclosure", "pairing", "topic",          "experiment", "role",
                                             "position",   "arm",     "evaluator_kind", "evaluator"};

namespace {

std::string slice_value(const std::string& key, const EvaluationItem& item, const Judgment& j) {
  if (key == "disclosure") return to_string(item.disclosure);
  if (key == "pairing") return item.pairing_familiarity;
  if (key == "topic") return item.topic_familiarity;
  if (key == "experiment") return item.experiment;
  if (key == "role") return to_string(item.role);
  if (key == "position") return "speaker" + std::to_string(item.speaker_position);
  if (key == "arm") return item.arm;
  if (key == "evaluator_kind") return j.evaluator_kind == EvaluatorKind::llm ? "llm" : "human";
  if (key == "evaluator") return j.evaluator();
  throw ConfigError("unknown slice key '" + key + "'");
}

}  // namespace

MetricsReport identification_metrics(const std::vector<Judgment>& judgments, const std::vector<EvaluationItem>& items,
                                     const std::vector<std::string>& group_by) {
  for (const auto& k : group_by) {
    if (std::find(kSliceKeys.begin(), kSliceKeys.end(), k) == kSliceKeys.end()) {
      throw ConfigError("unknown slice key '" + k + "'");
    }
  }
  std::unordered_map<std::string, const EvaluationItem*> by_id;
  for (const auto& it : items) by_id.emplace(it.item_id, &it);

  struct Acc {
    ConfusionMatrix m;
    std::size_t unparsed = 0;
  };
  std::map<std::vector<std::string>, Acc> groups;
  for (const auto& j : judgments) {
    const auto it = by_id.find(j.item_id);
    if (it == by_id.end()) throw ReferentialError("judgment for unknown item '" + j.item_id + "'");
    std::vector<std::string> key;
    for (const auto& k : group_by) key.push_back(slice_value(k, *it->second, j));
    auto& g = groups[key];
    if (j.choice) {
      g.m.add(it->second->correct_slot, *j.choice);
    } else {
      ++g.unparsed;
    }
  }

  MetricsReport report;
  report.group_by = group_by;
  for (const auto& [key, g] : groups) {
    const auto n = static_cast<std::size_t>(g.m.total());
    if (n == 0) {
      std::string label;
      for (const auto& v : key) label += (label.empty() ? "" : "/") + v;
      report.notes.push_back("slice " + (label.empty() ? std::string("(all)") : label) +
                             " has no parsed judgments; omitted");
      continue;
    }
    const auto s = macro_scores(g.m);
    SliceRow row;
    row.key = key;
    row.n = n;
    row.unparsed = g.unparsed;
    row.accuracy = s.accuracy;
    row.macro_precision = s.precision;
    row.macro_recall = s.recall;
    row.macro_f1 = s.f1;
    row.unparsed_rate = static_cast<double>(g.unparsed) / static_cast<double>(n + g.unparsed);
    report.slices.push_back(std::move(row));
  }
  return report;
}

json to_json(const MetricsReport& r) {
  json rows = json::array();
  for (const auto& s : r.slices) {
    json key = json::object();
    for (std::size_t i = 0; i < r.group_by.size(); ++i) key[r.group_by[i]] = s.key[i];
    rows.push_back({{"slice", key},
                    {"n", s.n},
                    {"unparsed", s.unparsed},
                    {"accuracy", s.accuracy},
                    {"macro_precision", s.macro_precision},
                    {"macro_recall", s.macro_recall},
                    {"macro_f1", s.macro_f1},
                    {"unparsed_rate", s.unparsed_rate}});
  }
  return {{"group_by", r.group_by}, {"baseline_accuracy", r.baseline_accuracy}, {"slices", rows}, {"notes", r.notes}};
}

std::string format_metrics_table(const MetricsReport& r, const std::string& title) {
  std::vector<std::string> header = r.group_by;
  if (header.empty()) header.push_back("slice");
  for (const char* h : {"n", "Acc", "Prec", "Rec", "F1", "Unparsed"}) header.emplace_back(h);
  std::vector<std::vector<std::string>> rows;
  auto fmt = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  for (const auto& s : r.slices) {
    std::vector<std::string> row = s.key;
    if (row.empty()) row.push_back("all");
    row.push_back(std::to_string(s.n));
    for (double v : {s.accuracy, s.macro_precision, s.macro_recall, s.macro_f1, s.unparsed_rate}) row.push_back(fmt(v));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  const std::size_t label_cols = std::max<std::size_t>(1, r.group_by.size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto pad = std::string(width[c] - cells[c].size(), ' ');
      out += c < label_cols ? cells[c] + pad : pad + cells[c];
      out += c + 1 < cells.size() ? "  " : "\n";
    }
    return out;
  };
  std::string out = title + "\n" + line(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  out += std::string(total - 2, '-') + "\n";
  for (const auto& row : rows) out += line(row);
  out += "baseline accuracy " + fmt(r.baseline_accuracy) + "\n";
  for (const auto& n : r.notes) out += "note: " + n + "\n";
  return out;
}

}  // namespace ph
