#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona_harness/eval_builder.hpp"
#include "persona_harness/llm_gateway.hpp"

namespace ph {

inline constexpr const char* kJudgeTemplateVersion = "judge-v1";
inline constexpr const char* kFormatReminder =
    "Your response must follow this JSON format: {\"Guess\": \"Biography X\"} where X is A, B or C. "
    "Reply with the JSON object only.";

enum class EvaluatorKind { llm, human };

struct Judgment {
  std::string item_id;
  EvaluatorKind evaluator_kind = EvaluatorKind::llm;
  std::string evaluator_id;  // endpoint id or annotator id
  std::optional<char> choice;  // empty when unparsed
  std::string raw_reply;
  bool correct = false;
  std::string comment;

  bool unparsed() const { return !choice.has_value(); }
  std::string evaluator() const;  // "llm:<id>" / "human:<id>"
  bool operator==(const Judgment&) const = default;
};

/// One template per disclosure kind; the dialogue renders as "Name: text" lines.
std::vector<ChatMessage> render_judge_prompt(const EvaluationItem& item);

/// First JSON object in the reply, read as {"Guess": "Biography X"} with X in A-C.
std::optional<char> parse_guess(std::string_view reply);

/// Greedy endpoints only. One reprompt with a format reminder if the reply
/// cannot be parsed; after that the judgment is recorded as unparsed.
Judgment judge_item(const EvaluationItem& item, LlmGateway& gateway, const LlmEndpoint& endpoint);

std::vector<Judgment> judge_items(const std::vector<EvaluationItem>& items, LlmGateway& gateway,
                                  const LlmEndpoint& endpoint, int threads = 8);

nlohmann::json to_json(const Judgment& j);
Judgment judgment_from_json(const nlohmann::json& j, const std::string& where);
void write_judgments(const std::filesystem::path& path, const std::vector<Judgment>& judgments);
std::vector<Judgment> read_judgments(const std::filesystem::path& path);

}  // namespace ph
