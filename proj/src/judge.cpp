#include "persona_harness/judge.hpp"

#include <fstream>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/parallel.hpp"
#include "persona_harness/text.hpp"

namespace ph {

using nlohmann::json;

std::string Judgment::evaluator() const {
  return (evaluator_kind == EvaluatorKind::llm ? "llm:" : "human:") + evaluator_id;
}

std::vector<ChatMessage> render_judge_prompt(const EvaluationItem& item) {
  const auto& other = item.other_name;
  std::string p;
  if (!hides_bio(item.disclosure)) {
    p += "You know that " + other + "'s biography is as follows:\n\n" + item.view.interlocutor_bio + "\n\n";
    p += "Given " + other + "'s biography and the following dialogue about the topic " + item.topic;
  } else {
    p += "Given the following dialogue about the topic " + item.topic;
  }
  if (hides_turns(item.disclosure)) p += ", in which " + other + "'s turns are masked";
  p += ", your task is to guess which of the provided biographies corresponds to " + item.tested_name + ".\n";
  p += "The biographies are provided at the end of the dialogue.\n"
       "Please provide your answer as \"Biography A\", \"Biography B\", or \"Biography C\".\n"
       "Please make your guess even though the dialogue may sound a little weird or unnatural.\n"
       "Your response must follow this JSON format:\n"
       "{\"Guess\": \"Biography X\"}\n\nDIALOGUE\n\n";
  for (const auto& t : item.view.turns) p += t.speaker_name + ": " + t.text + "\n";
  p += "\nBIOGRAPHIES\n";
  for (const auto& c : item.candidates) {
    p += "\nBiography " + std::string(1, c.slot) + ":\n" + c.biography + "\n";
  }
  return {{"user", p}};
}

std::optional<char> parse_guess(std::string_view reply) {
  const auto obj = jsonio::first_json_object(reply);
  if (!obj) return std::nullopt;
  const auto it = obj->find("Guess");
  if (it == obj->end() || !it->is_string()) return std::nullopt;
  auto guess = text::trim(it->get<std::string>());
  if (text::istarts_with(guess, "biography")) guess = text::trim(std::string_view(guess).substr(9));
  if (guess.size() != 1) return std::nullopt;
  const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(guess[0])));
  if (c < 'A' || c > 'C') return std::nullopt;
  return c;
}

Judgment judge_item(const EvaluationItem& item, LlmGateway& gateway, const LlmEndpoint& endpoint) {
  if (endpoint.mode != DecodingMode::greedy) {
    throw ConfigError("judge endpoint '" + endpoint.id + "' must use greedy decoding");
  }
  Judgment j;
  j.item_id = item.item_id;
  j.evaluator_kind = EvaluatorKind::llm;
  j.evaluator_id = endpoint.id;
  auto messages = render_judge_prompt(item);
  const ChatOptions opts{kJudgeTemplateVersion, ""};
  j.raw_reply = gateway.chat(endpoint, messages, opts);
  j.choice = parse_guess(j.raw_reply);
  if (!j.choice) {
    messages.push_back({"assistant", j.raw_reply});
    messages.push_back({"user", kFormatReminder});
    const auto second = gateway.chat(endpoint, messages, opts);
    j.raw_reply += "\n---\n" + second;
    j.choice = parse_guess(second);
  }
  j.correct = j.choice && *j.choice == item.correct_slot;
  return j;
}

std::vector<Judgment> judge_items(const std::vector<EvaluationItem>& items, LlmGateway& gateway,
                                  const LlmEndpoint& endpoint, int threads) {
  if (endpoint.mode != DecodingMode::greedy) {
    throw ConfigError("judge endpoint '" + endpoint.id + "' must use greedy decoding");
  }
  std::vector<Judgment> out(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) { out[i] = judge_item(items[i], gateway, endpoint); });
  return out;
}

json to_json(const Judgment& j) {
  return {{"item_id", j.item_id},
          {"evaluator", {{"kind", j.evaluator_kind == EvaluatorKind::llm ? "llm" : "human"}, {"id", j.evaluator_id}}},
          {"choice", j.choice ? json(std::string(1, *j.choice)) : json(nullptr)},
          {"unparsed", j.unparsed()},
          {"correct", j.correct},
          {"raw_reply", j.raw_reply},
          {"comment", j.comment}};
}

Judgment judgment_from_json(const json& r, const std::string& where) {
  Judgment j;
  j.item_id = jsonio::require_string(r, "item_id", where);
  if (!r.contains("evaluator") || !r["evaluator"].is_object()) throw SchemaError(where, "evaluator", "missing");
  const auto kind = jsonio::require_string(r["evaluator"], "kind", where);
  if (kind != "llm" && kind != "human") throw SchemaError(where, "evaluator", "kind must be llm or human");
  j.evaluator_kind = kind == "llm" ? EvaluatorKind::llm : EvaluatorKind::human;
  j.evaluator_id = jsonio::require_string(r["evaluator"], "id", where);
  if (const auto c = jsonio::optional_string(r, "choice", where)) {
    if (c->size() != 1 || (*c)[0] < 'A' || (*c)[0] > 'C') throw SchemaError(where, "choice", "expected A, B or C");
    j.choice = (*c)[0];
  }
  j.correct = r.value("correct", false);
  j.raw_reply = r.value("raw_reply", std::string());
  j.comment = r.value("comment", std::string());
  return j;
}

void write_judgments(const std::filesystem::path& path, const std::vector<Judgment>& judgments) {
  std::vector<json> records;
  for (const auto& j : judgments) records.push_back(to_json(j));
  jsonio::write_jsonl(path, records);
}

std::vector<Judgment> read_judgments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string(), "judge");
  std::vector<Judgment> out;
  jsonio::for_each_record(in, path.filename().string(),
                          [&](const std::string& where, const json& r) { out.push_back(judgment_from_json(r, where)); });
  return out;
}

}  // namespace ph
