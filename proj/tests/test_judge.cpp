#include <doctest.h>

#include <fstream>

#include "persona_harness/errors.hpp"
#include "persona_harness/judge.hpp"
#include "persona_harness/mock_models.hpp"
#include "test_support.hpp"

using namespace ph;

namespace {

EvaluationItem item(Disclosure disc, char correct = 'B') {
  EvaluationItem it;
  it.item_id = "d1/target/" + to_string(disc);
  it.dialogue_id = "d1";
  it.disclosure = disc;
  it.tested_name = "Ann";
  it.other_name = "Bob";
  it.topic = "sailing";
  it.correct_slot = correct;
  it.candidates = {Candidate{'A', "x", "I bake bread."}, Candidate{'B', "ann", "I sail ships across the ocean."},
                   Candidate{'C', "y", "I teach maths."}};
  it.view.turns = {{"ann", "Ann", "The ocean was rough and the ships rocked.", false},
                   {"bob", "Bob", hides_turns(disc) ? "[MASKED]" : "Did you bake anything?", hides_turns(disc)}};
  it.view.bio_masked = hides_bio(disc);
  it.view.interlocutor_bio = hides_bio(disc) ? "[MASKED]" : "I bake bread.";
  return it;
}

LlmEndpoint greedy(const std::string& name) {
  return {name, "mock://" + name, name, "", {}, DecodingMode::greedy};
}

}  // namespace

TEST_CASE("one template per disclosure") {
  const auto both = render_judge_prompt(item(Disclosure::both_disc))[0].content;
  CHECK(both.rfind("You know that Bob's biography is as follows:\n\nI bake bread.\n\nGiven Bob's biography and the "
                   "following dialogue about the topic sailing, your task is to guess which of the provided "
                   "biographies corresponds to Ann.\n",
                   0) == 0);
  CHECK(both.find("{\"Guess\": \"Biography X\"}") != std::string::npos);
  CHECK(both.find("DIALOGUE\n\nAnn: The ocean was rough and the ships rocked.\nBob: Did you bake anything?\n") !=
        std::string::npos);
  CHECK(both.find("BIOGRAPHIES\n\nBiography A:\nI bake bread.\n\nBiography B:\nI sail ships across the ocean.\n\n"
                  "Biography C:\nI teach maths.\n") != std::string::npos);

  const auto bio = render_judge_prompt(item(Disclosure::bio_disc))[0].content;
  CHECK(bio.find("Given Bob's biography and the following dialogue about the topic sailing, in which Bob's turns "
                 "are masked, your task") != std::string::npos);
  CHECK(bio.find("Bob: [MASKED]") != std::string::npos);
  CHECK(bio.find("Did you bake") == std::string::npos);

  const auto turns = render_judge_prompt(item(Disclosure::turns_disc))[0].content;
  CHECK(turns.rfind("Given the following dialogue about the topic sailing, your task is to guess", 0) == 0);
  CHECK(turns.find("biography is as follows") == std::string::npos);

  const auto mask = render_judge_prompt(item(Disclosure::both_mask))[0].content;
  CHECK(mask.rfind("Given the following dialogue about the topic sailing, in which Bob's turns are masked, your task",
                   0) == 0);
  // the disclosed interlocutor bio appears only once (as candidate A), never in the masked prompts' preamble
  CHECK(mask.find("I bake bread.") == mask.rfind("I bake bread."));
}

TEST_CASE("parse_guess") {
  CHECK(parse_guess(R"({"Guess": "Biography A"})") == 'A');
  CHECK(parse_guess(R"(Sure. {"Guess": "biography c"} Hope that helps)") == 'C');
  CHECK(parse_guess(R"({"Guess": "B"})") == 'B');
  CHECK(parse_guess("```json\n{\n  \"Guess\": \"Biography B\"\n}\n```") == 'B');
  CHECK_FALSE(parse_guess(R"({"Guess": "Biography D"})"));
  CHECK_FALSE(parse_guess(R"({"guess": "Biography A"})"));
  CHECK_FALSE(parse_guess("Biography A"));
  CHECK_FALSE(parse_guess(R"({"Guess": 1})"));
  CHECK_FALSE(parse_guess(R"({"Guess": "Biography AB"})"));
  CHECK_FALSE(parse_guess(""));
}

TEST_CASE("judge requires greedy decoding") {
  testsupport::MockRig rig("j", [](const std::vector<ChatMessage>&) { return R"({"Guess": "Biography A"})"; });
  CHECK_THROWS_AS(judge_item(item(Disclosure::both_disc), *rig.gateway, rig.endpoint), ConfigError);
  CHECK_THROWS_AS(judge_items({item(Disclosure::both_disc)}, *rig.gateway, rig.endpoint), ConfigError);
}

TEST_CASE("reprompt once, then record unparsed") {
  int calls = 0;
  std::vector<ChatMessage> second_messages;
  testsupport::MockRig fixes("f", [&](const std::vector<ChatMessage>& m) -> std::string {
    ++calls;
    if (m.size() == 1) return "I think it's B.";
    second_messages = m;
    return R"({"Guess": "Biography B"})";
  }, DecodingMode::greedy);
  const auto j = judge_item(item(Disclosure::both_disc), *fixes.gateway, fixes.endpoint);
  CHECK(calls == 2);
  CHECK(j.choice == 'B');
  CHECK(j.correct);
  CHECK(j.raw_reply == "I think it's B.\n---\n{\"Guess\": \"Biography B\"}");
  REQUIRE(second_messages.size() == 3);
  CHECK(second_messages[1].role == "assistant");
  CHECK(second_messages[2].content == kFormatReminder);

  testsupport::MockRig never("n", [](const std::vector<ChatMessage>&) { return std::string("no idea"); },
                             DecodingMode::greedy);
  const auto u = judge_item(item(Disclosure::both_disc), *never.gateway, never.endpoint);
  CHECK(u.unparsed());
  CHECK_FALSE(u.correct);
  CHECK(u.evaluator() == "llm:n");
}

TEST_CASE("greedy judging is deterministic across runs and thread counts") {
  std::vector<EvaluationItem> items;
  for (auto d : kAllDisclosures)
    for (char c : {'A', 'B', 'C'}) {
      auto it = item(d, c);
      it.item_id += std::string("/") + c;
      items.push_back(it);
    }
  auto t = std::make_shared<RoutingTransport>();
  register_mock_models(*t);
  LlmGateway g1(t), g2(t);
  const auto a = judge_items(items, g1, greedy("token-judge"), 1);
  const auto b = judge_items(items, g2, greedy("token-judge"), 4);
  CHECK(a == b);
  for (const auto& j : a) {
    CHECK(j.choice == 'B');  // shares "ocean", "ships"
  }
}

TEST_CASE("token judge discounts a disclosed interlocutor") {
  // Bob's turn mentions bread; with his bio disclosed the judge knows the bread
  // biography is Bob's and stops considering it.
  auto it = item(Disclosure::both_disc);
  it.view.turns = {{"ann", "Ann", "Hello there.", false}, {"bob", "Bob", "I bake bread every day.", false}};
  it.candidates = {Candidate{'A', "bob", "I bake bread."}, Candidate{'B', "ann", "I sail ships."},
                   Candidate{'C', "y", "I teach maths."}};
  const auto shown = mock_token_judge(render_judge_prompt(it));
  CHECK(shown == R"({"Guess": "Biography B"})");
  it.disclosure = Disclosure::turns_disc;
  it.view.bio_masked = true;
  it.view.interlocutor_bio = "[MASKED]";
  CHECK(mock_token_judge(render_judge_prompt(it)) == R"({"Guess": "Biography A"})");
}

TEST_CASE("judgment file round trip") {
  std::vector<Judgment> js = {{"i1", EvaluatorKind::llm, "m", 'A', "{...}", true, ""},
                              {"i2", EvaluatorKind::human, "ann-0001", std::nullopt, "", false, "hard one"}};
  const auto dir = testsupport::scratch_dir("judge_io");
  write_judgments(dir / "j.jsonl", js);
  CHECK(read_judgments(dir / "j.jsonl") == js);
  CHECK_THROWS_AS(read_judgments(dir / "none.jsonl"), MissingArtifactError);
  std::ofstream(dir / "bad.jsonl") << R"({"item_id": "x", "evaluator": {"kind": "robot", "id": "r"}})" << "\n";
  CHECK_THROWS_AS(read_judgments(dir / "bad.jsonl"), SchemaError);
}
