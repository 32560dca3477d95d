#include <doctest.h>

#include <mutex>

#include "persona_harness/errors.hpp"
#include "persona_harness/generation.hpp"
#include "persona_harness/mock_models.hpp"
#include "persona_harness/text.hpp"
#include "test_support.hpp"

using namespace ph;
using testsupport::profile;

namespace {

Corpus two_speakers() {
  return Corpus({profile("t", "w", {"T one.", "T two.", "T three.", "T four.", "T five.", "T six."}, "Tess"),
                 profile("i", "w", {"I one.", "I two."}, "Ivan")},
                {});
}

PairingEntry entry(const std::string& id = "Exp1-0001") {
  return {id, ExperimentId::exp1, "t", "i", "sailing", "d1"};
}

}  // namespace

TEST_CASE("config validation") {
  GenerationConfig c;
  CHECK_NOTHROW(c.validate());
  c.turns_total = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.turns_total = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.biography_sentence_cap = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("prompt layout") {
  const auto c = two_speakers();
  GenerationConfig cfg;
  const std::vector<Turn> history = {{"t", "Hello.", 0}, {"i", "Hi there.", 1}};
  const auto m = render_generation_prompt(c.profile("t"), c.profile("i"), "sailing", history, cfg);
  REQUIRE(m.size() == 1);
  CHECK(m[0].content ==
        "You are Tess. Your biography is as follows:\n\n"
        "T one.\nT two.\nT three.\nT four.\nT five.\n\n"
        "You are having a dialogue with Ivan. Their biography is as follows:\n\n"
        "I one.\nI two.\n\n"
        "You are discussing about the topic sailing. Considering the dialogue history, provide an answer to Ivan. "
        "Be sure to provide the answer only.\n\n"
        "Tess: Hello.\nIvan: Hi there.\n");
}

TEST_CASE("clean_reply strips a speaker-name echo") {
  CHECK(clean_reply("  Tess: hello ", {"Tess", "Ivan"}) == "hello");
  CHECK(clean_reply("ivan:hi", {"Tess", "Ivan"}) == "hi");
  CHECK(clean_reply("Tessa: hi", {"Tess"}) == "Tessa: hi");
  CHECK(clean_reply("Well: fine", {"Tess"}) == "Well: fine");
}

TEST_CASE("protocol: alternation, full history, fixed length") {
  const auto c = two_speakers();
  std::mutex mu;
  std::vector<std::string> prompts;
  testsupport::MockRig rig("rec", [&](const std::vector<ChatMessage>& m) {
    std::lock_guard lock(mu);
    prompts.push_back(m[0].content);
    return "reply " + std::to_string(prompts.size());
  });
  GenerationConfig cfg;
  const auto out = generate_dialogue(entry(), c, *rig.gateway, rig.endpoint, cfg);
  REQUIRE(out.status == GenerationStatus::ok);
  const auto& d = *out.dialogue;
  CHECK(d.dialogue_id == "gen-rec-Exp1-0001");
  CHECK(d.source == DialogueSource::generated);
  CHECK(d.generator == "rec");
  CHECK(d.experiment == ExperimentId::exp1);
  CHECK(d.topic->label == "sailing");
  CHECK(d.speaker_a == "t");
  REQUIRE(d.turns.size() == 8);
  REQUIRE(prompts.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CAPTURE(i);
    const bool target = i % 2 == 0;
    CHECK(d.turns[i].speaker_ref == (target ? "t" : "i"));
    CHECK(d.turns[i].index == i);
    CHECK(d.turns[i].text == "reply " + std::to_string(i + 1));
    CHECK(prompts[i].rfind(target ? "You are Tess." : "You are Ivan.", 0) == 0);
    // history is every accepted turn so far, in order
    std::string expected;
    for (std::size_t k = 0; k < i; ++k) expected += (k % 2 == 0 ? "Tess: " : "Ivan: ") + d.turns[k].text + "\n";
    const auto cut = prompts[i].find("answer only.\n\n");
    REQUIRE(cut != std::string::npos);
    CHECK(prompts[i].substr(cut + 14) == expected);
  }

  cfg.target_first = false;
  cfg.turns_total = 4;
  const auto flipped = generate_dialogue(entry("Exp1-0002"), c, *rig.gateway, rig.endpoint, cfg);
  REQUIRE(flipped.dialogue);
  CHECK(flipped.dialogue->turns.size() == 4);
  CHECK(flipped.dialogue->turns[0].speaker_ref == "i");
}

TEST_CASE("sampling replies are not shared across dialogues with equal prompts") {
  const auto c = two_speakers();
  int calls = 0;
  testsupport::MockRig rig("s", [&](const std::vector<ChatMessage>&) { return "r" + std::to_string(++calls); });
  GenerationConfig cfg;
  cfg.turns_total = 2;
  cfg.threads = 1;
  PairingPlan plan;
  plan.entries = {entry("Exp1-0001"), entry("Exp1-0002")};
  const auto run = generate_all(plan, c, *rig.gateway, rig.endpoint, cfg);
  REQUIRE(run.dialogues.size() == 2);
  CHECK(calls == 4);
  CHECK(run.dialogues[0].turns[0].text != run.dialogues[1].turns[0].text);
}

TEST_CASE("refusals exclude, empty replies retry then fail, transport errors fail") {
  const auto c = two_speakers();
  testsupport::MockRig refuse("r", [](const std::vector<ChatMessage>& m) -> std::string {
    return m[0].content.find("Ivan: ") != std::string::npos ? "I'm sorry, I can't continue." : "hello";
  });
  const auto ex = generate_dialogue(entry(), c, *refuse.gateway, refuse.endpoint, {});
  CHECK(ex.status == GenerationStatus::excluded);
  CHECK_FALSE(ex.dialogue);

  int calls = 0;
  testsupport::MockRig once_empty("e", [&](const std::vector<ChatMessage>&) -> std::string {
    return ++calls == 1 ? "  " : "ok";
  });
  const auto ok = generate_dialogue(entry(), c, *once_empty.gateway, once_empty.endpoint, {});
  CHECK(ok.status == GenerationStatus::ok);
  CHECK(calls == 9);

  testsupport::MockRig empty("z", [](const std::vector<ChatMessage>&) { return std::string("Tess:"); });
  const auto failed = generate_dialogue(entry(), c, *empty.gateway, empty.endpoint, {});
  CHECK(failed.status == GenerationStatus::failed);

  auto transport = std::make_shared<RoutingTransport>();
  transport->add_model("boom", [](const std::vector<ChatMessage>&, const SamplingParams&) -> std::string {
    throw TransportError("down", 400, "");
  });
  LlmGateway gw(transport);
  LlmEndpoint e{"boom", "mock://boom", "boom", "", {}, DecodingMode::sampling};
  PairingPlan plan;
  plan.entries = {entry()};
  const auto run = generate_all(plan, c, gw, e, {});
  CHECK(run.dialogues.empty());
  REQUIRE(run.problems.size() == 1);
  CHECK(run.problems[0].status == GenerationStatus::failed);
  CHECK(run.problems[0].entry_id == "Exp1-0001");
}

TEST_CASE("copier mock speaks its own biography") {
  const auto c = two_speakers();
  testsupport::MockRig rig("copier", mock_copier);
  const auto out = generate_dialogue(entry(), c, *rig.gateway, rig.endpoint, {});
  REQUIRE(out.dialogue);
  for (const auto& t : out.dialogue->turns) {
    const auto& bio = c.profile(t.speaker_ref).biography;
    bool found = false;
    for (const auto& s : bio) found |= t.text.find(s) != std::string::npos;
    CHECK(found);
  }
}
