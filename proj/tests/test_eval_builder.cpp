#include <doctest.h>

#include <fstream>

#include "persona_harness/errors.hpp"
#include "persona_harness/eval_builder.hpp"
#include "test_support.hpp"

using namespace ph;
using testsupport::dialogue;
using testsupport::profile;

namespace {

Corpus fixture() {
  return Corpus({profile("a", "w1", {"A1.", "A2.", "A3.", "A4.", "A5.", "A6."}, "Amy"),
                 profile("b", "w1", {"B1."}, "Ben"), profile("c", "w1", {"C1."}, "Cal"),
                 profile("d", "w2", {"D1."}, "Dot"), profile("s1", "", {"S1."}, "Person 001"),
                 profile("s2", "", {"S2."}, "Person 002"), profile("s3", "", {"S3."}, "Person 003")},
                {dialogue("g1", "a", "b", {"a says one", "b says one", "a says two", "b says two"}, "sea")});
}

}  // namespace

TEST_CASE("disclosure names and flags") {
  for (auto d : kAllDisclosures) CHECK(parse_disclosure(to_string(d)) == d);
  CHECK(parse_disclosure("both_mask") == Disclosure::both_mask);
  CHECK_FALSE(parse_disclosure("Half_Disc"));
  CHECK_FALSE(hides_turns(Disclosure::both_disc));
  CHECK_FALSE(hides_bio(Disclosure::both_disc));
  CHECK(hides_turns(Disclosure::bio_disc));
  CHECK_FALSE(hides_bio(Disclosure::bio_disc));
  CHECK_FALSE(hides_turns(Disclosure::turns_disc));
  CHECK(hides_bio(Disclosure::turns_disc));
  CHECK(hides_turns(Disclosure::both_mask));
  CHECK(hides_bio(Disclosure::both_mask));
}

TEST_CASE("masking rules hold on random dialogues") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n_turns = 1 + rng.index(9);
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n_turns; ++i) texts.push_back("utterance " + std::to_string(trial) + "." + std::to_string(i));
    const auto bio_len = 1 + rng.index(8);
    std::vector<std::string> bio_b;
    for (std::size_t i = 0; i < bio_len; ++i) bio_b.push_back("Bsent" + std::to_string(i) + ".");
    const Corpus c({profile("x", "w", {"X."}, "Xena"), profile("y", "w", bio_b, "Yuri")},
                   {dialogue("d", "x", "y", texts)});
    const auto& d = c.dialogue("d");
    for (Role role : {Role::target, Role::interlocutor}) {
      const auto tested = role == Role::target ? "x" : "y";
      const auto other = role == Role::target ? "y" : "x";
      for (auto disc : kAllDisclosures) {
        const auto v = apply_disclosure(d, c, role, disc, 5);
        REQUIRE(v.turns.size() == d.turns.size());
        for (std::size_t i = 0; i < v.turns.size(); ++i) {
          CHECK(v.turns[i].speaker_ref == d.turns[i].speaker_ref);
          if (d.turns[i].speaker_ref == tested) {
            CHECK(v.turns[i].text == d.turns[i].text);
            CHECK_FALSE(v.turns[i].masked);
          } else {
            CHECK(v.turns[i].masked == hides_turns(disc));
            CHECK(v.turns[i].text == (hides_turns(disc) ? std::string(kMasked) : d.turns[i].text));
          }
        }
        CHECK(v.bio_masked == hides_bio(disc));
        if (hides_bio(disc)) {
          CHECK(v.interlocutor_bio == kMasked);
        } else {
          CHECK(v.interlocutor_bio == biography_text(c.profile(other), 5));
        }
      }
    }
  }
}

TEST_CASE("biography_text caps sentences") {
  const auto c = fixture();
  CHECK(biography_text(c.profile("a")) == "A1. A2. A3. A4. A5.");
  CHECK(biography_text(c.profile("a"), 2) == "A1. A2.");
  CHECK(biography_text(c.profile("b"), 5) == "B1.");
}

TEST_CASE("distractors equal a brute-force ranking") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 3 + rng.index(10);
    std::vector<std::string> pool;
    std::map<std::string, Vector> vecs;
    for (std::size_t i = 0; i < n; ++i) {
      const auto id = "p" + std::to_string(rng.index(1000)) + "_" + std::to_string(i);
      pool.push_back(id);
      // few distinct values, so cosine ties happen
      vecs[id] = {static_cast<double>(rng.index(3)), static_cast<double>(rng.index(3)), 1.0};
    }
    const auto correct = pool[rng.index(n)];
    // brute force: best, then best of the rest
    auto better = [&](const std::string& x, const std::string& y) {
      const double cx = cosine(vecs[correct], vecs[x]), cy = cosine(vecs[correct], vecs[y]);
      return cx != cy ? cx > cy : x < y;
    };
    std::string first, second;
    for (const auto& id : pool) {
      if (id == correct) continue;
      if (first.empty() || better(id, first)) {
        second = first;
        first = id;
      } else if (second.empty() || better(id, second)) {
        second = id;
      }
    }
    const auto got = select_distractors(correct, pool, vecs);
    CHECK(got[0] == first);
    CHECK(got[1] == second);
  }
  std::map<std::string, Vector> tiny = {{"a", {1, 0}}, {"b", {0, 1}}};
  CHECK_THROWS_AS(select_distractors("a", {"a", "b"}, tiny), Error);
}

TEST_CASE("provider form embeds capped biographies") {
  const auto c = fixture();
  testsupport::TableEmbedder emb({{"A1. A2. A3. A4. A5.", {1, 0}}, {"B1.", {1, 1}}, {"C1.", {0, 1}}, {"D1.", {0.9, 0.1}}});
  const std::vector<SpeakerProfile> pool = {c.profile("b"), c.profile("c"), c.profile("d")};
  const auto got = select_distractors(c.profile("a"), pool, emb);
  CHECK(got[0] == "d");
  CHECK(got[1] == "b");
}

TEST_CASE("items: ids, answer key, shared distractors, metadata") {
  const auto c = fixture();
  StubEmbedder emb(64);
  const auto items = build_items(c.dialogues(), c, emb, 7);
  REQUIRE(items.size() == 8);
  std::set<std::string> ids;
  std::map<std::string, std::set<std::string>> cands_by_role;
  for (const auto& it : items) {
    CHECK(ids.insert(it.item_id).second);
    CHECK(it.item_id == "g1/" + to_string(it.role) + "/" + to_string(it.disclosure));
    const auto& correct = it.candidates[static_cast<std::size_t>(it.correct_slot - 'A')];
    CHECK(correct.profile_id == it.tested_profile);
    std::set<std::string> cs;
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(it.candidates[s].slot == static_cast<char>('A' + s));
      CHECK(it.candidates[s].biography == biography_text(c.profile(it.candidates[s].profile_id)));
      // same origin class as the tested speaker
      CHECK(c.profile(it.candidates[s].profile_id).origin == c.profile(it.tested_profile).origin);
      cs.insert(it.candidates[s].profile_id);
    }
    CHECK(cs.size() == 3);
    auto& prev = cands_by_role[to_string(it.role)];
    if (prev.empty()) prev = cs;
    CHECK(prev == cs);
    CHECK(it.arm == "gold");
    CHECK(it.experiment == "gold");
    CHECK(it.topic == "sea");
    CHECK(it.speaker_position == (it.role == Role::target ? 1 : 2));
    CHECK(it.tested_name == (it.role == Role::target ? "Amy" : "Ben"));
  }
  CHECK(build_items(c.dialogues(), c, emb, 7) == items);
}

TEST_CASE("correct slot is spread evenly") {
  std::vector<SpeakerProfile> ps;
  std::vector<Dialogue> ds;
  for (int i = 0; i < 6; ++i) ps.push_back(profile("p" + std::to_string(i), "w", {"Bio " + std::to_string(i) + "."}));
  for (int i = 0; i < 300; ++i) {
    ds.push_back(dialogue("d" + std::to_string(i), "p" + std::to_string(i % 6), "p" + std::to_string((i + 1) % 6), {"x", "y"}));
  }
  const Corpus c(ps, ds);
  StubEmbedder emb(16);
  ItemBuildOptions opts;
  opts.disclosures = {Disclosure::both_disc};
  const auto items = build_items(c.dialogues(), c, emb, 1, opts);
  std::array<int, 3> counts{};
  for (const auto& it : items) ++counts[static_cast<std::size_t>(it.correct_slot - 'A')];
  for (int n : counts) CHECK(n == doctest::Approx(200).epsilon(0.2));
}

TEST_CASE("generated dialogues carry experiment metadata") {
  auto c = fixture();
  Dialogue g = dialogue("gen-m-Exp5-0001", "a", "s1", {"hi", "yo"}, "war");
  g.source = DialogueSource::generated;
  g.experiment = ExperimentId::exp5;
  g.generator = "m";
  c = c.merged({}, {g});
  StubEmbedder emb(32);
  ItemBuildOptions opts;
  opts.disclosures = {Disclosure::both_mask};
  const auto items = build_items({c.dialogue("gen-m-Exp5-0001")}, c, emb, 1, opts);
  REQUIRE(items.size() == 2);
  CHECK(items[0].arm == "m");
  CHECK(items[0].experiment == "Exp5");
  CHECK(items[0].pairing_familiarity == "unfamiliar");
  CHECK(items[0].topic_familiarity == "familiar");
  // the synthetic interlocutor's candidates are other synthetic profiles
  for (const auto& cand : items[1].candidates) CHECK(c.profile(cand.profile_id).origin == Origin::synthetic);
}

TEST_CASE("items file round trip") {
  const auto c = fixture();
  StubEmbedder emb(32);
  const auto items = build_items(c.dialogues(), c, emb, 3);
  const auto dir = testsupport::scratch_dir("items_io");
  write_items(dir / "items.jsonl", items);
  CHECK(read_items(dir / "items.jsonl") == items);
  CHECK_THROWS_AS(read_items(dir / "none.jsonl"), MissingArtifactError);
  std::ofstream(dir / "bad.jsonl") << R"({"item_id": "x"})" << "\n";
  CHECK_THROWS_AS(read_items(dir / "bad.jsonl"), SchemaError);
}
