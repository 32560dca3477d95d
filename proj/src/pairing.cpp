#include "persona_harness/pairing.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/parallel.hpp"
#include "persona_harness/rng.hpp"
#include "persona_harness/text.hpp"
#include "persona_harness/topic_annotation.hpp"

namespace ph {

using nlohmann::json;

const std::vector<std::string> kMbtiTypes = {"ISTJ", "ISFJ", "INFJ", "INTJ", "ISTP", "ISFP", "INFP", "INTP",
                                             "ESTP", "ESFP", "ENFP", "ENTP", "ESTJ", "ESFJ", "ENFJ", "ENTJ"};

std::size_t PairingPlan::count(ExperimentId id) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const PairingEntry& e) { return e.experiment == id; }));
}

std::map<std::string, std::set<std::string>> attested_topics(const Corpus& corpus) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& d : corpus.dialogues()) {
    if (d.source != DialogueSource::gold || !d.topic || d.topic->label == kOtherLabel) continue;
    out[d.speaker_a].insert(d.topic->label);
    out[d.speaker_b].insert(d.topic->label);
  }
  return out;
}

bool familiar_pair(const SpeakerProfile& a, const SpeakerProfile& b) {
  if (a.origin == Origin::synthetic || b.origin == Origin::synthetic) {
    return a.origin == b.origin;
  }
  return a.source_work && b.source_work && *a.source_work == *b.source_work;
}

namespace {

std::string entry_id(ExperimentId id, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%04zu", n);
  return to_string(id) + buf;
}

}  // namespace

PairingPlan build_pairing_plan(const Corpus& corpus, const std::vector<std::string>& test_dialogue_ids,
                               const std::set<ExperimentId>& experiments, std::uint64_t seed,
                               const PairingOptions& options) {
  PairingPlan plan;
  plan.seed = seed;

  std::vector<std::string> synthetic;
  std::map<std::string, std::vector<std::string>> by_work;  // corpus profiles per work
  for (const auto& p : corpus.profiles()) {
    if (p.origin == Origin::synthetic) {
      synthetic.push_back(p.profile_id);
    } else {
      by_work[p.source_work.value_or("")].push_back(p.profile_id);
    }
  }
  std::sort(synthetic.begin(), synthetic.end());

  for (auto exp : experiments) {
    if (needs_synthetic_profiles(exp) && synthetic.empty()) {
      throw ConfigError(to_string(exp) + " needs synthetic profiles; run `ph gen-profiles` first");
    }
    if (exp == ExperimentId::exp7 && synthetic.size() < 2) {
      throw ConfigError("Exp7 needs at least two synthetic profiles");
    }
    const auto& tag = experiment_tag(exp);
    if (tag.interlocutor_kind == InterlocutorKind::corpus_random && by_work.size() < 2) {
      throw ConfigError(to_string(exp) + " pairs characters across works, but the corpus has a single work");
    }
  }

  std::vector<const Dialogue*> seeds;
  for (const auto& id : test_dialogue_ids) {
    const auto& d = corpus.dialogue(id);
    if (d.source == DialogueSource::gold && d.topic && d.topic->label != kOtherLabel) seeds.push_back(&d);
  }
  std::sort(seeds.begin(), seeds.end(),
            [](const Dialogue* a, const Dialogue* b) { return a->dialogue_id < b->dialogue_id; });

  const auto attested = attested_topics(corpus);
  std::set<std::string> label_set;
  for (const auto& [pid, labels] : attested) label_set.insert(labels.begin(), labels.end());
  const std::vector<std::string> all_labels(label_set.begin(), label_set.end());

  auto unfamiliar_topic = [&](const std::string& target, Rng& rng) -> std::optional<std::string> {
    std::vector<std::string> pool;
    const auto it = attested.find(target);
    for (const auto& l : all_labels) {
      if (it == attested.end() || !it->second.count(l)) pool.push_back(l);
    }
    if (pool.empty()) return std::nullopt;
    return rng.pick(pool);
  };

  for (auto exp : experiments) {
    const auto& tag = experiment_tag(exp);
    Rng rng(derive_seed(seed, "pairing/" + to_string(exp)));
    std::size_t made = 0;

    if (tag.target_kind == TargetKind::synthetic_new) {
      const std::size_t want = seeds.empty() ? options.entries_per_experiment
                                             : std::min(options.entries_per_experiment, seeds.size());
      if (all_labels.empty()) throw ConfigError(to_string(exp) + ": no topic labels in the corpus");
      while (made < want) {
        PairingEntry e;
        e.experiment = exp;
        e.target = rng.pick(synthetic);
        do {
          e.interlocutor = rng.pick(synthetic);
        } while (e.interlocutor == e.target);
        e.topic = rng.pick(all_labels);
        e.entry_id = entry_id(exp, ++made);
        plan.entries.push_back(std::move(e));
      }
      continue;
    }

    if (seeds.empty()) {
      throw ConfigError(to_string(exp) + ": the test split has no topic-labelled gold dialogues");
    }
    const std::size_t want = std::min(options.entries_per_experiment, seeds.size());
    auto order = seeds;
    rng.shuffle(order);
    std::size_t skipped = 0;
    for (const auto* d : order) {
      if (made >= want) break;
      PairingEntry e;
      e.experiment = exp;
      e.seed_dialogue = d->dialogue_id;
      e.target = d->speaker_a;
      const auto& target = corpus.profile(e.target);

      switch (tag.interlocutor_kind) {
        case InterlocutorKind::corpus_partner:
          e.interlocutor = d->speaker_b;
          break;
        case InterlocutorKind::corpus_random: {
          std::vector<std::string> pool;
          for (const auto& [work, ids] : by_work) {
            if (target.source_work && work == *target.source_work) continue;
            pool.insert(pool.end(), ids.begin(), ids.end());
          }
          e.interlocutor = rng.pick(pool);
          break;
        }
        case InterlocutorKind::synthetic_random:
        case InterlocutorKind::synthetic_partner:
          e.interlocutor = rng.pick(synthetic);
          break;
      }

      if (tag.topic_familiarity == Familiarity::familiar) {
        e.topic = d->topic->label;
      } else {
        auto t = unfamiliar_topic(e.target, rng);
        if (!t) {
          ++skipped;
          continue;
        }
        e.topic = *t;
      }
      e.entry_id = entry_id(exp, ++made);
      plan.entries.push_back(std::move(e));
    }
    if (made < options.entries_per_experiment) {
      plan.warnings.push_back(to_string(exp) + ": " + std::to_string(made) + " of " +
                              std::to_string(options.entries_per_experiment) + " entries (" +
                              std::to_string(seeds.size()) + " usable test dialogues, " + std::to_string(skipped) +
                              " without an unfamiliar topic)");
    }
  }
  return plan;
}

void write_pairing_plan(const std::filesystem::path& path, const PairingPlan& plan) {
  std::vector<json> records;
  for (const auto& e : plan.entries) {
    records.push_back({{"entry_id", e.entry_id},
                       {"experiment", to_string(e.experiment)},
                       {"target", e.target},
                       {"interlocutor", e.interlocutor},
                       {"topic", e.topic},
                       {"seed_dialogue", e.seed_dialogue},
                       {"plan_seed", plan.seed}});
  }
  jsonio::write_jsonl(path, records);
}

PairingPlan read_pairing_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string(), "plan-pairings");
  PairingPlan plan;
  jsonio::for_each_record(in, path.filename().string(), [&](const std::string& where, const json& r) {
    PairingEntry e;
    e.entry_id = jsonio::require_string(r, "entry_id", where);
    const auto exp = parse_experiment(jsonio::require_string(r, "experiment", where));
    if (!exp) throw SchemaError(where, "experiment", "unknown experiment");
    e.experiment = *exp;
    e.target = jsonio::require_string(r, "target", where);
    e.interlocutor = jsonio::require_string(r, "interlocutor", where);
    e.topic = jsonio::require_string(r, "topic", where);
    e.seed_dialogue = jsonio::optional_string(r, "seed_dialogue", where).value_or("");
    plan.seed = r.value("plan_seed", std::uint64_t{0});
    plan.entries.push_back(std::move(e));
  });
  return plan;
}

// -- synthetic personas ------------------------------------------------------

std::vector<ChatMessage> render_profile_prompt(const std::string& persona, const std::string& gender,
                                               const std::string& mbti) {
  std::string p = "Considering the following persona sentence:\n\n" + persona +
                  "\n\nthe following gender:\n\n" + gender + "\n\nand the following mbti:\n\n" + mbti +
                  "\n\nplease create a profile of a person, using the following structure:\n\n"
                  "{\"gender\": \"gender\", \"mbti\": \"mbti\", \"biography\": [\"sentence 1\", \"sentence 2\", "
                  "\"...\", \"sentence 10\"]}\n\n"
                  "Please ensure the biography contains up to 10 sentences in the first person singular. Include "
                  "details about the individual’s job, relationship status, lifestyle, and family background. "
                  "Be sure to capture a varied portrayal of the individual's life and character.\n\n"
                  "Please ensure to provide the dictionary only, without anything else.";
  return {{"user", p}};
}

namespace {

std::optional<std::vector<std::string>> parse_biography(const std::string& reply) {
  const auto obj = jsonio::first_json_object(reply);
  if (!obj || !obj->contains("biography") || !(*obj)["biography"].is_array()) return std::nullopt;
  std::vector<std::string> bio;
  for (const auto& s : (*obj)["biography"]) {
    if (!s.is_string()) return std::nullopt;
    auto t = text::trim(s.get<std::string>());
    if (!t.empty()) bio.push_back(std::move(t));
  }
  if (bio.empty()) return std::nullopt;
  return bio;
}

}  // namespace

SyntheticProfiles generate_synthetic_profiles(const std::vector<std::string>& persona_sentences,
                                              LlmGateway& gateway, const LlmEndpoint& endpoint,
                                              std::uint64_t seed, int threads) {
  SyntheticProfiles out;
  out.requested = persona_sentences.size();
  const auto n = persona_sentences.size();
  std::vector<std::optional<SpeakerProfile>> made(n);
  std::vector<std::string> notes(n), failed(n);
  parallel_for(n, threads, [&](std::size_t i) {
    char id[16];
    std::snprintf(id, sizeof id, "syn-%03zu", i + 1);
    Rng rng(derive_seed(seed, std::string("profile/") + id));
    const std::string gender = rng.index(2) == 0 ? "male" : "female";
    const std::string mbti = rng.pick(kMbtiTypes);
    auto messages = render_profile_prompt(persona_sentences[i], gender, mbti);
    std::optional<std::vector<std::string>> bio;
    try {
      for (int attempt = 0; attempt < 2 && !bio; ++attempt) {
        const ChatOptions opts{kProfileTemplateVersion, attempt == 0 ? "" : "retry"};
        bio = parse_biography(gateway.chat(endpoint, messages, opts));
      }
    } catch (const TransportError& e) {
      failed[i] = std::string(id) + ": " + e.what() + "; skipped";
      return;
    }
    if (!bio) {
      failed[i] = std::string(id) + ": unparseable reply after a retry; skipped";
      return;
    }
    if (bio->size() > kSyntheticBiographyCap) {
      notes[i] = std::string(id) + ": biography had " + std::to_string(bio->size()) + " sentences; kept the first " +
                 std::to_string(kSyntheticBiographyCap);
      bio->resize(kSyntheticBiographyCap);
    }
    SpeakerProfile p;
    p.profile_id = id;
    p.name = "Person " + std::string(id + 4);
    p.gender = gender;
    p.mbti = mbti;
    p.biography = std::move(*bio);
    p.origin = Origin::synthetic;
    made[i] = std::move(p);
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!notes[i].empty()) out.warnings.push_back(notes[i]);
    if (!failed[i].empty()) out.skipped.push_back(failed[i]);
    if (made[i]) out.profiles.push_back(std::move(*made[i]));
  }
  return out;
}

std::vector<std::string> sample_personas(const std::vector<std::string>& sentences, std::size_t n,
                                         std::uint64_t seed) {
  auto pool = sentences;
  Rng rng(derive_seed(seed, "personas"));
  rng.shuffle(pool);
  pool.resize(std::min(n, pool.size()));
  return pool;
}

}  // namespace ph
