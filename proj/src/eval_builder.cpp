#include "persona_harness/eval_builder.hpp"

#include <algorithm>
#include <fstream>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/rng.hpp"
#include "persona_harness/text.hpp"

namespace ph {

using nlohmann::json;

std::string to_string(Disclosure d) {
  switch (d) {
    case Disclosure::both_disc: return "Both_Disc";
    case Disclosure::bio_disc: return "Bio_Disc";
    case Disclosure::turns_disc: return "Turns_Disc";
    case Disclosure::both_mask: return "Both_Mask";
  }
  return "?";
}

std::optional<Disclosure> parse_disclosure(std::string_view s) {
  for (auto d : kAllDisclosures) {
    if (text::iequals(s, to_string(d))) return d;
  }
  return std::nullopt;
}

std::string to_string(Role r) { return r == Role::target ? "target" : "interlocutor"; }

std::optional<Role> parse_role(std::string_view s) {
  if (text::iequals(s, "target")) return Role::target;
  if (text::iequals(s, "interlocutor")) return Role::interlocutor;
  return std::nullopt;
}

std::string biography_text(const SpeakerProfile& p, int cap) {
  std::vector<std::string> kept(p.biography.begin(),
                                p.biography.begin() + std::min<std::ptrdiff_t>(cap, static_cast<std::ptrdiff_t>(p.biography.size())));
  return text::join(kept, " ");
}

MaskedDialogueView apply_disclosure(const Dialogue& dialogue, const Corpus& corpus, Role role, Disclosure disclosure,
                                    int bio_cap) {
  const auto& tested = role == Role::target ? dialogue.speaker_a : dialogue.speaker_b;
  const auto& other = role == Role::target ? dialogue.speaker_b : dialogue.speaker_a;
  MaskedDialogueView view;
  for (const auto& t : dialogue.turns) {
    ViewTurn v{t.speaker_ref, corpus.profile(t.speaker_ref).name, t.text, false};
    if (t.speaker_ref != tested && hides_turns(disclosure)) {
      v.text = kMasked;
      v.masked = true;
    }
    view.turns.push_back(std::move(v));
  }
  view.bio_masked = hides_bio(disclosure);
  view.interlocutor_bio = view.bio_masked ? kMasked : biography_text(corpus.profile(other), bio_cap);
  return view;
}

std::array<std::string, 2> select_distractors(const std::string& correct_id, const std::vector<std::string>& pool,
                                              const std::map<std::string, Vector>& vectors) {
  const auto& anchor = vectors.at(correct_id);
  std::vector<std::pair<double, std::string>> scored;
  std::set<std::string> seen;
  for (const auto& id : pool) {
    if (id == correct_id || !seen.insert(id).second) continue;
    scored.emplace_back(cosine(anchor, vectors.at(id)), id);
  }
  if (scored.size() < 2) {
    throw Error("distractor pool for " + correct_id + " has " + std::to_string(scored.size()) +
                " other profiles; need at least 2");
  }
  std::partial_sort(scored.begin(), scored.begin() + 2, scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  return {scored[0].second, scored[1].second};
}

std::array<std::string, 2> select_distractors(const SpeakerProfile& correct, const std::vector<SpeakerProfile>& pool,
                                              EmbeddingProvider& provider, int bio_cap) {
  std::vector<std::string> ids, texts;
  bool has_correct = false;
  for (const auto& p : pool) {
    ids.push_back(p.profile_id);
    texts.push_back(biography_text(p, bio_cap));
    has_correct |= p.profile_id == correct.profile_id;
  }
  if (!has_correct) {
    ids.push_back(correct.profile_id);
    texts.push_back(biography_text(correct, bio_cap));
  }
  const auto vecs = embed(provider, texts);
  std::map<std::string, Vector> vectors;
  for (std::size_t i = 0; i < ids.size(); ++i) vectors.emplace(ids[i], vecs[i]);
  return select_distractors(correct.profile_id, ids, vectors);
}

// -- serialisation -------------------------------------------------------------

json to_json(const EvaluationItem& it) {
  json cands = json::array();
  for (const auto& c : it.candidates) {
    cands.push_back({{"slot", std::string(1, c.slot)}, {"profile_id", c.profile_id}, {"biography", c.biography}});
  }
  json turns = json::array();
  for (const auto& t : it.view.turns) {
    turns.push_back({{"speaker_ref", t.speaker_ref}, {"speaker_name", t.speaker_name}, {"text", t.text}, {"masked", t.masked}});
  }
  return {{"item_id", it.item_id},
          {"dialogue_id", it.dialogue_id},
          {"role_under_test", to_string(it.role)},
          {"disclosure", to_string(it.disclosure)},
          {"candidates", cands},
          {"correct_slot", std::string(1, it.correct_slot)},
          {"rendered_prompt_version", it.rendered_prompt_version},
          {"tested_profile", it.tested_profile},
          {"tested_name", it.tested_name},
          {"other_profile", it.other_profile},
          {"other_name", it.other_name},
          {"speaker_position", it.speaker_position},
          {"topic", it.topic},
          {"arm", it.arm},
          {"experiment", it.experiment},
          {"pairing_familiarity", it.pairing_familiarity},
          {"topic_familiarity", it.topic_familiarity},
          {"view", {{"turns", turns}, {"interlocutor_bio", it.view.interlocutor_bio}, {"bio_masked", it.view.bio_masked}}}};
}

namespace {

char require_slot(const json& j, const char* field, const std::string& where) {
  const auto s = jsonio::require_string(j, field, where);
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'C') throw SchemaError(where, field, "expected A, B or C");
  return s[0];
}

}  // namespace

EvaluationItem item_from_json(const json& j, const std::string& where) {
  EvaluationItem it;
  try {
    it.item_id = jsonio::require_string(j, "item_id", where);
    it.dialogue_id = jsonio::require_string(j, "dialogue_id", where);
    const auto role = parse_role(jsonio::require_string(j, "role_under_test", where));
    if (!role) throw SchemaError(where, "role_under_test", "expected target or interlocutor");
    it.role = *role;
    const auto disc = parse_disclosure(jsonio::require_string(j, "disclosure", where));
    if (!disc) throw SchemaError(where, "disclosure", "unknown disclosure");
    it.disclosure = *disc;
    const auto& cands = jsonio::require_array(j, "candidates", where);
    if (cands.size() != 3) throw SchemaError(where, "candidates", "expected 3 candidates");
    for (std::size_t i = 0; i < 3; ++i) {
      it.candidates[i] = {require_slot(cands[i], "slot", where), jsonio::require_string(cands[i], "profile_id", where),
                          jsonio::require_string(cands[i], "biography", where)};
    }
    it.correct_slot = require_slot(j, "correct_slot", where);
    it.rendered_prompt_version = j.value("rendered_prompt_version", std::string(kItemTemplateVersion));
    it.tested_profile = jsonio::require_string(j, "tested_profile", where);
    it.tested_name = jsonio::require_string(j, "tested_name", where);
    it.other_profile = jsonio::require_string(j, "other_profile", where);
    it.other_name = jsonio::require_string(j, "other_name", where);
    it.speaker_position = j.value("speaker_position", 1);
    it.topic = j.value("topic", std::string());
    it.arm = j.value("arm", std::string("gold"));
    it.experiment = j.value("experiment", std::string("gold"));
    it.pairing_familiarity = j.value("pairing_familiarity", std::string());
    it.topic_familiarity = j.value("topic_familiarity", std::string());
    const auto& view = j.at("view");
    for (const auto& t : view.at("turns")) {
      it.view.turns.push_back({t.at("speaker_ref").get<std::string>(), t.at("speaker_name").get<std::string>(),
                               t.at("text").get<std::string>(), t.value("masked", false)});
    }
    it.view.interlocutor_bio = view.at("interlocutor_bio").get<std::string>();
    it.view.bio_masked = view.value("bio_masked", false);
  } catch (const json::exception& e) {
    throw SchemaError(where, "view", e.what());
  }
  return it;
}

void write_items(const std::filesystem::path& path, const std::vector<EvaluationItem>& items) {
  std::vector<json> records;
  records.reserve(items.size());
  for (const auto& it : items) records.push_back(to_json(it));
  jsonio::write_jsonl(path, records);
}

std::vector<EvaluationItem> read_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string(), "build-items");
  std::vector<EvaluationItem> out;
  jsonio::for_each_record(in, path.filename().string(),
                          [&](const std::string& where, const json& r) { out.push_back(item_from_json(r, where)); });
  return out;
}

// -- building -----------------------------------------------------------------

std::vector<EvaluationItem> build_items(const std::vector<Dialogue>& dialogues, const Corpus& corpus,
                                        EmbeddingProvider& provider, std::uint64_t seed,
                                        const ItemBuildOptions& options) {
  // Embed every profile once; pools are the origin classes.
  std::vector<std::string> ids, texts;
  std::map<Origin, std::vector<std::string>> pools;
  for (const auto& p : corpus.profiles()) {
    ids.push_back(p.profile_id);
    texts.push_back(biography_text(p, options.bio_cap));
    pools[p.origin].push_back(p.profile_id);
  }
  const auto vecs = embed(provider, texts);
  std::map<std::string, Vector> vectors;
  for (std::size_t i = 0; i < ids.size(); ++i) vectors.emplace(ids[i], vecs[i]);

  std::vector<EvaluationItem> items;
  for (const auto& d : dialogues) {
    const bool generated = d.source == DialogueSource::generated;
    const ExperimentTag* tag = generated && d.experiment ? &experiment_tag(*d.experiment) : nullptr;
    for (Role role : {Role::target, Role::interlocutor}) {
      const auto& tested = corpus.profile(role == Role::target ? d.speaker_a : d.speaker_b);
      const auto& other = corpus.profile(role == Role::target ? d.speaker_b : d.speaker_a);
      const auto distractors = select_distractors(tested.profile_id, pools[tested.origin], vectors);
      int position = 1;
      if (!d.turns.empty() && d.turns.front().speaker_ref != tested.profile_id) position = 2;

      for (Disclosure disc : options.disclosures) {
        EvaluationItem it;
        it.dialogue_id = d.dialogue_id;
        it.role = role;
        it.disclosure = disc;
        it.item_id = d.dialogue_id + "/" + to_string(role) + "/" + to_string(disc);
        it.tested_profile = tested.profile_id;
        it.tested_name = tested.name;
        it.other_profile = other.profile_id;
        it.other_name = other.name;
        it.speaker_position = position;
        it.topic = d.topic ? d.topic->label : "";
        it.arm = generated ? d.generator.value_or("generated") : "gold";
        it.experiment = generated && d.experiment ? to_string(*d.experiment) : "gold";
        it.pairing_familiarity = to_string(tag ? tag->pairing_familiarity : Familiarity::familiar);
        it.topic_familiarity = to_string(tag ? tag->topic_familiarity : Familiarity::familiar);
        it.view = apply_disclosure(d, corpus, role, disc, options.bio_cap);

        std::vector<std::string> order = {tested.profile_id, distractors[0], distractors[1]};
        Rng rng(derive_seed(seed, it.item_id));
        rng.shuffle(order);
        for (std::size_t s = 0; s < 3; ++s) {
          const char slot = static_cast<char>('A' + s);
          it.candidates[s] = {slot, order[s], biography_text(corpus.profile(order[s]), options.bio_cap)};
          if (order[s] == tested.profile_id) it.correct_slot = slot;
        }
        items.push_back(std::move(it));
      }
    }
  }
  return items;
}

}  // namespace ph
