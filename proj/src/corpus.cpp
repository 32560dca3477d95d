#include "persona_harness/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/rng.hpp"

namespace ph {

using jsonio::json;

std::string to_string(Origin o) { return o == Origin::corpus ? "corpus" : "synthetic"; }
std::string to_string(DialogueSource s) { return s == DialogueSource::gold ? "gold" : "generated"; }

std::string to_string(ExperimentId id) {
  return "Exp" + std::to_string(static_cast<int>(id) + 1);
}

std::optional<ExperimentId> parse_experiment(std::string_view s) {
  if (s.size() >= 3 && std::tolower(static_cast<unsigned char>(s[0])) == 'e' &&
      std::tolower(static_cast<unsigned char>(s[1])) == 'x' &&
      std::tolower(static_cast<unsigned char>(s[2])) == 'p') {
    s.remove_prefix(3);
  }
  if (s.size() != 1 || s[0] < '1' || s[0] > '7') return std::nullopt;
  return static_cast<ExperimentId>(s[0] - '1');
}

std::string to_string(Familiarity f) { return f == Familiarity::familiar ? "familiar" : "unfamiliar"; }
std::string to_string(TargetKind k) { return k == TargetKind::corpus_original ? "P1" : "N1"; }
std::string to_string(InterlocutorKind k) {
  switch (k) {
    case InterlocutorKind::corpus_partner: return "P2";
    case InterlocutorKind::corpus_random: return "P_rand";
    case InterlocutorKind::synthetic_random: return "N_rand";
    case InterlocutorKind::synthetic_partner: return "N2";
  }
  return "?";
}

std::string pair_key(const std::string& a, const std::string& b) {
  return a < b ? a + "|" + b : b + "|" + a;
}

// -- Corpus ----------------------------------------------------------------

namespace {

void validate_profile(const SpeakerProfile& p) {
  if (p.profile_id.empty()) throw ConfigError("profile with empty profile_id");
  if (p.biography.empty())
    throw ConfigError("profile " + p.profile_id + ": biography needs at least one sentence");
  for (const auto& s : p.biography) {
    if (s.empty()) throw ConfigError("profile " + p.profile_id + ": empty biography sentence");
  }
  if (p.origin == Origin::synthetic && p.source_work)
    throw ConfigError("profile " + p.profile_id + ": synthetic profiles carry no source_work");
}

void validate_dialogue(const Dialogue& d) {
  if (d.speaker_a == d.speaker_b)
    throw ConfigError("dialogue " + d.dialogue_id + ": speakers must be distinct");
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    if (t.index != i) throw ConfigError("dialogue " + d.dialogue_id + ": turn indices not contiguous");
    if (t.speaker_ref != d.speaker_a && t.speaker_ref != d.speaker_b)
      throw ReferentialError("dialogue " + d.dialogue_id + ": turn " + std::to_string(i) +
                             " speaker_ref '" + t.speaker_ref + "' is not one of its speakers");
    if (t.text.empty()) throw ConfigError("dialogue " + d.dialogue_id + ": empty turn text");
  }
  if (d.source == DialogueSource::generated && !d.experiment)
    throw ConfigError("dialogue " + d.dialogue_id + ": generated dialogues need an experiment");
}

}  // namespace

Corpus::Corpus(std::vector<SpeakerProfile> profiles, std::vector<Dialogue> dialogues)
    : profiles_(std::move(profiles)), dialogues_(std::move(dialogues)) {
  index();
}

void Corpus::index() {
  profile_index_.clear();
  dialogue_index_.clear();
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    validate_profile(profiles_[i]);
    if (!profile_index_.emplace(profiles_[i].profile_id, i).second)
      throw ConfigError("duplicate profile_id " + profiles_[i].profile_id);
  }
  for (std::size_t i = 0; i < dialogues_.size(); ++i) {
    const Dialogue& d = dialogues_[i];
    validate_dialogue(d);
    for (const auto* ref : {&d.speaker_a, &d.speaker_b}) {
      if (!profile_index_.contains(*ref))
        throw ReferentialError("dialogue " + d.dialogue_id + " references unknown profile '" +
                               *ref + "'");
    }
    if (!dialogue_index_.emplace(d.dialogue_id, i).second)
      throw ConfigError("duplicate dialogue_id " + d.dialogue_id);
  }
}

const SpeakerProfile* Corpus::find_profile(const std::string& id) const {
  auto it = profile_index_.find(id);
  return it == profile_index_.end() ? nullptr : &profiles_[it->second];
}

const Dialogue* Corpus::find_dialogue(const std::string& id) const {
  auto it = dialogue_index_.find(id);
  return it == dialogue_index_.end() ? nullptr : &dialogues_[it->second];
}

const SpeakerProfile& Corpus::profile(const std::string& id) const {
  if (const auto* p = find_profile(id)) return *p;
  throw ReferentialError("unknown profile '" + id + "'");
}

const Dialogue& Corpus::dialogue(const std::string& id) const {
  if (const auto* d = find_dialogue(id)) return *d;
  throw ReferentialError("unknown dialogue '" + id + "'");
}

Corpus Corpus::merged(std::vector<SpeakerProfile> profiles, std::vector<Dialogue> dialogues) const {
  auto p = profiles_;
  p.insert(p.end(), std::make_move_iterator(profiles.begin()),
           std::make_move_iterator(profiles.end()));
  auto d = dialogues_;
  d.insert(d.end(), std::make_move_iterator(dialogues.begin()),
           std::make_move_iterator(dialogues.end()));
  return Corpus(std::move(p), std::move(d));
}

// -- record parsing --------------------------------------------------------

namespace {

bool valid_mbti(const std::string& s) {
  if (s.size() != 4) return false;
  auto u = [&](std::size_t i) { return static_cast<char>(std::toupper(static_cast<unsigned char>(s[i]))); };
  return (u(0) == 'E' || u(0) == 'I') && (u(1) == 'S' || u(1) == 'N') &&
         (u(2) == 'T' || u(2) == 'F') && (u(3) == 'J' || u(3) == 'P');
}

SpeakerProfile profile_from_json(const json& r, const std::string& where) {
  SpeakerProfile p;
  p.profile_id = jsonio::require_string(r, "profile_id", where);
  if (p.profile_id.empty()) throw SchemaError(where, "profile_id", "must not be empty");
  p.name = jsonio::require_string(r, "name", where);
  p.gender = jsonio::optional_string(r, "gender", where);
  p.mbti = jsonio::optional_string(r, "mbti", where);
  if (p.mbti && !valid_mbti(*p.mbti)) throw SchemaError(where, "mbti", "not a 4-letter MBTI code");
  p.biography = jsonio::require_string_array(r, "biography", where, false);
  for (const auto& s : p.biography) {
    if (s.empty()) throw SchemaError(where, "biography", "sentences must be nonempty");
  }
  const std::string origin = jsonio::require_string(r, "origin", where);
  if (origin == "corpus") {
    p.origin = Origin::corpus;
  } else if (origin == "synthetic") {
    p.origin = Origin::synthetic;
  } else {
    throw SchemaError(where, "origin", "expected \"corpus\" or \"synthetic\"");
  }
  p.source_work = jsonio::optional_string(r, "source_work", where);
  if (p.origin == Origin::synthetic && p.source_work)
    throw SchemaError(where, "source_work", "synthetic profiles must not have a source_work");
  return p;
}

std::optional<TopicLabel> topic_from_json(const json& r, const std::string& where) {
  auto it = r.find("topic");
  if (it == r.end() || it->is_null()) return std::nullopt;
  TopicLabel t;
  if (it->is_string()) {
    t.label = it->get<std::string>();
    return t;
  }
  if (!it->is_object()) throw SchemaError(where, "topic", "expected string, object or null");
  t.label = jsonio::require_string(*it, "label", where);
  if (it->contains("candidates"))
    t.candidates = jsonio::require_string_array(*it, "candidates", where, true);
  if (auto v = it->find("validated"); v != it->end() && !v->is_null()) {
    if (!v->is_boolean()) throw SchemaError(where, "topic.validated", "expected boolean");
    t.validated = v->get<bool>();
  }
  return t;
}

Dialogue dialogue_from_json(const json& r, const std::string& where) {
  Dialogue d;
  d.dialogue_id = jsonio::require_string(r, "dialogue_id", where);
  if (d.dialogue_id.empty()) throw SchemaError(where, "dialogue_id", "must not be empty");
  d.speaker_a = jsonio::require_string(r, "speaker_a", where);
  d.speaker_b = jsonio::require_string(r, "speaker_b", where);
  if (d.speaker_a == d.speaker_b) throw SchemaError(where, "speaker_b", "must differ from speaker_a");
  const json& turns = jsonio::require_array(r, "turns", where);
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const json& t = turns[i];
    const std::string tw = where + " turn " + std::to_string(i);
    if (!t.is_object()) throw SchemaError(where, "turns", "expected objects");
    Turn turn;
    turn.speaker_ref = jsonio::require_string(t, "speaker_ref", tw);
    turn.text = jsonio::require_string(t, "text", tw);
    if (turn.text.empty()) throw SchemaError(tw, "text", "must not be empty");
    turn.index = i;
    d.turns.push_back(std::move(turn));
  }
  d.topic = topic_from_json(r, where);
  const std::string source = r.contains("source") && !r["source"].is_null()
                                 ? jsonio::require_string(r, "source", where)
                                 : "gold";
  if (source == "gold") {
    d.source = DialogueSource::gold;
  } else if (source == "generated") {
    d.source = DialogueSource::generated;
  } else {
    throw SchemaError(where, "source", "expected \"gold\" or \"generated\"");
  }
  if (auto e = jsonio::optional_string(r, "experiment", where)) {
    d.experiment = parse_experiment(*e);
    if (!d.experiment) throw SchemaError(where, "experiment", "expected Exp1..Exp7");
  }
  d.generator = jsonio::optional_string(r, "generator", where);
  if (d.source == DialogueSource::generated && !d.experiment)
    throw SchemaError(where, "experiment", "required for generated dialogues");
  return d;
}

json to_json(const SpeakerProfile& p) {
  return json{{"profile_id", p.profile_id},
              {"name", p.name},
              {"gender", jsonio::opt(p.gender)},
              {"mbti", jsonio::opt(p.mbti)},
              {"biography", p.biography},
              {"origin", to_string(p.origin)},
              {"source_work", jsonio::opt(p.source_work)}};
}

json to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) turns.push_back({{"speaker_ref", t.speaker_ref}, {"text", t.text}});
  json topic = nullptr;
  if (d.topic) {
    topic = {{"label", d.topic->label},
             {"candidates", d.topic->candidates},
             {"validated", d.topic->validated}};
  }
  return json{{"dialogue_id", d.dialogue_id},
              {"speaker_a", d.speaker_a},
              {"speaker_b", d.speaker_b},
              {"turns", std::move(turns)},
              {"topic", std::move(topic)},
              {"source", to_string(d.source)},
              {"experiment", d.experiment ? json(to_string(*d.experiment)) : json(nullptr)},
              {"generator", jsonio::opt(d.generator)}};
}

}  // namespace

std::vector<SpeakerProfile> read_profiles(std::istream& in, const std::string& source_name) {
  std::vector<SpeakerProfile> out;
  std::unordered_set<std::string> seen;
  jsonio::for_each_record(in, source_name, [&](const std::string& where, const json& r) {
    auto p = profile_from_json(r, where);
    if (!seen.insert(p.profile_id).second)
      throw SchemaError(where, "profile_id", "duplicate id '" + p.profile_id + "'");
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<Dialogue> read_dialogues(std::istream& in, const std::string& source_name) {
  std::vector<Dialogue> out;
  std::unordered_set<std::string> seen;
  jsonio::for_each_record(in, source_name, [&](const std::string& where, const json& r) {
    auto d = dialogue_from_json(r, where);
    if (!seen.insert(d.dialogue_id).second)
      throw SchemaError(where, "dialogue_id", "duplicate id '" + d.dialogue_id + "'");
    out.push_back(std::move(d));
  });
  return out;
}

std::vector<SpeakerProfile> read_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open profiles file " + path.string());
  return read_profiles(in, path.filename().string());
}

std::vector<Dialogue> read_dialogues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dialogues file " + path.string());
  return read_dialogues(in, path.filename().string());
}

void write_profiles(std::ostream& out, const std::vector<SpeakerProfile>& profiles) {
  for (const auto& p : profiles) out << to_json(p).dump() << '\n';
}

void write_dialogues(std::ostream& out, const std::vector<Dialogue>& dialogues) {
  for (const auto& d : dialogues) out << to_json(d).dump() << '\n';
}

void write_profiles(const std::filesystem::path& path, const std::vector<SpeakerProfile>& profiles) {
  std::ostringstream os;
  write_profiles(os, profiles);
  jsonio::write_text(path, os.str());
}

void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  std::ostringstream os;
  write_dialogues(os, dialogues);
  jsonio::write_text(path, os.str());
}

Corpus load_corpus(std::istream& profiles, std::istream& dialogues) {
  return Corpus(read_profiles(profiles, "profiles"), read_dialogues(dialogues, "dialogues"));
}

Corpus load_corpus(const std::filesystem::path& profiles, const std::filesystem::path& dialogues) {
  return Corpus(read_profiles(profiles), read_dialogues(dialogues));
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& profiles,
                  const std::filesystem::path& dialogues) {
  write_profiles(profiles, corpus.profiles());
  write_dialogues(dialogues, corpus.dialogues());
}

// -- splitting -------------------------------------------------------------

SplitRatio CorpusSplit::achieved() const {
  const double n = static_cast<double>(train.size() + validation.size() + test.size());
  if (n == 0) return {0, 0, 0};
  return {static_cast<double>(train.size()) / n, static_cast<double>(validation.size()) / n,
          static_cast<double>(test.size()) / n};
}

CorpusSplit split_corpus(const Corpus& corpus, SplitRatio ratio, std::uint64_t seed) {
  if (corpus.dialogues().empty()) throw ConfigError("cannot split an empty corpus");
  const double sum = ratio.train + ratio.validation + ratio.test;
  if (ratio.train < 0 || ratio.validation < 0 || ratio.test < 0 || std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratio must be non-negative and sum to 1");

  // Groups in first-appearance order, so the result does not depend on hashing.
  std::map<std::string, std::size_t> group_of;
  std::vector<std::vector<std::string>> groups;
  for (const auto& d : corpus.dialogues()) {
    auto key = pair_key(d.speaker_a, d.speaker_b);
    auto [it, inserted] = group_of.emplace(key, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(d.dialogue_id);
  }
  if (groups.size() < 3)
    throw ConfigError("corpus has " + std::to_string(groups.size()) +
                      " speaker-pair group(s); three nonempty pair-disjoint sets need at least 3");

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return groups[a].size() > groups[b].size();
  });

  const double n = static_cast<double>(corpus.dialogues().size());
  const std::array<double, 3> target = {ratio.train * n, ratio.validation * n, ratio.test * n};
  std::array<double, 3> filled = {0, 0, 0};
  std::array<std::vector<std::size_t>, 3> assigned;
  for (std::size_t g : order) {
    std::size_t best = 0;
    double best_deficit = target[0] - filled[0];
    for (std::size_t s = 1; s < 3; ++s) {
      const double deficit = target[s] - filled[s];
      if (deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    assigned[best].push_back(g);
    filled[best] += static_cast<double>(groups[g].size());
  }

  // A set with a positive target must not end up empty: move in the smallest
  // group from the set that overshoots its target the most.
  for (std::size_t s = 0; s < 3; ++s) {
    if (!assigned[s].empty() || target[s] <= 0) continue;
    std::size_t donor = 3;
    double best_surplus = -1e300;
    for (std::size_t o = 0; o < 3; ++o) {
      if (o == s || assigned[o].size() < 2) continue;
      const double surplus = filled[o] - target[o];
      if (surplus > best_surplus) {
        best_surplus = surplus;
        donor = o;
      }
    }
    if (donor == 3) throw ConfigError("not enough speaker-pair groups for a three-way split");
    auto& from = assigned[donor];
    auto smallest = std::min_element(from.begin(), from.end(), [&](std::size_t a, std::size_t b) {
      return groups[a].size() < groups[b].size();
    });
    const std::size_t g = *smallest;
    from.erase(smallest);
    filled[donor] -= static_cast<double>(groups[g].size());
    assigned[s].push_back(g);
    filled[s] += static_cast<double>(groups[g].size());
  }

  CorpusSplit split;
  split.ratio = ratio;
  split.seed = seed;
  std::array<std::vector<std::string>*, 3> sets = {&split.train, &split.validation, &split.test};
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::size_t> gs = assigned[s];
    std::sort(gs.begin(), gs.end());
    for (std::size_t g : gs) {
      sets[s]->insert(sets[s]->end(), groups[g].begin(), groups[g].end());
    }
  }
  return split;
}

void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split) {
  const auto a = split.achieved();
  json j{{"seed", split.seed},
         {"ratio", {split.ratio.train, split.ratio.validation, split.ratio.test}},
         {"achieved", {a.train, a.validation, a.test}},
         {"train", split.train},
         {"validation", split.validation},
         {"test", split.test}};
  jsonio::write_json(path, j);
}

CorpusSplit read_split_manifest(const std::filesystem::path& path) {
  const json j = jsonio::read_json(path);
  const std::string where = path.filename().string();
  CorpusSplit s;
  s.train = jsonio::require_string_array(j, "train", where, true);
  s.validation = jsonio::require_string_array(j, "validation", where, true);
  s.test = jsonio::require_string_array(j, "test", where, true);
  if (!j.contains("seed") || !j["seed"].is_number_unsigned())
    throw SchemaError(where, "seed", "expected a non-negative integer");
  s.seed = j["seed"].get<std::uint64_t>();
  if (auto it = j.find("ratio"); it != j.end() && it->is_array() && it->size() == 3) {
    s.ratio = {(*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>()};
  }
  return s;
}

}  // namespace ph
