#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona_harness/corpus.hpp"
#include "persona_harness/embedding.hpp"

namespace ph {

inline constexpr const char* kMasked = "[MASKED]";
inline constexpr const char* kItemTemplateVersion = "items-v1";

enum class Disclosure { both_disc, bio_disc, turns_disc, both_mask };
inline constexpr std::array<Disclosure, 4> kAllDisclosures = {Disclosure::both_disc, Disclosure::bio_disc,
                                                              Disclosure::turns_disc, Disclosure::both_mask};

std::string to_string(Disclosure d);                           // "Both_Disc", ...
std::optional<Disclosure> parse_disclosure(std::string_view s);  // case-insensitive

constexpr bool hides_turns(Disclosure d) { return d == Disclosure::bio_disc || d == Disclosure::both_mask; }
constexpr bool hides_bio(Disclosure d) { return d == Disclosure::turns_disc || d == Disclosure::both_mask; }

/// Which dialogue speaker is being identified: the target is speaker_a.
enum class Role { target, interlocutor };
std::string to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

struct ViewTurn {
  std::string speaker_ref;
  std::string speaker_name;
  std::string text;  // verbatim, or "[MASKED]"
  bool masked = false;

  bool operator==(const ViewTurn&) const = default;
};

/// What an evaluator sees. "Interlocutor" here is the speaker who is not
/// under test.
struct MaskedDialogueView {
  std::vector<ViewTurn> turns;
  std::string interlocutor_bio;  // capped biography, or "[MASKED]"
  bool bio_masked = false;

  bool operator==(const MaskedDialogueView&) const = default;
};

/// Capped biography joined with single spaces.
std::string biography_text(const SpeakerProfile& p, int cap = 5);

MaskedDialogueView apply_disclosure(const Dialogue& dialogue, const Corpus& corpus, Role role,
                                    Disclosure disclosure, int bio_cap = 5);

/// The two pool members most cosine-similar to `correct_id` (ties: smaller
/// profile_id first). `vectors` maps profile_id to embedding and must cover
/// the pool. Throws Error when fewer than two other members exist.
std::array<std::string, 2> select_distractors(const std::string& correct_id, const std::vector<std::string>& pool,
                                              const std::map<std::string, Vector>& vectors);

/// Convenience form: embeds the capped biographies of `pool` with `provider`.
std::array<std::string, 2> select_distractors(const SpeakerProfile& correct,
                                              const std::vector<SpeakerProfile>& pool,
                                              EmbeddingProvider& provider, int bio_cap = 5);

struct Candidate {
  char slot = 'A';
  std::string profile_id;
  std::string biography;

  bool operator==(const Candidate&) const = default;
};

struct EvaluationItem {
  std::string item_id;  // "<dialogue_id>/<role>/<disclosure>"
  std::string dialogue_id;
  Role role = Role::target;
  Disclosure disclosure = Disclosure::both_disc;
  std::array<Candidate, 3> candidates;
  char correct_slot = 'A';
  std::string rendered_prompt_version = kItemTemplateVersion;

  std::string tested_profile;
  std::string tested_name;
  std::string other_profile;
  std::string other_name;
  int speaker_position = 1;  // 1 if the tested speaker opens the dialogue
  std::string topic;
  std::string arm;         // "gold" or generator id
  std::string experiment;  // "Exp1".. or "gold"
  std::string pairing_familiarity;  // "familiar" / "unfamiliar"
  std::string topic_familiarity;
  MaskedDialogueView view;

  bool operator==(const EvaluationItem&) const = default;
};

nlohmann::json to_json(const EvaluationItem& item);
EvaluationItem item_from_json(const nlohmann::json& j, const std::string& where);
void write_items(const std::filesystem::path& path, const std::vector<EvaluationItem>& items);
std::vector<EvaluationItem> read_items(const std::filesystem::path& path);

struct ItemBuildOptions {
  std::vector<Disclosure> disclosures{kAllDisclosures.begin(), kAllDisclosures.end()};
  int bio_cap = 5;
};

/// Two items (target, interlocutor) per dialogue and disclosure. Distractors
/// come from the tested speaker's origin class and are shared across
/// disclosures; slot order is shuffled per item from (seed, item_id).
std::vector<EvaluationItem> build_items(const std::vector<Dialogue>& dialogues, const Corpus& corpus,
                                        EmbeddingProvider& provider, std::uint64_t seed,
                                        const ItemBuildOptions& options = {});

}  // namespace ph
