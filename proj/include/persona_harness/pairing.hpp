#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "persona_harness/corpus.hpp"
#include "persona_harness/experiment.hpp"
#include "persona_harness/llm_gateway.hpp"

namespace ph {

struct PairingEntry {
  std::string entry_id;  // "Exp3-0007"
  ExperimentId experiment = ExperimentId::exp1;
  std::string target;
  std::string interlocutor;
  std::string topic;
  std::string seed_dialogue;  // gold dialogue the entry was derived from; empty for Exp7

  bool operator==(const PairingEntry&) const = default;
};

struct PairingPlan {
  std::vector<PairingEntry> entries;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;  // shortfalls, skipped entries

  std::size_t count(ExperimentId id) const;
};

struct PairingOptions {
  /// Entries per experiment, capped by the number of usable test dialogues.
  /// 7 x 625 = 4375.
  std::size_t entries_per_experiment = 625;
};

/// Labels of gold dialogues involving each profile ("other" excluded).
std::map<std::string, std::set<std::string>> attested_topics(const Corpus& corpus);

/// True when both profiles come from the same work or are both synthetic.
bool familiar_pair(const SpeakerProfile& a, const SpeakerProfile& b);

/// Builds entries for the requested experiments from the test split's gold
/// dialogues (which must carry topic labels). `corpus` must also contain the
/// synthetic profiles when Exp5-Exp7 are requested.
PairingPlan build_pairing_plan(const Corpus& corpus, const std::vector<std::string>& test_dialogue_ids,
                               const std::set<ExperimentId>& experiments, std::uint64_t seed,
                               const PairingOptions& options = {});

void write_pairing_plan(const std::filesystem::path& path, const PairingPlan& plan);
PairingPlan read_pairing_plan(const std::filesystem::path& path);

// -- synthetic personas ------------------------------------------------------

inline constexpr const char* kProfileTemplateVersion = "profiles-v1";
inline constexpr std::size_t kSyntheticBiographyCap = 10;

extern const std::vector<std::string> kMbtiTypes;  // the 16 four-letter types

std::vector<ChatMessage> render_profile_prompt(const std::string& persona, const std::string& gender,
                                               const std::string& mbti);

struct SyntheticProfiles {
  std::vector<SpeakerProfile> profiles;
  std::size_t requested = 0;
  std::vector<std::string> warnings;  // e.g. truncated biographies
  std::vector<std::string> skipped;   // personas that produced no profile
};

/// One profile per persona sentence ("syn-001", ...). Gender (male/female)
/// and MBTI are drawn per sentence from the seed. Unparseable replies get one
/// retry and are then skipped, as are
/// personas whose requests fail.
SyntheticProfiles generate_synthetic_profiles(const std::vector<std::string>& persona_sentences,
                                              LlmGateway& gateway, const LlmEndpoint& endpoint,
                                              std::uint64_t seed, int threads = 8);

/// Seeded sample of `n` sentences (all of them when n >= size), in sampled order.
std::vector<std::string> sample_personas(const std::vector<std::string>& sentences, std::size_t n,
                                         std::uint64_t seed);

}  // namespace ph
