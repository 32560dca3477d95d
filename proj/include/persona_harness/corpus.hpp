#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "persona_harness/experiment.hpp"

namespace ph {

enum class Origin { corpus, synthetic };
enum class DialogueSource { gold, generated };

std::string to_string(Origin o);
std::string to_string(DialogueSource s);

struct SpeakerProfile {
  std::string profile_id;
  std::string name;
  std::optional<std::string> gender;
  std::optional<std::string> mbti;
  std::vector<std::string> biography;  // pre-segmented sentences
  Origin origin = Origin::corpus;
  std::optional<std::string> source_work;

  bool operator==(const SpeakerProfile&) const = default;
};

struct Turn {
  std::string speaker_ref;
  std::string text;
  std::size_t index = 0;

  bool operator==(const Turn&) const = default;
};

struct TopicLabel {
  std::string label;
  std::vector<std::string> candidates;
  bool validated = false;

  bool operator==(const TopicLabel&) const = default;
};

struct Dialogue {
  std::string dialogue_id;
  std::string speaker_a;
  std::string speaker_b;
  std::vector<Turn> turns;
  std::optional<TopicLabel> topic;
  DialogueSource source = DialogueSource::gold;
  std::optional<ExperimentId> experiment;
  std::optional<std::string> generator;

  bool operator==(const Dialogue&) const = default;
};

/// Validated profiles and dialogues. Read-only once built; safe to share
/// across threads.
class Corpus {
 public:
  Corpus() = default;

  /// Validates invariants; throws ReferentialError / ConfigError.
  Corpus(std::vector<SpeakerProfile> profiles, std::vector<Dialogue> dialogues);

  const std::vector<SpeakerProfile>& profiles() const noexcept { return profiles_; }
  const std::vector<Dialogue>& dialogues() const noexcept { return dialogues_; }

  const SpeakerProfile* find_profile(const std::string& id) const;
  const Dialogue* find_dialogue(const std::string& id) const;
  const SpeakerProfile& profile(const std::string& id) const;  // throws ReferentialError
  const Dialogue& dialogue(const std::string& id) const;       // throws ReferentialError

  /// Returns a new corpus with extra profiles/dialogues merged in (ids must stay unique).
  Corpus merged(std::vector<SpeakerProfile> profiles, std::vector<Dialogue> dialogues) const;

  bool operator==(const Corpus& other) const {
    return profiles_ == other.profiles_ && dialogues_ == other.dialogues_;
  }

 private:
  void index();

  std::vector<SpeakerProfile> profiles_;
  std::vector<Dialogue> dialogues_;
  std::unordered_map<std::string, std::size_t> profile_index_;
  std::unordered_map<std::string, std::size_t> dialogue_index_;
};

// -- record I/O (one JSON object per line) --------------------------------

std::vector<SpeakerProfile> read_profiles(std::istream& in, const std::string& source_name);
std::vector<Dialogue> read_dialogues(std::istream& in, const std::string& source_name);
std::vector<SpeakerProfile> read_profiles(const std::filesystem::path& path);
std::vector<Dialogue> read_dialogues(const std::filesystem::path& path);

void write_profiles(std::ostream& out, const std::vector<SpeakerProfile>& profiles);
void write_dialogues(std::ostream& out, const std::vector<Dialogue>& dialogues);
void write_profiles(const std::filesystem::path& path, const std::vector<SpeakerProfile>& profiles);
void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);

Corpus load_corpus(std::istream& profiles, std::istream& dialogues);
Corpus load_corpus(const std::filesystem::path& profiles, const std::filesystem::path& dialogues);
void write_corpus(const Corpus& corpus, const std::filesystem::path& profiles,
                  const std::filesystem::path& dialogues);

// -- splitting -------------------------------------------------------------

struct SplitRatio {
  double train = 0.80;
  double validation = 0.10;
  double test = 0.10;
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  SplitRatio ratio;
  std::uint64_t seed = 0;

  /// Fractions of dialogues actually placed in each set.
  SplitRatio achieved() const;
  bool operator==(const CorpusSplit& o) const {
    return train == o.train && validation == o.validation && test == o.test && seed == o.seed;
  }
};

/// Pair-disjoint split: dialogues are grouped by unordered speaker pair and
/// whole groups are assigned, largest first, to the set furthest below its
/// dialogue-count target. Equal-size groups are ordered by a seeded shuffle.
CorpusSplit split_corpus(const Corpus& corpus, SplitRatio ratio, std::uint64_t seed);

void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split);
CorpusSplit read_split_manifest(const std::filesystem::path& path);

/// Canonical key "a|b" with a < b.
std::string pair_key(const std::string& a, const std::string& b);

}  // namespace ph
