#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona_harness/corpus.hpp"

namespace ph {

// -- unigram overlap kernels ------------------------------------------------
//
// All kernels take already-tokenized sequences (see text::alpha_tokens).
// `candidate` is the hypothesis side, `reference` the reference side.

/// Clipped unigram precision times the brevity penalty. Empty candidate -> 0.
double bleu1(std::span<const std::string> candidate, std::span<const std::string> reference);

struct Rouge1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

Rouge1 rouge1(std::span<const std::string> candidate, std::span<const std::string> reference);

struct MeteorOptions {
  bool stem_matching = true;  // false gives the exact-match-only scorer
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

/// METEOR without synonym matching ("meteor_lite").
///
/// Alignment runs in two stages, exact surface match then Porter-stem match
/// over what is left. In each stage candidate tokens are visited right to
/// left and take the right-most unaligned reference token with the same key.
/// Fmean = PR / (alpha P + (1 - alpha) R). Fragmentation is normalised so a
/// single contiguous chunk costs nothing: frag = (chunks - 1) / (matches - 1),
/// penalty = gamma * frag^beta.
double meteor_lite(std::span<const std::string> candidate, std::span<const std::string> reference,
                   const MeteorOptions& options = {});

// Integer-id forms used by the string overloads. Equal ids mean equal tokens.
double bleu1_ids(std::span<const std::uint32_t> candidate, std::span<const std::uint32_t> reference);
Rouge1 rouge1_ids(std::span<const std::uint32_t> candidate, std::span<const std::uint32_t> reference);

/// Integer-id form of meteor_lite used by the string overload: word ids
/// identify surface forms, stem ids identify stems (same length as words).
double meteor_lite_ids(std::span<const std::uint32_t> cand_words,
                       std::span<const std::uint32_t> cand_stems,
                       std::span<const std::uint32_t> ref_words,
                       std::span<const std::uint32_t> ref_stems, const MeteorOptions& options = {});

// -- word frequency ---------------------------------------------------------

/// word -> Zipf value (log10 of frequency per billion words).
class FrequencyTable {
 public:
  FrequencyTable() = default;
  FrequencyTable(std::unordered_map<std::string, double> zipf, std::string source_id);

  /// Reads "word<TAB>zipf" lines; '#' starts a comment line.
  static FrequencyTable load(const std::filesystem::path& path);

  /// Case-insensitive. Words missing from the table have Zipf 0.
  double zipf(std::string_view word) const;
  const std::string& source_id() const noexcept { return source_id_; }
  std::size_t size() const noexcept { return zipf_.size(); }

 private:
  std::unordered_map<std::string, double> zipf_;
  std::string source_id_;
};

/// Distinct lowercase alphabetic tokens of `text` whose Zipf value is below `threshold`.
std::set<std::string> rare_words(std::string_view text, const FrequencyTable& table,
                                 double threshold = 4.0);

struct RareWordOverlap {
  bool flag = false;
  std::set<std::string> shared;
};

/// Rare biography words that also occur among the speaker's turn tokens.
RareWordOverlap rare_word_overlap(std::string_view biography, std::string_view turns,
                                  const FrequencyTable& table, double threshold = 4.0);

// -- per-dialogue overlap report ---------------------------------------------

struct SpeakerOverlap {
  std::string dialogue_id;
  std::string profile_id;
  bool is_target = false;  // first speaker of the dialogue
  std::string arm;         // generator id, or "gold"
  std::string experiment;  // "Exp1".., or "gold"
  bool rare_word_flag = false;
  std::vector<std::string> rare_words_shared;
  double meteor = 0;
  double bleu1 = 0;
  double rouge1 = 0;
};

struct OverlapAggregate {
  std::string arm;
  std::string experiment;
  std::size_t dialogues = 0;
  double rare_word_pct = 0;  // % of dialogues whose target speaker shares a rare word
  double meteor = 0;         // means over all speaker entries
  double bleu1 = 0;
  double rouge1 = 0;
};

struct OverlapReport {
  std::vector<SpeakerOverlap> entries;
  std::vector<OverlapAggregate> aggregates;  // sorted by (arm, experiment); "*" = all experiments
  double threshold = 4.0;
};

/// For every dialogue and speaker, compares the speaker's capped biography
/// (reference) with the concatenation of that speaker's turns (candidate).
OverlapReport overlap_report(const std::vector<Dialogue>& dialogues, const Corpus& profiles,
                             const FrequencyTable& table, double threshold = 4.0,
                             int biography_cap = 5);

std::string format_overlap_tables(const OverlapReport& report);
nlohmann::json to_json(const OverlapReport& report);

}  // namespace ph
