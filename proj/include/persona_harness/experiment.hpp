#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace ph {

enum class ExperimentId { exp1, exp2, exp3, exp4, exp5, exp6, exp7 };

enum class TargetKind { corpus_original, synthetic_new };            // P1 / N1
enum class InterlocutorKind { corpus_partner, corpus_random, synthetic_random, synthetic_partner };  // P2 / P_rand / N_rand / N2
enum class Familiarity { familiar, unfamiliar };

struct ExperimentTag {
  ExperimentId id;
  TargetKind target_kind;
  InterlocutorKind interlocutor_kind;
  Familiarity topic_familiarity;
  Familiarity pairing_familiarity;
};

/// The seven speaker-pairing / topic configurations.
inline constexpr std::array<ExperimentTag, 7> kExperiments = {{
    {ExperimentId::exp1, TargetKind::corpus_original, InterlocutorKind::corpus_partner,
     Familiarity::familiar, Familiarity::familiar},
    {ExperimentId::exp2, TargetKind::corpus_original, InterlocutorKind::corpus_partner,
     Familiarity::unfamiliar, Familiarity::familiar},
    {ExperimentId::exp3, TargetKind::corpus_original, InterlocutorKind::corpus_random,
     Familiarity::familiar, Familiarity::unfamiliar},
    {ExperimentId::exp4, TargetKind::corpus_original, InterlocutorKind::corpus_random,
     Familiarity::unfamiliar, Familiarity::unfamiliar},
    {ExperimentId::exp5, TargetKind::corpus_original, InterlocutorKind::synthetic_random,
     Familiarity::familiar, Familiarity::unfamiliar},
    {ExperimentId::exp6, TargetKind::corpus_original, InterlocutorKind::synthetic_random,
     Familiarity::unfamiliar, Familiarity::unfamiliar},
    {ExperimentId::exp7, TargetKind::synthetic_new, InterlocutorKind::synthetic_partner,
     Familiarity::unfamiliar, Familiarity::familiar},
}};

constexpr const ExperimentTag& experiment_tag(ExperimentId id) {
  return kExperiments[static_cast<std::size_t>(id)];
}

constexpr bool needs_synthetic_profiles(ExperimentId id) {
  const auto& t = experiment_tag(id);
  return t.target_kind == TargetKind::synthetic_new ||
         t.interlocutor_kind == InterlocutorKind::synthetic_random ||
         t.interlocutor_kind == InterlocutorKind::synthetic_partner;
}

std::string to_string(ExperimentId id);                           // "Exp1".."Exp7"
std::optional<ExperimentId> parse_experiment(std::string_view s);  // accepts "Exp3" / "exp3" / "3"
std::string to_string(Familiarity f);                              // "familiar" / "unfamiliar"
std::string to_string(TargetKind k);                               // "P1" / "N1"
std::string to_string(InterlocutorKind k);                         // "P2" / "P_rand" / "N_rand" / "N2"

}  // namespace ph
