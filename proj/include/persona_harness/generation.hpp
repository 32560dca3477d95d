#pragma once

#include <optional>
#include <string>
#include <vector>

#include "persona_harness/corpus.hpp"
#include "persona_harness/llm_gateway.hpp"
#include "persona_harness/pairing.hpp"

namespace ph {

inline constexpr const char* kGenerationTemplateVersion = "generation-v1";

struct GenerationConfig {
  int turns_total = 8;  // both speakers together
  int biography_sentence_cap = 5;
  bool target_first = true;
  std::string prompt_template_version = kGenerationTemplateVersion;
  int threads = 8;

  void validate() const;  // throws ConfigError
};

/// The next-turn prompt for `self` answering `other`. `history` holds the
/// accepted turns so far (speaker_ref is one of the two profile ids).
std::vector<ChatMessage> render_generation_prompt(const SpeakerProfile& self, const SpeakerProfile& other,
                                                  const std::string& topic, const std::vector<Turn>& history,
                                                  const GenerationConfig& config);

/// Trims and removes a leading "Name:" echo of either speaker.
std::string clean_reply(std::string_view reply, const std::vector<std::string>& names);

enum class GenerationStatus { ok, failed, excluded };

struct GenerationOutcome {
  std::string entry_id;
  GenerationStatus status = GenerationStatus::ok;
  std::optional<Dialogue> dialogue;
  std::string message;
};

/// "gen-<generator>-<entry_id>"
std::string generated_dialogue_id(const std::string& generator, const std::string& entry_id);

GenerationOutcome generate_dialogue(const PairingEntry& entry, const Corpus& corpus, LlmGateway& gateway,
                                    const LlmEndpoint& endpoint, const GenerationConfig& config);

struct GenerationRun {
  std::vector<Dialogue> dialogues;            // plan order
  std::vector<GenerationOutcome> problems;    // failed or excluded entries
};

GenerationRun generate_all(const PairingPlan& plan, const Corpus& corpus, LlmGateway& gateway,
                           const LlmEndpoint& endpoint, const GenerationConfig& config);

}  // namespace ph
