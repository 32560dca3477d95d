#pragma once

#include <string>
#include <vector>

#include "persona_harness/llm_gateway.hpp"

namespace ph {

// Offline stand-ins reachable as "mock://<name>". They read the prompts the
// harness renders, so they only make sense behind the matching stage.
//
//   copier        generation: answers with the speaker's own biography sentences
//   paraphraser   generation: generic replies in common words
//   token-judge   judge: picks the candidate sharing most content words with the
//                 visible turns; knows to discount a disclosed interlocutor
//   random-judge  judge: slot from a hash of the prompt
//   topics        topic annotation: three most frequent content words
//   profiles      synthetic profiles: a JSON profile built from the persona sentence

std::string mock_copier(const std::vector<ChatMessage>& messages);
std::string mock_paraphraser(const std::vector<ChatMessage>& messages);
std::string mock_token_judge(const std::vector<ChatMessage>& messages);
std::string mock_random_judge(const std::vector<ChatMessage>& messages);
std::string mock_topics(const std::vector<ChatMessage>& messages);
std::string mock_profiles(const std::vector<ChatMessage>& messages);

void register_mock_models(RoutingTransport& transport);

/// A routing transport with all mocks registered and real HTTP as fallback.
std::shared_ptr<RoutingTransport> make_default_transport();

}  // namespace ph
