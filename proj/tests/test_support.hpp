#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "persona_harness/corpus.hpp"
#include "persona_harness/embedding.hpp"
#include "persona_harness/llm_gateway.hpp"
#include "persona_harness/pipeline.hpp"
#include "persona_harness/rng.hpp"

namespace testsupport {

inline ph::SpeakerProfile profile(const std::string& id, const std::string& work,
                                  std::vector<std::string> bio, const std::string& name = "") {
  ph::SpeakerProfile p;
  p.profile_id = id;
  p.name = name.empty() ? id : name;
  p.biography = std::move(bio);
  if (work.empty()) {
    p.origin = ph::Origin::synthetic;
  } else {
    p.origin = ph::Origin::corpus;
    p.source_work = work;
  }
  return p;
}

inline ph::Dialogue dialogue(const std::string& id, const std::string& a, const std::string& b,
                             const std::vector<std::string>& texts,
                             const std::string& topic = "") {
  ph::Dialogue d;
  d.dialogue_id = id;
  d.speaker_a = a;
  d.speaker_b = b;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    d.turns.push_back({i % 2 == 0 ? a : b, texts[i], i});
  }
  if (!topic.empty()) d.topic = ph::TopicLabel{topic, {}, false};
  return d;
}

/// A scratch directory under the system temp dir, wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ph_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Random corpus: `groups` speaker pairs spread over a few works, each pair
/// with 1..max_group_size dialogues.
inline ph::Corpus random_corpus(std::uint64_t seed, std::size_t groups, std::size_t max_group_size) {
  ph::Rng rng(seed);
  std::vector<ph::SpeakerProfile> profiles;
  std::vector<ph::Dialogue> dialogues;
  const std::size_t speakers = groups + 3;
  for (std::size_t s = 0; s < speakers; ++s) {
    profiles.push_back(profile("s" + std::to_string(s), "work" + std::to_string(s % 5),
                               {"Sentence about speaker " + std::to_string(s) + "."}));
  }
  std::size_t made = 0;
  std::size_t next_id = 0;
  // pairs (i, i+k) are distinct for distinct (i,k) with k < speakers.
  for (std::size_t k = 1; made < groups; ++k) {
    for (std::size_t i = 0; i + k < speakers && made < groups; ++i) {
      const std::size_t n = 1 + rng.index(max_group_size);
      for (std::size_t r = 0; r < n; ++r) {
        const bool flip = rng.index(2) == 1;
        const auto a = "s" + std::to_string(flip ? i + k : i);
        const auto b = "s" + std::to_string(flip ? i : i + k);
        dialogues.push_back(dialogue("d" + std::to_string(next_id++), a, b, {"hi", "hello"}));
      }
      ++made;
    }
  }
  return ph::Corpus(std::move(profiles), std::move(dialogues));
}

/// Fixed vectors per text; unknown texts are a test bug and throw.
class TableEmbedder : public ph::EmbeddingProvider {
 public:
  explicit TableEmbedder(std::map<std::string, ph::Vector> table) : table_(std::move(table)) {}
  std::string id() const override { return "table"; }
  std::vector<ph::Vector> embed_batch(const std::vector<std::string>& texts) override {
    std::vector<ph::Vector> out;
    for (const auto& t : texts) {
      const auto it = table_.find(t);
      if (it == table_.end()) throw std::out_of_range("TableEmbedder: no vector for '" + t + "'");
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::map<std::string, ph::Vector> table_;
};

/// Gateway over a single in-process model registered as "mock://<name>".
struct MockRig {
  std::shared_ptr<ph::RoutingTransport> transport = std::make_shared<ph::RoutingTransport>();
  ph::LlmEndpoint endpoint;
  std::unique_ptr<ph::LlmGateway> gateway;

  MockRig(const std::string& name,
          std::function<std::string(const std::vector<ph::ChatMessage>&)> model,
          ph::DecodingMode mode = ph::DecodingMode::sampling) {
    transport->add_model(name, [model](const std::vector<ph::ChatMessage>& m, const ph::SamplingParams&) {
      return model(m);
    });
    endpoint.id = name;
    endpoint.base_url = "mock://" + name;
    endpoint.model = name;
    endpoint.mode = mode;
    gateway = std::make_unique<ph::LlmGateway>(transport);
  }
};

#ifdef PH_SOURCE_DIR
inline std::filesystem::path fixture_dir() { return std::filesystem::path(PH_SOURCE_DIR) / "data" / "fixtures"; }

/// The fixture run config, writing into `out`.
inline ph::RunConfig fixture_config(const std::filesystem::path& out, ph::RunOverrides ov = {}) {
  ov.out_dir = out;
  return ph::load_run_config(fixture_dir() / "config.json", ov);
}
#endif

}  // namespace testsupport
