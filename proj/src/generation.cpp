#include "persona_harness/generation.hpp"

#include "persona_harness/errors.hpp"
#include "persona_harness/parallel.hpp"
#include "persona_harness/text.hpp"

namespace ph {

void GenerationConfig::validate() const {
  if (turns_total <= 0 || turns_total % 2 != 0) throw ConfigError("turns_total must be a positive even number");
  if (biography_sentence_cap < 1) throw ConfigError("biography_sentence_cap must be at least 1");
}

namespace {

std::string capped_bio(const SpeakerProfile& p, int cap) {
  std::vector<std::string> kept;
  for (const auto& s : p.biography) {
    if (static_cast<int>(kept.size()) >= cap) break;
    kept.push_back(s);
  }
  if (kept.empty()) throw Error(p.profile_id + ": empty biography");
  return text::join(kept, "\n");
}

}  // namespace

std::vector<ChatMessage> render_generation_prompt(const SpeakerProfile& self, const SpeakerProfile& other,
                                                  const std::string& topic, const std::vector<Turn>& history,
                                                  const GenerationConfig& config) {
  std::string p = "You are " + self.name + ". Your biography is as follows:\n\n" +
                  capped_bio(self, config.biography_sentence_cap) + "\n\nYou are having a dialogue with " +
                  other.name + ". Their biography is as follows:\n\n" +
                  capped_bio(other, config.biography_sentence_cap) + "\n\nYou are discussing about the topic " +
                  topic + ". Considering the dialogue history, provide an answer to " + other.name +
                  ". Be sure to provide the answer only.\n\n";
  for (const auto& t : history) {
    const auto& name = t.speaker_ref == self.profile_id ? self.name : other.name;
    p += name + ": " + t.text + "\n";
  }
  return {{"user", p}};
}

std::string clean_reply(std::string_view reply, const std::vector<std::string>& names) {
  std::string out = text::trim(reply);
  for (const auto& name : names) {
    if (name.empty()) continue;
    if (text::istarts_with(out, name) && out.size() > name.size() && out[name.size()] == ':') {
      out = text::trim(std::string_view(out).substr(name.size() + 1));
      break;
    }
  }
  return out;
}

std::string generated_dialogue_id(const std::string& generator, const std::string& entry_id) {
  return "gen-" + generator + "-" + entry_id;
}

GenerationOutcome generate_dialogue(const PairingEntry& entry, const Corpus& corpus, LlmGateway& gateway,
                                    const LlmEndpoint& endpoint, const GenerationConfig& config) {
  config.validate();
  GenerationOutcome out;
  out.entry_id = entry.entry_id;
  const auto& target = corpus.profile(entry.target);
  const auto& partner = corpus.profile(entry.interlocutor);
  if (target.profile_id == partner.profile_id) throw Error(entry.entry_id + ": speaker paired with itself");

  Dialogue d;
  d.dialogue_id = generated_dialogue_id(endpoint.id, entry.entry_id);
  d.speaker_a = target.profile_id;
  d.speaker_b = partner.profile_id;
  d.topic = TopicLabel{entry.topic, {}, false};
  d.source = DialogueSource::generated;
  d.experiment = entry.experiment;
  d.generator = endpoint.id;

  const std::vector<std::string> names = {target.name, partner.name};
  for (int i = 0; i < config.turns_total; ++i) {
    const bool target_turn = (i % 2 == 0) == config.target_first;
    const auto& self = target_turn ? target : partner;
    const auto& other = target_turn ? partner : target;
    const auto messages = render_generation_prompt(self, other, entry.topic, d.turns, config);
    std::string reply;
    for (int attempt = 0; attempt < 2 && reply.empty(); ++attempt) {
      const ChatOptions opts{config.prompt_template_version, d.dialogue_id + (attempt ? "/retry" : "")};
      const auto raw = gateway.chat(endpoint, messages, opts);
      if (text::looks_like_refusal(raw)) {
        out.status = GenerationStatus::excluded;
        out.message = "refusal at turn " + std::to_string(i);
        return out;
      }
      reply = clean_reply(raw, names);
    }
    if (reply.empty()) {
      out.status = GenerationStatus::failed;
      out.message = "empty reply at turn " + std::to_string(i) + " after a retry";
      return out;
    }
    d.turns.push_back({self.profile_id, std::move(reply), static_cast<std::size_t>(i)});
  }
  out.dialogue = std::move(d);
  return out;
}

GenerationRun generate_all(const PairingPlan& plan, const Corpus& corpus, LlmGateway& gateway,
                           const LlmEndpoint& endpoint, const GenerationConfig& config) {
  config.validate();
  std::vector<GenerationOutcome> outcomes(plan.entries.size());
  parallel_for(plan.entries.size(), config.threads, [&](std::size_t i) {
    try {
      outcomes[i] = generate_dialogue(plan.entries[i], corpus, gateway, endpoint, config);
    } catch (const TransportError& e) {
      outcomes[i].entry_id = plan.entries[i].entry_id;
      outcomes[i].status = GenerationStatus::failed;
      outcomes[i].message = e.what();
    }
  });
  GenerationRun run;
  for (auto& o : outcomes) {
    if (o.status == GenerationStatus::ok) {
      run.dialogues.push_back(std::move(*o.dialogue));
    } else {
      run.problems.push_back(std::move(o));
    }
  }
  return run;
}

}  // namespace ph
