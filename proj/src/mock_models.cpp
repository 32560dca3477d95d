#include "persona_harness/mock_models.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "persona_harness/rng.hpp"
#include "persona_harness/text.hpp"

namespace ph {

namespace {

std::string_view between(std::string_view s, std::string_view open, std::string_view close) {
  const auto a = s.find(open);
  if (a == std::string_view::npos) return {};
  const auto start = a + open.size();
  const auto b = close.empty() ? std::string_view::npos : s.find(close, start);
  return s.substr(start, b == std::string_view::npos ? std::string_view::npos : b - start);
}

const std::string& first_user(const std::vector<ChatMessage>& messages) {
  static const std::string empty;
  for (const auto& m : messages)
    if (m.role == "user") return m.content;
  return empty;
}

std::set<std::string> content_tokens(std::string_view s) {
  std::set<std::string> out;
  for (auto& t : text::alpha_tokens(s)) {
    if (t.size() > 1 && !text::is_stopword(t)) out.insert(std::move(t));
  }
  return out;
}

/// Lines after the prompt's instruction block, i.e. the dialogue history.
std::vector<std::string> history_lines(std::string_view prompt) {
  const auto marker = std::string_view("Be sure to provide the answer only.\n\n");
  const auto at = prompt.find(marker);
  if (at == std::string_view::npos) return {};
  std::vector<std::string> out;
  for (auto& l : text::split_lines(prompt.substr(at + marker.size()))) {
    if (!text::trim(l).empty()) out.push_back(l);
  }
  return out;
}

std::vector<std::string> sentences(std::string_view bio) {
  std::vector<std::string> out;
  for (auto& l : text::split_lines(bio)) {
    auto t = text::trim(l);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::string mock_copier(const std::vector<ChatMessage>& messages) {
  const auto& prompt = first_user(messages);
  const auto bio = sentences(between(prompt, "Your biography is as follows:\n\n", "\n\nYou are having a dialogue"));
  if (bio.empty()) return "I see.";
  const auto turn = history_lines(prompt).size() / 2;
  static const char* openers[] = {"Well, ", "You know, ", "Honestly, ", "Listen, "};
  return openers[turn % 4] + bio[turn % bio.size()];
}

std::string mock_paraphraser(const std::vector<ChatMessage>& messages) {
  static const std::vector<std::string> lines = {
      "I think that is a good point, and I would like to hear more about it.",
      "That is an interesting way to look at things.",
      "I am not sure I agree, but I can see why you feel that way.",
      "We should talk about this some more when we have the time.",
      "It is hard to say what the right answer is here.",
      "I have been thinking about the same thing for a long time.",
      "You might be right about that, it happens more than people think.",
      "Let me tell you what I think about all of this.",
      "I do not know, it all depends on how you look at it.",
      "That sounds like something we can work on together.",
  };
  const auto& prompt = first_user(messages);
  const auto h = splitmix64(fnv1a64(prompt));
  return lines[h % lines.size()];
}

std::string mock_token_judge(const std::vector<ChatMessage>& messages) {
  const std::string_view prompt = first_user(messages);
  std::string interlocutor_bio;
  if (prompt.rfind("You know that ", 0) == 0) {
    interlocutor_bio = text::trim(between(prompt, "is as follows:\n\n", "\n\nGiven "));
  }
  std::set<std::string> visible;
  for (const auto& line : text::split_lines(between(prompt, "DIALOGUE\n\n", "\nBIOGRAPHIES\n"))) {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    const auto body = std::string_view(line).substr(colon + 2);
    if (body == "[MASKED]") continue;
    auto toks = content_tokens(body);
    visible.insert(toks.begin(), toks.end());
  }
  const auto known_other = content_tokens(interlocutor_bio);

  const std::string_view bios = between(prompt, "\nBIOGRAPHIES\n", "");
  int best = -1;
  char best_slot = 'A';
  for (char slot : {'A', 'B', 'C'}) {
    const std::string open = std::string("Biography ") + slot + ":\n";
    const std::string close = slot == 'C' ? "" : std::string("\n\nBiography ") + static_cast<char>(slot + 1) + ":";
    const auto cand = text::trim(between(bios, open, close));
    if (!interlocutor_bio.empty() && cand == interlocutor_bio) continue;  // that one is the other speaker
    int score = 0;
    for (const auto& t : content_tokens(cand)) {
      if (visible.count(t) && !known_other.count(t)) ++score;
    }
    if (score > best) {
      best = score;
      best_slot = slot;
    }
  }
  return std::string("{\"Guess\": \"Biography ") + best_slot + "\"}";
}

std::string mock_random_judge(const std::vector<ChatMessage>& messages) {
  const auto h = splitmix64(fnv1a64(first_user(messages), 0x5eed));
  return std::string("{\"Guess\": \"Biography ") + static_cast<char>('A' + h % 3) + "\"}";
}

std::string mock_topics(const std::vector<ChatMessage>& messages) {
  const std::string_view prompt = first_user(messages);
  const auto body = between(prompt, ".\n\n", "\nList exactly three");
  std::map<std::string, int> counts;
  std::map<std::string, std::size_t> first_seen;
  for (const auto& line : text::split_lines(body)) {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    for (auto& t : text::alpha_tokens(std::string_view(line).substr(colon + 2))) {
      if (t.size() < 3 || text::is_stopword(t)) continue;
      first_seen.emplace(t, first_seen.size());
      ++counts[t];
    }
  }
  std::vector<std::string> words;
  for (const auto& [w, c] : counts) words.push_back(w);
  std::sort(words.begin(), words.end(), [&](const std::string& a, const std::string& b) {
    return counts[a] != counts[b] ? counts[a] > counts[b] : first_seen[a] < first_seen[b];
  });
  for (const char* pad : {"life", "people", "time"}) {
    if (words.size() >= 3) break;
    if (std::find(words.begin(), words.end(), pad) == words.end()) words.emplace_back(pad);
  }
  words.resize(3);
  return words[0] + "; " + words[1] + "; " + words[2];
}

std::string mock_profiles(const std::vector<ChatMessage>& messages) {
  const std::string_view prompt = first_user(messages);
  const auto persona = text::trim(between(prompt, "persona sentence:\n\n", "\n\nthe following gender"));
  const auto gender = text::trim(between(prompt, "the following gender:\n\n", "\n\nand the following mbti"));
  const auto mbti = text::trim(between(prompt, "the following mbti:\n\n", "\n\nplease create"));
  std::vector<std::string> words;
  for (auto& t : text::alpha_tokens(persona)) {
    if (t.size() > 3 && !text::is_stopword(t)) words.push_back(std::move(t));
  }
  if (words.empty()) words.emplace_back("people");
  auto w = [&](std::size_t i) { return words[i % words.size()]; };
  std::string p = persona;
  if (!p.empty()) p[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(p[0])));
  if (!p.empty() && p.back() == '.') p.pop_back();
  nlohmann::json bio = {
      "I would describe myself as " + p + ".",
      "Most of my days revolve around " + w(0) + " and " + w(1) + ".",
      "I am " + (gender.empty() ? std::string("a person") : "a " + gender) + " and people tell me I am a typical " +
          (mbti.empty() ? std::string("introvert") : mbti) + ".",
      "My family never quite understood my fascination with " + w(2) + ".",
      "I am single and I live alone with far too many books about " + w(1) + ".",
      "On weekends I talk to anyone who will listen about " + w(0) + ".",
  };
  nlohmann::json j = {{"gender", gender}, {"mbti", mbti}, {"biography", bio}};
  return j.dump();
}

void register_mock_models(RoutingTransport& t) {
  auto wrap = [](std::string (*fn)(const std::vector<ChatMessage>&)) {
    return [fn](const std::vector<ChatMessage>& m, const SamplingParams&) { return fn(m); };
  };
  t.add_model("copier", wrap(mock_copier));
  t.add_model("paraphraser", wrap(mock_paraphraser));
  t.add_model("token-judge", wrap(mock_token_judge));
  t.add_model("random-judge", wrap(mock_random_judge));
  t.add_model("topics", wrap(mock_topics));
  t.add_model("profiles", wrap(mock_profiles));
}

std::shared_ptr<RoutingTransport> make_default_transport() {
  auto t = std::make_shared<RoutingTransport>(std::make_shared<HttpTransport>());
  register_mock_models(*t);
  return t;
}

}  // namespace ph
