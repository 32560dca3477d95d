#include "persona_harness/topic_annotation.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/parallel.hpp"
#include "persona_harness/rng.hpp"
#include "persona_harness/text.hpp"

namespace ph {

using nlohmann::json;

std::vector<ChatMessage> render_topic_prompt(const Dialogue& dialogue, const Corpus& corpus,
                                             bool with_reminder) {
  std::string lines;
  for (const auto& t : dialogue.turns) {
    lines += corpus.profile(t.speaker_ref).name + ": " + t.text + "\n";
  }
  std::string prompt = "Read the following dialogue between " + corpus.profile(dialogue.speaker_a).name +
                       " and " + corpus.profile(dialogue.speaker_b).name + ".\n\n" + lines +
                       "\nList exactly three short topics (one to three words each) that this dialogue is "
                       "about. Reply with the three topics separated by semicolons and nothing else.";
  if (with_reminder) {
    prompt += "\n\nYour previous reply did not contain exactly three topics. Reply with exactly three "
              "topics separated by semicolons.";
  }
  return {{"user", prompt}};
}

std::vector<std::string> parse_topics(std::string_view reply) {
  char sep = ',';
  if (reply.find(';') != std::string_view::npos) {
    sep = ';';
  } else if (text::trim(reply).find('\n') != std::string::npos) {
    sep = '\n';
  }
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= reply.size()) {
    auto end = reply.find(sep, start);
    if (end == std::string_view::npos) end = reply.size();
    std::string piece = text::trim(reply.substr(start, end - start));
    // list markers: "1.", "2)", "-", "*"
    std::size_t i = 0;
    while (i < piece.size() && std::isdigit(static_cast<unsigned char>(piece[i]))) ++i;
    if (i > 0 && i < piece.size() && (piece[i] == '.' || piece[i] == ')')) piece = piece.substr(i + 1);
    if (!piece.empty() && (piece[0] == '-' || piece[0] == '*')) piece = piece.substr(1);
    piece = text::trim(piece);
    while (!piece.empty() && std::string_view("\"'.`").find(piece.back()) != std::string_view::npos) piece.pop_back();
    while (!piece.empty() && std::string_view("\"'`").find(piece.front()) != std::string_view::npos) piece.erase(0, 1);
    piece = text::trim(piece);
    if (!piece.empty()) out.push_back(piece);
    start = end + 1;
  }
  return out;
}

CandidateTopics generate_candidate_topics(const Dialogue& dialogue, const Corpus& corpus, LlmGateway& gateway,
                                          const LlmEndpoint& endpoint) {
  if (dialogue.turns.empty()) throw Error(dialogue.dialogue_id + ": cannot annotate a dialogue without turns");
  const ChatOptions opts{kTopicTemplateVersion, dialogue.dialogue_id};
  CandidateTopics out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    out.reply = gateway.chat(endpoint, render_topic_prompt(dialogue, corpus, attempt > 0), opts);
    if (text::looks_like_refusal(out.reply)) {
      out.excluded = true;
      out.topics.clear();
      return out;
    }
    out.topics = parse_topics(out.reply);
    if (out.topics.size() == 3) return out;
  }
  throw Error(dialogue.dialogue_id + ": expected 3 topics, got " + std::to_string(out.topics.size()) +
              " after a retry: " + out.reply);
}

std::map<std::string, int> extract_stems(const std::vector<std::string>& topics) {
  std::map<std::string, int> out;
  for (const auto& t : topics) {
    for (const auto& tok : text::alpha_tokens(t)) {
      if (text::is_stopword(tok)) continue;
      ++out[text::porter_stem(tok)];
    }
  }
  return out;
}

std::vector<StemCount> select_top_stems(const std::map<std::string, int>& stems, std::size_t k) {
  std::vector<StemCount> all;
  all.reserve(stems.size());
  for (const auto& [s, c] : stems) all.push_back({s, c});
  const auto n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const StemCount& a, const StemCount& b) {
                      return a.count != b.count ? a.count > b.count : a.stem < b.stem;
                    });
  all.resize(n);
  return all;
}

int ClusterVocabulary::frequency(const std::string& cluster) const {
  const auto it = clusters.find(cluster);
  if (it == clusters.end()) return 0;
  int total = 0;
  for (const auto& sc : stems) {
    if (it->second.count(sc.stem)) total += sc.count;
  }
  return total;
}

ClusterVocabulary apply_cluster_mapping(std::istream& mapping, const std::vector<StemCount>& stems,
                                        std::vector<std::string>& warnings) {
  ClusterVocabulary vocab;
  vocab.stems = stems;
  std::set<std::string> known;
  for (const auto& s : stems) known.insert(s.stem);
  std::map<std::string, std::string> owner;
  std::string line;
  int lineno = 0;
  while (std::getline(mapping, line)) {
    ++lineno;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto colon = trimmed.find(':');
    if (colon == std::string::npos) {
      warnings.push_back("mapping line " + std::to_string(lineno) + ": no ':'; ignored");
      continue;
    }
    const auto name = text::trim(std::string_view(trimmed).substr(0, colon));
    if (name.empty()) {
      warnings.push_back("mapping line " + std::to_string(lineno) + ": empty cluster name; ignored");
      continue;
    }
    std::string_view rest = std::string_view(trimmed).substr(colon + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      auto end = rest.find(',', start);
      if (end == std::string_view::npos) end = rest.size();
      const auto stem = text::to_lower(text::trim(rest.substr(start, end - start)));
      start = end + 1;
      if (stem.empty()) continue;
      if (!known.count(stem)) {
        warnings.push_back("mapping line " + std::to_string(lineno) + ": unknown stem '" + stem + "' ignored");
        continue;
      }
      if (auto it = owner.find(stem); it != owner.end() && it->second != name) {
        warnings.push_back("mapping line " + std::to_string(lineno) + ": stem '" + stem +
                           "' already in cluster '" + it->second + "'; ignored");
        continue;
      }
      owner[stem] = name;
      vocab.clusters[name].insert(stem);
    }
  }
  return vocab;
}

ClusterVocabulary cluster_by_embedding(const std::vector<StemCount>& stems, EmbeddingProvider& embedder,
                                       double cutoff) {
  ClusterVocabulary vocab;
  vocab.stems = stems;
  if (stems.empty()) return vocab;
  std::vector<std::string> texts;
  for (const auto& s : stems) texts.push_back(s.stem);
  const auto vectors = embed(embedder, texts);
  const auto n = stems.size();
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sim[i][j] = sim[j][i] = cosine(vectors[i], vectors[j]);

  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
  auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double total = 0;
    for (auto i : a)
      for (auto j : b) total += sim[i][j];
    return total / static_cast<double>(a.size() * b.size());
  };
  while (groups.size() > 1) {
    double best = -2;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < groups.size(); ++i)
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        const double s = linkage(groups[i], groups[j]);
        if (s > best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    if (best < cutoff) break;
    groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  for (const auto& g : groups) {
    // stems are ranked, so the smallest index is the most frequent stem
    const auto head = *std::min_element(g.begin(), g.end());
    auto& members = vocab.clusters[stems[head].stem];
    for (auto i : g) members.insert(stems[i].stem);
  }
  return vocab;
}

ClusterVocabulary cluster_stems(const std::vector<StemCount>& stems,
                                const std::optional<std::filesystem::path>& mapping_file,
                                EmbeddingProvider& embedder, double cutoff, std::vector<std::string>& warnings) {
  if (mapping_file) {
    std::ifstream in(*mapping_file);
    if (!in) throw ConfigError("cannot open cluster mapping " + mapping_file->string());
    return apply_cluster_mapping(in, stems, warnings);
  }
  return cluster_by_embedding(stems, embedder, cutoff);
}

std::string assign_cluster_label(const std::vector<std::string>& candidates, const ClusterVocabulary& vocab) {
  const auto stems = extract_stems(candidates);
  std::string best = kOtherLabel;
  int best_hits = 0;
  int best_freq = -1;
  for (const auto& [name, members] : vocab.clusters) {
    int hits = 0;
    for (const auto& [stem, count] : stems) {
      if (members.count(stem)) hits += count;
    }
    if (hits == 0) continue;
    const int freq = vocab.frequency(name);
    // clusters iterate in name order, so strict comparisons keep the smaller name on full ties
    if (hits > best_hits || (hits == best_hits && freq > best_freq)) {
      best = name;
      best_hits = hits;
      best_freq = freq;
    }
  }
  return best;
}

std::vector<std::string> sample_for_validation(const std::vector<std::string>& dialogue_ids, std::size_t n,
                                               std::uint64_t seed) {
  std::vector<std::string> pool = dialogue_ids;
  Rng rng(derive_seed(seed, "validation-sample"));
  rng.shuffle(pool);
  pool.resize(std::min(n, pool.size()));
  return pool;
}

void write_validation_manifest(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues,
                               const std::vector<std::string>& sample_ids) {
  std::map<std::string, const Dialogue*> by_id;
  for (const auto& d : dialogues) by_id[d.dialogue_id] = &d;
  std::vector<json> records;
  for (const auto& id : sample_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end() || !it->second->topic) continue;
    const auto& t = *it->second->topic;
    records.push_back({{"dialogue_id", id}, {"candidates", t.candidates}, {"label", t.label}, {"validated", t.validated}});
  }
  jsonio::write_jsonl(path, records);
}

std::size_t apply_validation_manifest(const std::filesystem::path& path, std::vector<Dialogue>& dialogues) {
  std::map<std::string, Dialogue*> by_id;
  for (auto& d : dialogues) by_id[d.dialogue_id] = &d;
  std::size_t updated = 0;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open validation manifest " + path.string());
  jsonio::for_each_record(in, path.filename().string(), [&](const std::string& where, const json& r) {
    const auto id = jsonio::require_string(r, "dialogue_id", where);
    const auto label = jsonio::require_string(r, "label", where);
    if (!r.value("validated", false)) return;
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ReferentialError(where + ": unknown dialogue '" + id + "'");
    auto& d = *it->second;
    if (!d.topic) d.topic = TopicLabel{};
    d.topic->label = label;
    d.topic->validated = true;
    ++updated;
  });
  return updated;
}

void write_cluster_vocabulary(const std::filesystem::path& path, const ClusterVocabulary& vocab) {
  json stems = json::array();
  for (const auto& s : vocab.stems) stems.push_back({{"stem", s.stem}, {"count", s.count}});
  json clusters = json::object();
  for (const auto& [name, members] : vocab.clusters) clusters[name] = members;
  jsonio::write_json(path, {{"stems", stems}, {"clusters", clusters}});
}

ClusterVocabulary read_cluster_vocabulary(const std::filesystem::path& path) {
  const auto j = jsonio::read_json(path);
  ClusterVocabulary v;
  try {
    for (const auto& s : j.at("stems")) v.stems.push_back({s.at("stem").get<std::string>(), s.at("count").get<int>()});
    for (const auto& [name, members] : j.at("clusters").items())
      v.clusters[name] = members.get<std::set<std::string>>();
  } catch (const json::exception& e) {
    throw SchemaError(path.string(), "clusters", e.what());
  }
  return v;
}

TopicAnnotationResult annotate_topics(const Corpus& corpus, const std::vector<std::string>& dialogue_ids,
                                      LlmGateway& gateway, const LlmEndpoint& endpoint,
                                      EmbeddingProvider& embedder, const TopicAnnotationOptions& options) {
  TopicAnnotationResult result;
  const auto n = dialogue_ids.size();
  std::vector<CandidateTopics> candidates(n);
  std::vector<std::string> errors(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    try {
      candidates[i] = generate_candidate_topics(corpus.dialogue(dialogue_ids[i]), corpus, gateway, endpoint);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::vector<std::string> all_topics;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty() || candidates[i].excluded) continue;
    all_topics.insert(all_topics.end(), candidates[i].topics.begin(), candidates[i].topics.end());
  }
  const auto top = select_top_stems(extract_stems(all_topics), options.top_k);
  result.vocabulary = cluster_stems(top, options.mapping_file, embedder, options.cluster_cutoff, result.warnings);

  for (std::size_t i = 0; i < n; ++i) {
    Dialogue d = corpus.dialogue(dialogue_ids[i]);
    if (!errors[i].empty()) {
      result.failed.push_back(d.dialogue_id);
      result.warnings.push_back(errors[i]);
      d.topic.reset();
    } else if (candidates[i].excluded) {
      result.excluded.push_back(d.dialogue_id);
      d.topic.reset();
    } else {
      d.topic = TopicLabel{assign_cluster_label(candidates[i].topics, result.vocabulary), candidates[i].topics, false};
    }
    result.dialogues.push_back(std::move(d));
  }
  return result;
}

}  // namespace ph
