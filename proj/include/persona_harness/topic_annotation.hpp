#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "persona_harness/corpus.hpp"
#include "persona_harness/embedding.hpp"
#include "persona_harness/llm_gateway.hpp"

namespace ph {

inline constexpr const char* kTopicTemplateVersion = "topics-v1";
inline constexpr const char* kOtherLabel = "other";

std::vector<ChatMessage> render_topic_prompt(const Dialogue& dialogue, const Corpus& corpus,
                                             bool with_reminder = false);

/// Splits a reply on semicolons (else newlines, else commas) and strips list
/// markers, quotes and trailing punctuation. Empty pieces are dropped.
std::vector<std::string> parse_topics(std::string_view reply);

struct CandidateTopics {
  std::vector<std::string> topics;  // exactly 3 unless excluded
  bool excluded = false;            // the model declined
  std::string reply;                // last raw reply
};

/// Asks for three topics; a reply with a different count is retried once
/// with a reminder, then raises Error. A refusal marks the dialogue excluded.
CandidateTopics generate_candidate_topics(const Dialogue& dialogue, const Corpus& corpus,
                                          LlmGateway& gateway, const LlmEndpoint& endpoint);

/// Multiset of Porter stems over the alphabetic tokens of all strings.
/// Function words ("the", "of", ...) are dropped.
std::map<std::string, int> extract_stems(const std::vector<std::string>& topics);

struct StemCount {
  std::string stem;
  int count = 0;

  bool operator==(const StemCount&) const = default;
};

/// Top-k by descending count, ties lexicographic.
std::vector<StemCount> select_top_stems(const std::map<std::string, int>& stems, std::size_t k = 100);

struct ClusterVocabulary {
  std::vector<StemCount> stems;                               // ranked
  std::map<std::string, std::set<std::string>> clusters;      // name -> stems

  /// Sum of the ranked counts of a cluster's stems.
  int frequency(const std::string& cluster) const;
};

/// Applies "name: stem, stem, ..." lines ('#' comments, blank lines ok).
/// Stems outside `stems` or already claimed by an earlier cluster are
/// ignored with a warning.
ClusterVocabulary apply_cluster_mapping(std::istream& mapping, const std::vector<StemCount>& stems,
                                        std::vector<std::string>& warnings);

/// Average-linkage agglomerative clustering of the stems' embeddings; merges
/// while the best pair's mean cosine is >= cutoff. Each cluster is named by
/// its most frequent stem.
ClusterVocabulary cluster_by_embedding(const std::vector<StemCount>& stems, EmbeddingProvider& embedder,
                                       double cutoff);

/// Mapping file when given, embedding clustering otherwise.
ClusterVocabulary cluster_stems(const std::vector<StemCount>& stems,
                                const std::optional<std::filesystem::path>& mapping_file,
                                EmbeddingProvider& embedder, double cutoff,
                                std::vector<std::string>& warnings);

/// Cluster with the most candidate-stem hits (counting repeats); ties go to
/// the cluster with higher frequency, then the smaller name. No hit -> "other".
std::string assign_cluster_label(const std::vector<std::string>& candidates, const ClusterVocabulary& vocab);

/// Seeded uniform sample without replacement, returned in sampled order.
std::vector<std::string> sample_for_validation(const std::vector<std::string>& dialogue_ids, std::size_t n,
                                               std::uint64_t seed);

/// Editable manifest: one {dialogue_id, candidates, label, validated} per line.
void write_validation_manifest(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues,
                               const std::vector<std::string>& sample_ids);

/// Copies reviewed labels back; records with "validated": true set the
/// label and the validated flag. Returns the number of dialogues updated.
std::size_t apply_validation_manifest(const std::filesystem::path& path, std::vector<Dialogue>& dialogues);

void write_cluster_vocabulary(const std::filesystem::path& path, const ClusterVocabulary& vocab);
ClusterVocabulary read_cluster_vocabulary(const std::filesystem::path& path);

struct TopicAnnotationOptions {
  std::size_t top_k = 100;
  std::optional<std::filesystem::path> mapping_file;
  double cluster_cutoff = 0.5;
  int threads = 8;
};

struct TopicAnnotationResult {
  std::vector<Dialogue> dialogues;        // input order; annotated ones carry a TopicLabel
  std::vector<std::string> excluded;      // refusals
  std::vector<std::string> failed;        // wrong topic count after the retry, or transport errors
  ClusterVocabulary vocabulary;
  std::vector<std::string> warnings;
};

/// Algorithm: candidates per dialogue, stems, top-k, clusters, labels.
TopicAnnotationResult annotate_topics(const Corpus& corpus, const std::vector<std::string>& dialogue_ids,
                                      LlmGateway& gateway, const LlmEndpoint& endpoint,
                                      EmbeddingProvider& embedder, const TopicAnnotationOptions& options = {});

}  // namespace ph
