#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona_harness/corpus.hpp"
#include "persona_harness/eval_builder.hpp"
#include "persona_harness/generation.hpp"
#include "persona_harness/llm_gateway.hpp"
#include "persona_harness/pairing.hpp"
#include "persona_harness/topic_annotation.hpp"

namespace ph {

/// Command-line overrides applied on top of the config file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::vector<std::pair<std::string, std::string>> endpoints;  // id -> base_url
  std::optional<bool> offline;
};

struct HumanEvalSettings {
  std::set<std::string> arms{"gold", "finetuned"};
  std::size_t items = 360;
  int annotations_per_item = 3;
  int task_ttl_minutes = 30;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string admin_token_env = "PH_ADMIN_TOKEN";
};

/// Parsed run configuration. Relative paths are resolved against the
/// config file's directory.
struct RunConfig {
  nlohmann::json effective;  // the config after overrides, as hashed into the manifest
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::filesystem::path profiles_path;
  std::filesystem::path dialogues_path;
  std::optional<std::filesystem::path> personas_path;
  std::filesystem::path frequency_table;
  std::filesystem::path cache_dir;
  bool offline = false;
  int max_in_flight = 8;
  RetryPolicy retry;

  std::map<std::string, LlmEndpoint> endpoints;
  nlohmann::json embedder = {{"kind", "stub"}, {"dimension", 256}};

  SplitRatio split;

  std::string topic_endpoint;
  TopicAnnotationOptions topics;
  std::size_t validation_sample = 200;

  std::string profile_endpoint;
  std::size_t synthetic_profiles = 100;
  int profile_threads = 8;

  std::set<ExperimentId> experiments;
  PairingOptions pairing;

  std::vector<std::string> generator_arms;  // endpoint ids
  GenerationConfig generation;

  ItemBuildOptions items;
  bool include_gold = true;

  std::vector<std::string> judges;  // endpoint ids, greedy
  int judge_threads = 8;

  HumanEvalSettings human_eval;

  std::vector<std::vector<std::string>> report_slices;
  double rare_threshold = 4.0;

  const LlmEndpoint& endpoint(const std::string& id) const;  // throws ConfigError
  /// sha256 of the effective config minus execution-only settings (output
  /// and cache directories, offline mode, concurrency, retries).
  std::string config_hash() const;
};

/// Throws ConfigError for unreadable files, unknown keys or endpoints, and
/// missing seeds.
RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides = {});
RunConfig parse_run_config(nlohmann::json config, const std::filesystem::path& base_dir,
                           const RunOverrides& overrides = {});

/// "name=url" as used by --endpoint.
std::pair<std::string, std::string> parse_endpoint_override(const std::string& spec);

inline const std::vector<std::string> kStages = {"ingest",   "split",       "annotate-topics", "gen-profiles",
                                                 "plan-pairings", "generate", "build-items",  "judge",
                                                 "serve-human-eval", "report"};

/// Run-directory layout.
namespace artifacts {
inline const char* const kManifest = "manifest.json";
inline const char* const kProfiles = "corpus/profiles.jsonl";
inline const char* const kDialogues = "corpus/dialogues.jsonl";
inline const char* const kSplit = "split.json";
inline const char* const kTopicDialogues = "topics/dialogues.jsonl";
inline const char* const kTopicVocabulary = "topics/vocabulary.json";
inline const char* const kTopicValidation = "topics/validation.jsonl";
inline const char* const kSynthetic = "synthetic/profiles.jsonl";
inline const char* const kPairing = "pairing/plan.jsonl";
inline const char* const kItems = "items/items.jsonl";
inline const char* const kStudyPlan = "human/plan.json";
inline const char* const kStudyDb = "human/study.sqlite";
inline const char* const kHumanJudgments = "human/judgments.jsonl";
inline const char* const kReportText = "report/report.txt";
inline const char* const kReportMetrics = "report/metrics.json";
inline const char* const kReportOverlap = "report/overlap.json";
std::string generated(const std::string& arm);         // generated/<arm>.jsonl
std::string generation_log(const std::string& arm);    // generated/<arm>.outcomes.json
std::string judgments(const std::string& judge);       // judgments/<judge>.jsonl
}  // namespace artifacts

struct StageOptions {
  /// Replaces the default transport (mocks + HTTP), e.g. for tests.
  std::shared_ptr<ChatTransport> transport;

  std::vector<Disclosure> disclosures;      // judge: only these (empty = all)
  std::optional<std::string> only_judge;    // judge: one endpoint id
  std::optional<std::string> only_arm;      // generate: one arm
  std::vector<std::string> slice;           // report: one table grouped by these keys
  std::optional<std::filesystem::path> apply_validation;  // annotate-topics: reviewed manifest

  // serve-human-eval
  std::optional<int> port;
  std::function<void(int port, const std::string& admin_token)> on_ready;
  const std::atomic<bool>* stop = nullptr;  // polled; the server exits once it is set
  bool exit_when_complete = false;
};

struct StageResult {
  std::string stage;
  std::vector<std::string> outputs;   // run-relative paths
  std::vector<std::string> problems;  // itemized partial failures
  std::vector<std::string> notes;     // warnings that do not fail the stage
  nlohmann::json counts = nlohmann::json::object();
  std::string text;                   // human-readable summary (report tables)

  bool partial() const { return !problems.empty(); }
};

/// Runs one stage; reads prior artifacts from `cfg.out_dir` and records the
/// stage in the manifest. Missing inputs raise MissingArtifactError naming
/// the stage to run first.
StageResult run_stage(const std::string& stage, const RunConfig& cfg, const StageOptions& options = {});

/// Every batch stage in order (serve-human-eval excluded).
std::vector<StageResult> run_all(const RunConfig& cfg, const StageOptions& options = {});

}  // namespace ph
