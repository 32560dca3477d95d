#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <condition_variable>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona_harness/eval_builder.hpp"
#include "persona_harness/judge.hpp"

struct sqlite3;

namespace ph {

/// Annotator instructions shown with every task.
extern const char* const kAnnotatorGuidelines;

struct StudyPlan {
  std::vector<std::string> item_ids;
  int annotations_per_item = 3;
  std::map<std::string, std::size_t> allocation;  // stratum "<experiment>|<disclosure>" -> items
  std::uint64_t seed = 0;
};

std::string stratum_of(const EvaluationItem& item);

/// Items whose arm is in `arms` (all items when `arms` is empty).
std::vector<EvaluationItem> filter_items_by_arm(const std::vector<EvaluationItem>& items,
                                                const std::set<std::string>& arms);

/// Largest-remainder allocation of `n_total` in proportion to `stratum_sizes`;
/// equal remainders go to the smaller stratum key.
std::map<std::string, std::size_t> allocate_proportional(const std::map<std::string, std::size_t>& stratum_sizes,
                                                         std::size_t n_total);

/// Stratified by (experiment, disclosure), seeded sample inside each stratum.
/// Throws ConfigError when n_total exceeds the available items.
StudyPlan build_study_plan(const std::vector<EvaluationItem>& items, std::size_t n_total, std::uint64_t seed,
                           int annotations_per_item = 3);

void write_study_plan(const std::filesystem::path& path, const StudyPlan& plan);
StudyPlan read_study_plan(const std::filesystem::path& path);

enum class TaskState { assigned, submitted, expired };
std::string to_string(TaskState s);

struct AnnotationTask {
  std::int64_t task_id = 0;
  std::string item_id;
  std::string annotator_id;
  TaskState state = TaskState::assigned;
  std::int64_t assigned_at_ms = 0;
  std::int64_t expires_at_ms = 0;
  std::optional<char> submitted_choice;
  std::string comment;
};

/// What an annotator is shown: no profile ids, no answer, masked text withheld.
nlohmann::json task_payload(const AnnotationTask& task, const EvaluationItem& item);

struct StudyOptions {
  std::chrono::milliseconds task_ttl{std::chrono::minutes(30)};
  std::function<std::int64_t()> now_ms;  // defaults to the system clock
};

enum class SubmitStatus { ok, not_found, bad_request, expired, conflict };

struct SubmitResult {
  SubmitStatus status = SubmitStatus::ok;
  std::optional<Judgment> judgment;
  std::string message;
};

struct StratumProgress {
  std::size_t items = 0;
  std::size_t completed_items = 0;
  std::size_t judgments = 0;
  std::size_t target_judgments = 0;
  std::size_t in_flight = 0;
};

/// Assignment and submission state in SQLite, plus an append-only JSONL log
/// of submitted judgments. All methods are thread-safe; state changes run in
/// one transaction each.
class StudyService {
 public:
  StudyService(const std::filesystem::path& db_path, const std::filesystem::path& judgment_log,
               StudyOptions options = {});
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  /// Stores the plan's items; loading the same plan again is a no-op, a
  /// different plan into a non-empty study is a ConfigError.
  void load_plan(const StudyPlan& plan, const std::vector<EvaluationItem>& items);

  /// Returns {annotator_id, token}.
  std::pair<std::string, std::string> register_annotator();
  std::optional<std::string> annotator_for_token(const std::string& token);

  /// The annotator's live task if it has one, else a fresh assignment, else
  /// nothing (no eligible item).
  std::optional<AnnotationTask> next_task(const std::string& annotator_id);

  SubmitResult submit_judgment(std::int64_t task_id, const std::string& annotator_id, const std::string& choice,
                               const std::string& comment);

  std::map<std::string, StratumProgress> progress();
  std::vector<Judgment> judgments();
  const EvaluationItem& item(const std::string& item_id) const;

 private:
  std::int64_t now() const;
  void expire_stale(std::int64_t now);

  sqlite3* db_ = nullptr;
  std::filesystem::path judgment_log_;
  StudyOptions options_;
  std::map<std::string, EvaluationItem> items_;
  std::mutex mutex_;
};

/// HTTP front end:
///   POST /annotators               admin token  -> 201 {annotator_id, token}
///   GET  /tasks/next               annotator    -> 200 task payload | 204
///   POST /tasks/{id}/judgment      annotator    -> 200 | 400 | 404 | 409 | 410
///   GET  /progress                 admin token  -> 200 per-stratum counts
/// Tokens travel as "Authorization: Bearer <token>".
class HumanEvalServer {
 public:
  HumanEvalServer(StudyService& service, std::string admin_token);
  ~HumanEvalServer();

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ph
