#include "persona_harness/human_eval.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/llm_gateway.hpp"
#include "persona_harness/rng.hpp"

namespace ph {

using nlohmann::json;

const char* const kAnnotatorGuidelines =
    "You will be presented with a series of dialogues between two speakers.\n\n"
    "For each dialogue your task is to guess the correct biography (Profile) of one of the two speakers.\n\n"
    "There are 3 possible Profiles to choose among (shown at the end of the dialogue as \"Profile A\", "
    "\"Profile B\", or \"Profile C\"). Please make your guess even though the dialogue may sound a little weird "
    "or unnatural. You will also have the possibility to leave any comment you deem relevant about each "
    "dialogue/task in the “comments” field.\n\n"
    "IMPORTANT: for each dialogue we have different configurations where we either disclose or hide some of the "
    "interlocutor’s information:\n\n"
    "- We will either provide or not interlocutor profile, in the latter case we use the tag [MASKED]\n"
    "- We will either show or mask other speakers’ turns in the dialogue.";

// -- study plan ------------------------------------------------------------------

std::string stratum_of(const EvaluationItem& item) { return item.experiment + "|" + to_string(item.disclosure); }

std::vector<EvaluationItem> filter_items_by_arm(const std::vector<EvaluationItem>& items,
                                                const std::set<std::string>& arms) {
  if (arms.empty()) return items;
  std::vector<EvaluationItem> out;
  for (const auto& it : items) {
    if (arms.count(it.arm)) out.push_back(it);
  }
  return out;
}

std::map<std::string, std::size_t> allocate_proportional(const std::map<std::string, std::size_t>& sizes,
                                                         std::size_t n_total) {
  std::size_t total = 0;
  for (const auto& [k, s] : sizes) total += s;
  if (n_total > total) {
    throw ConfigError("study plan asks for " + std::to_string(n_total) + " items but only " + std::to_string(total) +
                      " are available");
  }
  std::map<std::string, std::size_t> alloc;
  if (total == 0) return alloc;
  std::vector<std::pair<std::size_t, std::string>> remainders;  // exact integer remainders
  std::size_t given = 0;
  for (const auto& [k, s] : sizes) {
    const auto num = n_total * s;
    alloc[k] = num / total;
    given += num / total;
    remainders.emplace_back(num % total, k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });  // keys already ascending
  for (std::size_t i = 0; given < n_total; ++i, ++given) ++alloc[remainders[i].second];
  return alloc;
}

StudyPlan build_study_plan(const std::vector<EvaluationItem>& items, std::size_t n_total, std::uint64_t seed,
                           int annotations_per_item) {
  std::map<std::string, std::vector<std::string>> strata;
  for (const auto& it : items) strata[stratum_of(it)].push_back(it.item_id);
  std::map<std::string, std::size_t> sizes;
  for (auto& [k, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    sizes[k] = ids.size();
  }
  StudyPlan plan;
  plan.seed = seed;
  plan.annotations_per_item = annotations_per_item;
  plan.allocation = allocate_proportional(sizes, n_total);
  for (auto& [k, ids] : strata) {
    Rng rng(derive_seed(seed, "study/" + k));
    rng.shuffle(ids);
    const auto take = plan.allocation[k];
    plan.item_ids.insert(plan.item_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return plan;
}

void write_study_plan(const std::filesystem::path& path, const StudyPlan& plan) {
  jsonio::write_json(path, {{"item_ids", plan.item_ids},
                            {"annotations_per_item", plan.annotations_per_item},
                            {"allocation", plan.allocation},
                            {"seed", plan.seed}});
}

StudyPlan read_study_plan(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError(path.string(), "serve-human-eval");
  const auto j = jsonio::read_json(path);
  StudyPlan p;
  try {
    p.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    p.annotations_per_item = j.at("annotations_per_item").get<int>();
    p.allocation = j.at("allocation").get<std::map<std::string, std::size_t>>();
    p.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw SchemaError(path.string(), "study plan", e.what());
  }
  return p;
}

std::string to_string(TaskState s) {
  switch (s) {
    case TaskState::assigned: return "assigned";
    case TaskState::submitted: return "submitted";
    case TaskState::expired: return "expired";
  }
  return "?";
}

json task_payload(const AnnotationTask& task, const EvaluationItem& item) {
  json turns = json::array();
  for (const auto& t : item.view.turns) {
    turns.push_back({{"speaker", t.speaker_name}, {"text", t.text}, {"masked", t.masked}});
  }
  json cands = json::array();
  for (const auto& c : item.candidates) cands.push_back({{"label", std::string(1, c.slot)}, {"biography", c.biography}});
  return {{"task_id", task.task_id},
          {"expires_at_ms", task.expires_at_ms},
          {"disclosure", to_string(item.disclosure)},
          {"topic", item.topic},
          {"speaker_under_test", item.tested_name},
          {"interlocutor", item.other_name},
          {"interlocutor_bio", item.view.interlocutor_bio},
          {"interlocutor_bio_masked", item.view.bio_masked},
          {"turns", turns},
          {"candidates", cands},
          {"guidelines", kAnnotatorGuidelines}};
}

// -- sqlite plumbing ---------------------------------------------------------------

namespace {

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(std::string("sqlite prepare: ") + sqlite3_errmsg(db) + " in: " + sql);
    }
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  /// true while a row is available
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }
  std::int64_t integer(int col) { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::string text(int col) {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error("sqlite: " + msg + " in: " + sql);
  }
}

/// BEGIN IMMEDIATE ... COMMIT, rolled back on exception.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

std::string random_token() {
  std::random_device rd;
  std::string raw;
  for (int i = 0; i < 8; ++i) {
    const auto v = rd();
    raw.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  return sha256_hex(raw).substr(0, 40);
}

const char* kSchema = R"(
CREATE TABLE IF NOT EXISTS meta(key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS items(
  seq INTEGER PRIMARY KEY,
  item_id TEXT UNIQUE NOT NULL,
  dialogue_id TEXT NOT NULL,
  stratum TEXT NOT NULL,
  needed INTEGER NOT NULL,
  taken INTEGER NOT NULL DEFAULT 0,
  payload TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS annotators(annotator_id TEXT PRIMARY KEY, token TEXT UNIQUE NOT NULL);
CREATE TABLE IF NOT EXISTS tasks(
  task_id INTEGER PRIMARY KEY AUTOINCREMENT,
  item_id TEXT NOT NULL,
  annotator_id TEXT NOT NULL,
  dialogue_id TEXT NOT NULL,
  state TEXT NOT NULL,
  assigned_at INTEGER NOT NULL,
  expires_at INTEGER NOT NULL,
  choice TEXT,
  comment TEXT,
  UNIQUE(annotator_id, dialogue_id));
CREATE INDEX IF NOT EXISTS tasks_item ON tasks(item_id);
CREATE INDEX IF NOT EXISTS tasks_state ON tasks(state, expires_at);
)";

}  // namespace

// -- service ------------------------------------------------------------------------

StudyService::StudyService(const std::filesystem::path& db_path, const std::filesystem::path& judgment_log,
                           StudyOptions options)
    : judgment_log_(judgment_log), options_(std::move(options)) {
  if (!options_.now_ms) {
    options_.now_ms = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  if (sqlite3_open_v2(db_path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw ConfigError("cannot open study database " + db_path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA journal_mode=WAL");
  exec(db_, "PRAGMA synchronous=NORMAL");
  exec(db_, kSchema);
  Stmt s(db_, "SELECT payload FROM items ORDER BY seq");
  while (s.step()) {
    auto item = item_from_json(json::parse(s.text(0)), db_path.filename().string());
    items_.emplace(item.item_id, std::move(item));
  }
}

StudyService::~StudyService() { sqlite3_close(db_); }

std::int64_t StudyService::now() const { return options_.now_ms(); }

void StudyService::load_plan(const StudyPlan& plan, const std::vector<EvaluationItem>& items) {
  std::map<std::string, const EvaluationItem*> by_id;
  for (const auto& it : items) by_id[it.item_id] = &it;
  auto sorted = plan.item_ids;
  std::sort(sorted.begin(), sorted.end());
  const auto fingerprint =
      sha256_hex(json({{"ids", sorted}, {"per_item", plan.annotations_per_item}}).dump());

  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  {
    Stmt s(db_, "SELECT value FROM meta WHERE key='plan'");
    if (s.step()) {
      if (s.text(0) != fingerprint) throw ConfigError("study database already holds a different plan");
      return;
    }
  }
  for (const auto& id : plan.item_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ReferentialError("study plan names unknown item '" + id + "'");
    Stmt ins(db_, "INSERT INTO items(item_id, dialogue_id, stratum, needed, payload) VALUES(?,?,?,?,?)");
    ins.bind(1, id).bind(2, it->second->dialogue_id).bind(3, stratum_of(*it->second));
    ins.bind(4, static_cast<std::int64_t>(plan.annotations_per_item)).bind(5, to_json(*it->second).dump());
    ins.run();
  }
  Stmt meta(db_, "INSERT INTO meta(key, value) VALUES('plan', ?)");
  meta.bind(1, fingerprint).run();
  tx.commit();
  for (const auto& id : plan.item_ids) items_.emplace(id, *by_id[id]);
}

std::pair<std::string, std::string> StudyService::register_annotator() {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  std::int64_t count = 0;
  {
    Stmt s(db_, "SELECT COUNT(*) FROM annotators");
    if (s.step()) count = s.integer(0);
  }
  char id[32];
  std::snprintf(id, sizeof id, "ann-%04lld", static_cast<long long>(count + 1));
  const auto token = random_token();
  Stmt ins(db_, "INSERT INTO annotators(annotator_id, token) VALUES(?, ?)");
  ins.bind(1, std::string(id)).bind(2, token).run();
  tx.commit();
  return {id, token};
}

std::optional<std::string> StudyService::annotator_for_token(const std::string& token) {
  std::lock_guard lock(mutex_);
  Stmt s(db_, "SELECT annotator_id FROM annotators WHERE token=?");
  s.bind(1, token);
  if (s.step()) return s.text(0);
  return std::nullopt;
}

void StudyService::expire_stale(std::int64_t t) {
  Stmt dec(db_,
           "UPDATE items SET taken = taken - (SELECT COUNT(*) FROM tasks WHERE tasks.item_id = items.item_id "
           "AND tasks.state='assigned' AND tasks.expires_at <= ?1) "
           "WHERE item_id IN (SELECT item_id FROM tasks WHERE state='assigned' AND expires_at <= ?1)");
  dec.bind(1, t).run();
  Stmt exp(db_, "UPDATE tasks SET state='expired' WHERE state='assigned' AND expires_at <= ?");
  exp.bind(1, t).run();
}

namespace {

AnnotationTask read_task(Stmt& s) {
  // columns: task_id, item_id, annotator_id, state, assigned_at, expires_at, choice, comment
  AnnotationTask t;
  t.task_id = s.integer(0);
  t.item_id = s.text(1);
  t.annotator_id = s.text(2);
  const auto st = s.text(3);
  t.state = st == "assigned" ? TaskState::assigned : st == "submitted" ? TaskState::submitted : TaskState::expired;
  t.assigned_at_ms = s.integer(4);
  t.expires_at_ms = s.integer(5);
  if (!s.is_null(6)) t.submitted_choice = s.text(6).at(0);
  t.comment = s.text(7);
  return t;
}

constexpr const char* kTaskColumns =
    "SELECT task_id, item_id, annotator_id, state, assigned_at, expires_at, choice, comment FROM tasks ";

}  // namespace

std::optional<AnnotationTask> StudyService::next_task(const std::string& annotator_id) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  const auto t = now();
  expire_stale(t);
  {
    Stmt live(db_, (std::string(kTaskColumns) + "WHERE annotator_id=? AND state='assigned' ORDER BY task_id LIMIT 1").c_str());
    live.bind(1, annotator_id);
    if (live.step()) {
      auto task = read_task(live);
      tx.commit();
      return task;
    }
  }
  std::string item_id, dialogue_id;
  {
    Stmt pick(db_,
              "SELECT item_id, dialogue_id FROM items WHERE taken < needed "
              "AND dialogue_id NOT IN (SELECT dialogue_id FROM tasks WHERE annotator_id=?) "
              "ORDER BY needed - taken DESC, seq LIMIT 1");
    pick.bind(1, annotator_id);
    if (!pick.step()) {
      tx.commit();
      return std::nullopt;
    }
    item_id = pick.text(0);
    dialogue_id = pick.text(1);
  }
  const auto expires = t + options_.task_ttl.count();
  Stmt ins(db_,
           "INSERT INTO tasks(item_id, annotator_id, dialogue_id, state, assigned_at, expires_at) "
           "VALUES(?,?,?,'assigned',?,?)");
  ins.bind(1, item_id).bind(2, annotator_id).bind(3, dialogue_id).bind(4, t).bind(5, expires).run();
  const auto task_id = sqlite3_last_insert_rowid(db_);
  Stmt inc(db_, "UPDATE items SET taken = taken + 1 WHERE item_id=?");
  inc.bind(1, item_id).run();
  tx.commit();
  AnnotationTask task;
  task.task_id = task_id;
  task.item_id = item_id;
  task.annotator_id = annotator_id;
  task.assigned_at_ms = t;
  task.expires_at_ms = expires;
  return task;
}

SubmitResult StudyService::submit_judgment(std::int64_t task_id, const std::string& annotator_id,
                                           const std::string& choice_in, const std::string& comment) {
  SubmitResult r;
  std::string choice = choice_in;
  if (choice.size() == 1) choice[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(choice[0])));
  if (choice.size() != 1 || choice[0] < 'A' || choice[0] > 'C') {
    r.status = SubmitStatus::bad_request;
    r.message = "choice must be A, B or C";
    return r;
  }
  if (comment.size() > 4000) {
    r.status = SubmitStatus::bad_request;
    r.message = "comment longer than 4000 bytes";
    return r;
  }

  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  Stmt s(db_, (std::string(kTaskColumns) + "WHERE task_id=?").c_str());
  s.bind(1, task_id);
  if (!s.step()) {
    r.status = SubmitStatus::not_found;
    r.message = "no such task";
    return r;
  }
  auto task = read_task(s);
  if (task.annotator_id != annotator_id) {
    r.status = SubmitStatus::not_found;
    r.message = "no such task";
    return r;
  }
  const auto& item = items_.at(task.item_id);
  Judgment j;
  j.item_id = task.item_id;
  j.evaluator_kind = EvaluatorKind::human;
  j.evaluator_id = annotator_id;
  j.choice = choice[0];
  j.correct = choice[0] == item.correct_slot;
  j.comment = comment;

  if (task.state == TaskState::submitted) {
    if (task.submitted_choice == choice[0] && task.comment == comment) {
      r.judgment = j;  // retry of the same submission
    } else {
      r.status = SubmitStatus::conflict;
      r.message = "task already submitted with a different answer";
    }
    return r;
  }
  const auto t = now();
  if (task.state == TaskState::expired || task.expires_at_ms <= t) {
    expire_stale(t);
    tx.commit();
    r.status = SubmitStatus::expired;
    r.message = "task expired; fetch a new one from /tasks/next";
    return r;
  }
  Stmt up(db_, "UPDATE tasks SET state='submitted', choice=?, comment=? WHERE task_id=?");
  up.bind(1, choice).bind(2, comment).bind(3, task_id).run();
  tx.commit();
  jsonio::append_jsonl(judgment_log_, to_json(j));
  r.judgment = std::move(j);
  return r;
}

std::map<std::string, StratumProgress> StudyService::progress() {
  std::lock_guard lock(mutex_);
  std::map<std::string, StratumProgress> out;
  std::map<std::string, std::string> stratum_of_item;
  std::map<std::string, std::int64_t> needed;
  {
    Stmt s(db_, "SELECT item_id, stratum, needed FROM items");
    while (s.step()) {
      auto& p = out[s.text(1)];
      ++p.items;
      p.target_judgments += static_cast<std::size_t>(s.integer(2));
      stratum_of_item[s.text(0)] = s.text(1);
      needed[s.text(0)] = s.integer(2);
    }
  }
  std::map<std::string, std::int64_t> done;
  const auto t = now();
  Stmt s(db_, "SELECT item_id, state, expires_at FROM tasks");
  while (s.step()) {
    const auto item = s.text(0);
    const auto state = s.text(1);
    auto& p = out[stratum_of_item[item]];
    if (state == "submitted") {
      ++p.judgments;
      ++done[item];
    } else if (state == "assigned" && s.integer(2) > t) {
      ++p.in_flight;
    }
  }
  for (const auto& [item, n] : done) {
    if (n >= needed[item]) ++out[stratum_of_item[item]].completed_items;
  }
  return out;
}

std::vector<Judgment> StudyService::judgments() {
  std::lock_guard lock(mutex_);
  std::vector<Judgment> out;
  Stmt s(db_, (std::string(kTaskColumns) + "WHERE state='submitted' ORDER BY task_id").c_str());
  while (s.step()) {
    const auto task = read_task(s);
    Judgment j;
    j.item_id = task.item_id;
    j.evaluator_kind = EvaluatorKind::human;
    j.evaluator_id = task.annotator_id;
    j.choice = task.submitted_choice;
    j.correct = j.choice == items_.at(task.item_id).correct_slot;
    j.comment = task.comment;
    out.push_back(std::move(j));
  }
  return out;
}

const EvaluationItem& StudyService::item(const std::string& item_id) const { return items_.at(item_id); }

}  // namespace ph
