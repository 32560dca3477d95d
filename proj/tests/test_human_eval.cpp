#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>

#include "persona_harness/errors.hpp"
#include "persona_harness/human_eval.hpp"
#include "persona_harness/json_io.hpp"
#include "test_support.hpp"

using namespace ph;
using nlohmann::json;

namespace {

EvaluationItem item(const std::string& dialogue, Role role, Disclosure disc, const std::string& experiment = "gold") {
  EvaluationItem it;
  it.dialogue_id = dialogue;
  it.role = role;
  it.disclosure = disc;
  it.item_id = dialogue + "/" + to_string(role) + "/" + to_string(disc);
  it.tested_profile = "secret-profile-" + dialogue;
  it.other_profile = "other-profile-" + dialogue;
  it.tested_name = "Ann";
  it.other_name = "Bob";
  it.topic = "sea";
  it.arm = experiment == "gold" ? "gold" : "gen";
  it.experiment = experiment;
  it.candidates = {Candidate{'A', "pa", "Bio A."}, Candidate{'B', it.tested_profile, "Bio B."},
                   Candidate{'C', "pc", "Bio C."}};
  it.correct_slot = 'B';
  it.view.turns = {{"x", "Ann", "hello", false}, {"y", "Bob", hides_turns(disc) ? "[MASKED]" : "hi", hides_turns(disc)}};
  it.view.bio_masked = hides_bio(disc);
  it.view.interlocutor_bio = hides_bio(disc) ? "[MASKED]" : "Bob's bio.";
  return it;
}

std::vector<EvaluationItem> items_for(int dialogues) {
  std::vector<EvaluationItem> out;
  for (int d = 0; d < dialogues; ++d)
    for (auto role : {Role::target, Role::interlocutor})
      for (auto disc : kAllDisclosures) out.push_back(item("d" + std::to_string(d), role, disc));
  return out;
}

struct Clock {
  std::int64_t now = 1'000'000;
  StudyOptions options(std::chrono::milliseconds ttl = std::chrono::minutes(30)) {
    StudyOptions o;
    o.task_ttl = ttl;
    o.now_ms = [this] { return now; };
    return o;
  }
};

StudyPlan plan_of(const std::vector<EvaluationItem>& items, int per_item = 3) {
  StudyPlan p;
  for (const auto& it : items) p.item_ids.push_back(it.item_id);
  p.annotations_per_item = per_item;
  return p;
}

}  // namespace

TEST_CASE("guidelines text") {
  const std::string g = kAnnotatorGuidelines;
  CHECK(g.rfind("You will be presented with a series of dialogues between two speakers.", 0) == 0);
  CHECK(g.find("There are 3 possible Profiles to choose among") != std::string::npos);
  CHECK(g.find("in the latter case we use the tag [MASKED]") != std::string::npos);
}

TEST_CASE("largest-remainder allocation") {
  // 10 over sizes 5,3,2 (total 10) is exact
  CHECK(allocate_proportional({{"a", 5}, {"b", 3}, {"c", 2}}, 10) ==
        std::map<std::string, std::size_t>{{"a", 5}, {"b", 3}, {"c", 2}});
  // 2 over three equal strata: remainder ties go to the smaller keys
  CHECK(allocate_proportional({{"x", 4}, {"y", 4}, {"z", 4}}, 2) ==
        std::map<std::string, std::size_t>{{"x", 1}, {"y", 1}, {"z", 0}});
  CHECK_THROWS_AS(allocate_proportional({{"a", 1}}, 2), ConfigError);

  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, std::size_t> sizes;
    std::size_t total = 0;
    const auto k = 1 + rng.index(8);
    for (std::size_t i = 0; i < k; ++i) {
      const auto s = rng.index(50);
      sizes["s" + std::to_string(i)] = s;
      total += s;
    }
    const auto n = total ? rng.index(total + 1) : 0;
    const auto a = allocate_proportional(sizes, n);
    std::size_t sum = 0;
    for (const auto& [key, s] : sizes) {
      const double exact = total ? static_cast<double>(n) * static_cast<double>(s) / static_cast<double>(total) : 0.0;
      const double got = static_cast<double>(a.count(key) ? a.at(key) : 0);
      CHECK(got >= std::floor(exact));
      CHECK(got <= std::ceil(exact));
      CHECK(got <= static_cast<double>(s));
      sum += a.count(key) ? a.at(key) : 0;
    }
    CHECK(sum == n);
  }
}

TEST_CASE("study plan is stratified and seeded") {
  std::vector<EvaluationItem> items;
  for (int d = 0; d < 30; ++d) {
    for (auto disc : kAllDisclosures) items.push_back(item("g" + std::to_string(d), Role::target, disc));
    for (auto disc : kAllDisclosures) items.push_back(item("e" + std::to_string(d), Role::target, disc, "Exp1"));
  }
  const auto plan = build_study_plan(items, 40, 3);
  CHECK(plan.item_ids.size() == 40);
  CHECK(plan.allocation.size() == 8);
  for (const auto& [k, n] : plan.allocation) CHECK(n == 5);
  CHECK(build_study_plan(items, 40, 3).item_ids == plan.item_ids);
  CHECK(build_study_plan(items, 40, 4).item_ids != plan.item_ids);
  CHECK_THROWS_AS(build_study_plan(items, 1000, 3), ConfigError);

  const auto dir = testsupport::scratch_dir("study_plan");
  write_study_plan(dir / "plan.json", plan);
  const auto back = read_study_plan(dir / "plan.json");
  CHECK(back.item_ids == plan.item_ids);
  CHECK(back.allocation == plan.allocation);
  CHECK_THROWS_AS(read_study_plan(dir / "none.json"), MissingArtifactError);

  CHECK(filter_items_by_arm(items, {"gen"}).size() == 120);
  CHECK(filter_items_by_arm(items, {}).size() == 240);
}

TEST_CASE("task payload hides the answer key") {
  AnnotationTask t;
  t.task_id = 7;
  const auto it = item("d9", Role::target, Disclosure::both_mask);
  const auto j = task_payload(t, it);
  const auto p = j.dump();
  CHECK_FALSE(j.contains("correct_slot"));
  for (const auto& c : j.at("candidates")) CHECK_FALSE(c.contains("profile_id"));
  CHECK(p.find("secret-profile") == std::string::npos);
  CHECK(p.find("other-profile") == std::string::npos);
  CHECK(p.find("\"pa\"") == std::string::npos);
  CHECK(p.find("Bio B.") != std::string::npos);
  CHECK(p.find("[MASKED]") != std::string::npos);
}

TEST_CASE("assignment: three distinct annotators per item, never the same dialogue twice") {
  const auto dir = testsupport::scratch_dir("study_assign");
  Clock clock;
  const auto items = items_for(6);  // 6 dialogues x 8 items
  StudyService svc(dir / "study.db", dir / "judgments.jsonl", clock.options());
  svc.load_plan(plan_of(items), items);

  std::vector<std::string> annotators;
  for (int i = 0; i < 24; ++i) annotators.push_back(svc.register_annotator().first);
  CHECK(annotators[0] == "ann-0001");
  CHECK(annotators[23] == "ann-0024");

  std::map<std::string, std::set<std::string>> seen_dialogues;
  std::map<std::string, std::set<std::string>> raters;
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& a : annotators) {
      const auto t = svc.next_task(a);
      if (!t) continue;
      progress = true;
      const auto& it = svc.item(t->item_id);
      CHECK(seen_dialogues[a].insert(it.dialogue_id).second);
      CHECK(raters[t->item_id].insert(a).second);
      CHECK(svc.submit_judgment(t->task_id, a, "b", "").status == SubmitStatus::ok);
    }
  }
  // 48 items x 3 = 144 judgments; 24 annotators x 6 dialogues = 144 slots
  CHECK(raters.size() == 48);
  for (const auto& [id, who] : raters) CHECK(who.size() == 3);
  CHECK(svc.judgments().size() == 144);
  for (const auto& j : svc.judgments()) {
    CHECK(j.evaluator_kind == EvaluatorKind::human);
    CHECK(j.correct);
  }
  CHECK(jsonio::read_jsonl(dir / "judgments.jsonl").size() == 144);
  std::size_t completed = 0;
  for (const auto& [k, p] : svc.progress()) {
    completed += p.completed_items;
    CHECK(p.judgments == p.target_judgments);
    CHECK(p.in_flight == 0);
  }
  CHECK(completed == 48);
}

TEST_CASE("submission statuses") {
  const auto dir = testsupport::scratch_dir("study_submit");
  Clock clock;
  const auto items = items_for(3);
  StudyService svc(dir / "s.db", dir / "j.jsonl", clock.options(std::chrono::minutes(10)));
  svc.load_plan(plan_of(items), items);
  const auto a = svc.register_annotator().first;
  const auto b = svc.register_annotator().first;

  const auto t = svc.next_task(a);
  REQUIRE(t);
  // asking again returns the live task, not a second one
  CHECK(svc.next_task(a)->task_id == t->task_id);
  CHECK(svc.submit_judgment(t->task_id, a, "D", "").status == SubmitStatus::bad_request);
  CHECK(svc.submit_judgment(t->task_id, a, "A", std::string(5000, 'x')).status == SubmitStatus::bad_request);
  CHECK(svc.submit_judgment(t->task_id, b, "A", "").status == SubmitStatus::not_found);
  CHECK(svc.submit_judgment(99999, a, "A", "").status == SubmitStatus::not_found);

  const auto ok = svc.submit_judgment(t->task_id, a, "A", "tricky");
  CHECK(ok.status == SubmitStatus::ok);
  REQUIRE(ok.judgment);
  CHECK_FALSE(ok.judgment->correct);
  CHECK(ok.judgment->comment == "tricky");
  // retrying the same submission is harmless and not logged twice
  CHECK(svc.submit_judgment(t->task_id, a, "A", "tricky").status == SubmitStatus::ok);
  CHECK(svc.submit_judgment(t->task_id, a, "C", "tricky").status == SubmitStatus::conflict);
  CHECK(jsonio::read_jsonl(dir / "j.jsonl").size() == 1);

  // expiry: the slot goes back to the pool and a late submit is refused
  const auto tb = svc.next_task(b);
  REQUIRE(tb);
  clock.now += 10 * 60 * 1000;
  CHECK(svc.submit_judgment(tb->task_id, b, "B", "").status == SubmitStatus::expired);
  const auto tb2 = svc.next_task(b);
  REQUIRE(tb2);
  CHECK(tb2->task_id != tb->task_id);
  CHECK(svc.item(tb2->item_id).dialogue_id != svc.item(tb->item_id).dialogue_id);
}

TEST_CASE("state survives a restart; a different plan is refused") {
  const auto dir = testsupport::scratch_dir("study_restart");
  Clock clock;
  const auto items = items_for(2);
  std::string token;
  {
    StudyService svc(dir / "s.db", dir / "j.jsonl", clock.options());
    svc.load_plan(plan_of(items), items);
    const auto [id, tok] = svc.register_annotator();
    token = tok;
    const auto t = svc.next_task(id);
    REQUIRE(t);
    CHECK(svc.submit_judgment(t->task_id, id, "B", "").status == SubmitStatus::ok);
  }
  StudyService svc(dir / "s.db", dir / "j.jsonl", clock.options());
  CHECK(svc.annotator_for_token(token) == "ann-0001");
  CHECK_FALSE(svc.annotator_for_token("nope"));
  CHECK(svc.judgments().size() == 1);
  CHECK_NOTHROW(svc.load_plan(plan_of(items), items));
  auto fewer = items;
  fewer.pop_back();
  CHECK_THROWS_AS(svc.load_plan(plan_of(fewer), fewer), ConfigError);

  StudyService fresh(dir / "t.db", dir / "k.jsonl", clock.options());
  auto bad = plan_of(items);
  bad.item_ids.push_back("ghost");
  CHECK_THROWS_AS(fresh.load_plan(bad, items), ReferentialError);
}

TEST_CASE("HTTP API") {
  const auto dir = testsupport::scratch_dir("study_http");
  const auto items = items_for(4);
  StudyService svc(dir / "s.db", dir / "j.jsonl");
  svc.load_plan(plan_of(items, 1), items);
  HumanEvalServer server(svc, "admin-secret");
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  const httplib::Headers admin = {{"Authorization", "Bearer admin-secret"}};

  CHECK(cli.Post("/annotators")->status == 401);
  CHECK(cli.Post("/annotators", httplib::Headers{{"Authorization", "Bearer wrong"}}, "", "application/json")->status ==
        401);
  auto reg = cli.Post("/annotators", admin, "", "application/json");
  REQUIRE(reg);
  CHECK(reg->status == 201);
  CHECK(reg->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto token = json::parse(reg->body).at("token").get<std::string>();
  const httplib::Headers me = {{"Authorization", "Bearer " + token}};

  CHECK(cli.Get("/tasks/next")->status == 401);
  CHECK(cli.Get("/tasks/next", admin)->status == 401);  // admin is not an annotator
  int done = 0;
  for (;;) {
    auto res = cli.Get("/tasks/next", me);
    REQUIRE(res);
    if (res->status == 204) break;
    REQUIRE(res->status == 200);
    const auto task = json::parse(res->body);
    CHECK(res->body.find("secret-profile") == std::string::npos);
    CHECK(task.at("candidates").size() == 3);
    const auto path = "/tasks/" + std::to_string(task.at("task_id").get<std::int64_t>()) + "/judgment";
    CHECK(cli.Post(path, me, "not json", "application/json")->status == 400);
    CHECK(cli.Post(path, me, R"({"choice": "Z"})", "application/json")->status == 400);
    CHECK(cli.Post(path, me, R"({"choice": "B", "comment": "ok"})", "application/json")->status == 200);
    CHECK(cli.Post(path, me, R"({"choice": "A", "comment": "ok"})", "application/json")->status == 409);
    ++done;
  }
  CHECK(done == 4);  // one item per dialogue for a single annotator
  CHECK(cli.Post("/tasks/424242/judgment", me, R"({"choice": "A"})", "application/json")->status == 404);

  CHECK(cli.Get("/progress", me)->status == 401);
  auto prog = cli.Get("/progress", admin);
  REQUIRE(prog);
  CHECK(json::parse(prog->body).at("judgments") == 4);
  CHECK(json::parse(prog->body).at("target_judgments") == 32);

  auto pre = cli.Options("/tasks/next");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(cli.Get("/guidelines")->status == 200);
  server.stop();
}
