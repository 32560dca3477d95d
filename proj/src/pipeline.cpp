#include "persona_harness/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "persona_harness/embedding.hpp"
#include "persona_harness/errors.hpp"
#include "persona_harness/human_eval.hpp"
#include "persona_harness/identification_metrics.hpp"
#include "persona_harness/json_io.hpp"
#include "persona_harness/judge.hpp"
#include "persona_harness/mock_models.hpp"
#include "persona_harness/overlap_metrics.hpp"
#include "persona_harness/parallel.hpp"
#include "persona_harness/rng.hpp"
#include "persona_harness/text.hpp"

namespace ph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace artifacts {
std::string generated(const std::string& arm) { return "generated/" + arm + ".jsonl"; }
std::string generation_log(const std::string& arm) { return "generated/" + arm + ".outcomes.json"; }
std::string judgments(const std::string& judge) { return "judgments/" + judge + ".jsonl"; }
}  // namespace artifacts

namespace {

const std::vector<std::vector<std::string>> kDefaultSlices = {
    {},
    {"evaluator"},
    {"evaluator", "disclosure"},
    {"evaluator", "arm"},
    {"evaluator", "arm", "disclosure"},
    {"evaluator", "experiment"},
    {"evaluator", "pairing"},
    {"evaluator", "topic"},
    {"evaluator", "role"},
    {"evaluator", "position"},
};

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError(where + ": unknown key '" + k + "'");
    }
  }
}

json section(const json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : json::object();
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::string need_endpoint(const RunConfig& cfg, const std::string& id, const std::string& where) {
  if (id.empty()) throw ConfigError(where + ": no endpoint configured");
  if (!cfg.endpoints.count(id)) throw ConfigError(where + ": endpoint '" + id + "' is not defined");
  return id;
}

// -- artifacts -----------------------------------------------------------------

fs::path at(const RunConfig& cfg, const std::string& rel) { return cfg.out_dir / rel; }

fs::path require(const RunConfig& cfg, const std::string& rel, const std::string& producer) {
  auto p = at(cfg, rel);
  if (!fs::exists(p)) throw MissingArtifactError(p.string(), producer);
  return p;
}

std::unique_ptr<LlmGateway> make_gateway(const RunConfig& cfg, const StageOptions& opts) {
  GatewayOptions g;
  g.cache_dir = cfg.cache_dir;
  g.offline = cfg.offline;
  g.max_in_flight = cfg.max_in_flight;
  g.retry = cfg.retry;
  std::shared_ptr<ChatTransport> t = opts.transport;
  if (!t) t = make_default_transport();
  return std::make_unique<LlmGateway>(std::move(t), g);
}

std::vector<SpeakerProfile> base_profiles(const RunConfig& cfg) {
  return read_profiles(require(cfg, artifacts::kProfiles, "ingest"));
}

/// Ingested profiles with topic-annotated gold dialogues, plus synthetic
/// profiles when they exist (or are required).
Corpus topic_corpus(const RunConfig& cfg, bool need_synthetic) {
  auto profiles = base_profiles(cfg);
  auto dialogues = read_dialogues(require(cfg, artifacts::kTopicDialogues, "annotate-topics"));
  const auto syn = at(cfg, artifacts::kSynthetic);
  if (need_synthetic) require(cfg, artifacts::kSynthetic, "gen-profiles");
  if (fs::exists(syn)) {
    auto s = read_profiles(syn);
    profiles.insert(profiles.end(), s.begin(), s.end());
  }
  return Corpus(std::move(profiles), std::move(dialogues));
}

/// topic_corpus plus every configured arm's generated dialogues.
Corpus run_corpus(const RunConfig& cfg, bool require_generated) {
  auto c = topic_corpus(cfg, false);
  std::vector<Dialogue> gen;
  for (const auto& arm : cfg.generator_arms) {
    const auto p = at(cfg, artifacts::generated(arm));
    if (!fs::exists(p)) {
      if (require_generated) throw MissingArtifactError(p.string(), "generate");
      continue;
    }
    auto ds = read_dialogues(p);
    gen.insert(gen.end(), ds.begin(), ds.end());
  }
  return c.merged({}, std::move(gen));
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  for (auto& l : text::split_lines(jsonio::read_text(p))) {
    auto t = text::trim(l);
    if (!t.empty() && t[0] != '#') out.push_back(std::move(t));
  }
  return out;
}

std::string random_token() {
  std::random_device rd;
  std::string bytes;
  for (int i = 0; i < 8; ++i) bytes += std::to_string(rd());
  return sha256_hex(bytes).substr(0, 40);
}

// -- manifest --------------------------------------------------------------------

void record_manifest(const RunConfig& cfg, const StageResult& r) {
  const auto path = at(cfg, artifacts::kManifest);
  json m = fs::exists(path) ? jsonio::read_json(path) : json::object();
  m["config_sha256"] = cfg.config_hash();
  m["seed"] = cfg.seed;
  json seeds;
  for (const char* label : {"split", "topics/validation", "profiles", "profiles/sample", "pairing", "items", "human"}) {
    seeds[label] = derive_seed(cfg.seed, label);
  }
  m["derived_seeds"] = seeds;
  m["template_versions"] = {{"topics", kTopicTemplateVersion},     {"profiles", kProfileTemplateVersion},
                            {"generation", cfg.generation.prompt_template_version},
                            {"items", kItemTemplateVersion}, {"judge", kJudgeTemplateVersion}};
  json eps = json::object();
  for (const auto& [id, e] : cfg.endpoints) {
    auto j = to_json(e);
    j["id"] = id;
    eps[id] = j;
  }
  m["endpoints"] = eps;
  m["embedder"] = make_embedder(cfg.embedder)->id();
  json stage = {{"outputs", r.outputs}, {"counts", r.counts}, {"problems", r.problems}, {"notes", r.notes}};
  m["stages"][r.stage] = stage;
  jsonio::write_json(path, m);
}

// -- stages ------------------------------------------------------------------------

StageResult stage_ingest(const RunConfig& cfg, const StageOptions&) {
  StageResult r;
  for (const auto& p : {cfg.profiles_path, cfg.dialogues_path}) {
    if (!fs::exists(p)) throw ConfigError("corpus file not found: " + p.string());
  }
  const auto corpus = load_corpus(cfg.profiles_path, cfg.dialogues_path);
  std::set<std::string> works;
  std::size_t generated = 0;
  for (const auto& p : corpus.profiles()) {
    if (p.source_work) works.insert(*p.source_work);
  }
  for (const auto& d : corpus.dialogues()) generated += d.source == DialogueSource::generated;
  if (generated) throw ConfigError("the input corpus contains " + std::to_string(generated) + " generated dialogues");
  write_corpus(corpus, at(cfg, artifacts::kProfiles), at(cfg, artifacts::kDialogues));
  r.outputs = {artifacts::kProfiles, artifacts::kDialogues};
  r.counts = {{"profiles", corpus.profiles().size()}, {"dialogues", corpus.dialogues().size()},
              {"works", works.size()}};
  return r;
}

StageResult stage_split(const RunConfig& cfg, const StageOptions&) {
  StageResult r;
  const auto corpus = load_corpus(require(cfg, artifacts::kProfiles, "ingest"), require(cfg, artifacts::kDialogues, "ingest"));
  const auto split = split_corpus(corpus, cfg.split, derive_seed(cfg.seed, "split"));
  write_split_manifest(at(cfg, artifacts::kSplit), split);
  const auto a = split.achieved();
  r.outputs = {artifacts::kSplit};
  r.counts = {{"train", split.train.size()},
              {"validation", split.validation.size()},
              {"test", split.test.size()},
              {"achieved", {a.train, a.validation, a.test}}};
  return r;
}

StageResult stage_annotate_topics(const RunConfig& cfg, const StageOptions& opts) {
  StageResult r;
  if (opts.apply_validation) {
    const auto path = require(cfg, artifacts::kTopicDialogues, "annotate-topics");
    if (!fs::exists(*opts.apply_validation)) {
      throw ConfigError("validation manifest not found: " + opts.apply_validation->string());
    }
    auto ds = read_dialogues(path);
    const auto n = apply_validation_manifest(*opts.apply_validation, ds);
    write_dialogues(path, ds);
    r.outputs = {artifacts::kTopicDialogues};
    r.counts = {{"validated", n}};
    return r;
  }
  const auto corpus = load_corpus(require(cfg, artifacts::kProfiles, "ingest"), require(cfg, artifacts::kDialogues, "ingest"));
  const auto& ep = cfg.endpoint(need_endpoint(cfg, cfg.topic_endpoint, "topics.endpoint"));
  auto gw = make_gateway(cfg, opts);
  auto emb = make_embedder(cfg.embedder);
  std::vector<std::string> ids;
  for (const auto& d : corpus.dialogues()) ids.push_back(d.dialogue_id);
  auto res = annotate_topics(corpus, ids, *gw, ep, *emb, cfg.topics);

  write_dialogues(at(cfg, artifacts::kTopicDialogues), res.dialogues);
  write_cluster_vocabulary(at(cfg, artifacts::kTopicVocabulary), res.vocabulary);
  std::vector<std::string> labelled;
  std::map<std::string, int> histogram;
  for (const auto& d : res.dialogues) {
    if (!d.topic) continue;
    labelled.push_back(d.dialogue_id);
    ++histogram[d.topic->label];
  }
  const auto sample = sample_for_validation(labelled, cfg.validation_sample, derive_seed(cfg.seed, "topics/validation"));
  write_validation_manifest(at(cfg, artifacts::kTopicValidation), res.dialogues, sample);

  r.outputs = {artifacts::kTopicDialogues, artifacts::kTopicVocabulary, artifacts::kTopicValidation};
  r.counts = {{"labelled", labelled.size()},        {"excluded", res.excluded.size()},
              {"failed", res.failed.size()},        {"clusters", res.vocabulary.clusters.size()},
              {"labels", histogram},                {"validation_sample", sample.size()}};
  for (const auto& id : res.failed) r.problems.push_back("dialogue " + id + ": no topic label");
  for (const auto& id : res.excluded) r.notes.push_back("dialogue " + id + ": excluded (the model declined)");
  r.notes.insert(r.notes.end(), res.warnings.begin(), res.warnings.end());
  return r;
}

StageResult stage_gen_profiles(const RunConfig& cfg, const StageOptions& opts) {
  StageResult r;
  if (!cfg.personas_path) throw ConfigError("gen-profiles needs \"personas\" in the config");
  if (!fs::exists(*cfg.personas_path)) throw ConfigError("persona file not found: " + cfg.personas_path->string());
  const auto& ep = cfg.endpoint(need_endpoint(cfg, cfg.profile_endpoint, "profiles.endpoint"));
  const auto personas =
      sample_personas(read_lines(*cfg.personas_path), cfg.synthetic_profiles, derive_seed(cfg.seed, "profiles/sample"));
  auto gw = make_gateway(cfg, opts);
  const auto out = generate_synthetic_profiles(personas, *gw, ep, derive_seed(cfg.seed, "profiles"), cfg.profile_threads);
  write_profiles(at(cfg, artifacts::kSynthetic), out.profiles);
  r.outputs = {artifacts::kSynthetic};
  r.counts = {{"requested", out.requested}, {"profiles", out.profiles.size()}, {"skipped", out.skipped.size()}};
  r.problems = out.skipped;
  r.notes = out.warnings;
  return r;
}

StageResult stage_plan_pairings(const RunConfig& cfg, const StageOptions&) {
  StageResult r;
  const bool need_syn = std::any_of(cfg.experiments.begin(), cfg.experiments.end(), needs_synthetic_profiles);
  const auto corpus = topic_corpus(cfg, need_syn);
  const auto split = read_split_manifest(require(cfg, artifacts::kSplit, "split"));
  const auto plan = build_pairing_plan(corpus, split.test, cfg.experiments, derive_seed(cfg.seed, "pairing"), cfg.pairing);
  write_pairing_plan(at(cfg, artifacts::kPairing), plan);
  r.outputs = {artifacts::kPairing};
  json per = json::object();
  for (auto e : cfg.experiments) per[to_string(e)] = plan.count(e);
  r.counts = {{"entries", plan.entries.size()}, {"per_experiment", per}};
  r.notes = plan.warnings;
  return r;
}

StageResult stage_generate(const RunConfig& cfg, const StageOptions& opts) {
  StageResult r;
  std::vector<std::string> arms = cfg.generator_arms;
  if (opts.only_arm) {
    if (std::find(arms.begin(), arms.end(), *opts.only_arm) == arms.end()) {
      throw ConfigError("arm '" + *opts.only_arm + "' is not listed in generation.arms");
    }
    arms = {*opts.only_arm};
  }
  if (arms.empty()) throw ConfigError("generation.arms is empty");
  const auto plan = read_pairing_plan(require(cfg, artifacts::kPairing, "plan-pairings"));
  const bool need_syn = std::any_of(plan.entries.begin(), plan.entries.end(),
                                    [](const PairingEntry& e) { return needs_synthetic_profiles(e.experiment); });
  const auto corpus = topic_corpus(cfg, need_syn);
  auto gw = make_gateway(cfg, opts);
  for (const auto& arm : arms) {
    const auto run = generate_all(plan, corpus, *gw, cfg.endpoint(arm), cfg.generation);
    write_dialogues(at(cfg, artifacts::generated(arm)), run.dialogues);
    json log = json::array();
    std::size_t failed = 0, excluded = 0;
    for (const auto& p : run.problems) {
      const bool fail = p.status == GenerationStatus::failed;
      log.push_back({{"entry_id", p.entry_id}, {"status", fail ? "failed" : "excluded"}, {"message", p.message}});
      (fail ? r.problems : r.notes).push_back(arm + "/" + p.entry_id + ": " + (fail ? "failed: " : "excluded: ") + p.message);
      ++(fail ? failed : excluded);
    }
    jsonio::write_json(at(cfg, artifacts::generation_log(arm)), log);
    r.outputs.push_back(artifacts::generated(arm));
    r.outputs.push_back(artifacts::generation_log(arm));
    r.counts[arm] = {{"dialogues", run.dialogues.size()}, {"failed", failed}, {"excluded", excluded}};
  }
  return r;
}

StageResult stage_build_items(const RunConfig& cfg, const StageOptions&) {
  StageResult r;
  const auto corpus = run_corpus(cfg, true);
  std::vector<Dialogue> dialogues;
  std::size_t unlabelled = 0;
  if (cfg.include_gold) {
    const auto split = read_split_manifest(require(cfg, artifacts::kSplit, "split"));
    for (const auto& id : split.test) {
      const auto& d = corpus.dialogue(id);
      if (!d.topic) {
        ++unlabelled;
        continue;
      }
      dialogues.push_back(d);
    }
  }
  for (const auto& d : corpus.dialogues()) {
    if (d.source == DialogueSource::generated) dialogues.push_back(d);
  }
  if (unlabelled) r.notes.push_back(std::to_string(unlabelled) + " test dialogues without a topic label left out");
  auto emb = make_embedder(cfg.embedder);
  const auto items = build_items(dialogues, corpus, *emb, derive_seed(cfg.seed, "items"), cfg.items);
  write_items(at(cfg, artifacts::kItems), items);
  std::map<std::string, std::size_t> by_arm;
  for (const auto& it : items) ++by_arm[it.arm];
  r.outputs = {artifacts::kItems};
  r.counts = {{"items", items.size()}, {"dialogues", dialogues.size()}, {"by_arm", by_arm}};
  return r;
}

StageResult stage_judge(const RunConfig& cfg, const StageOptions& opts) {
  StageResult r;
  auto items = read_items(require(cfg, artifacts::kItems, "build-items"));
  if (!opts.disclosures.empty()) {
    std::erase_if(items, [&](const EvaluationItem& it) {
      return std::find(opts.disclosures.begin(), opts.disclosures.end(), it.disclosure) == opts.disclosures.end();
    });
  }
  std::vector<std::string> judges = cfg.judges;
  if (opts.only_judge) {
    need_endpoint(cfg, *opts.only_judge, "--judge");
    judges = {*opts.only_judge};
  }
  if (judges.empty()) throw ConfigError("judge.endpoints is empty");
  auto gw = make_gateway(cfg, opts);
  for (const auto& id : judges) {
    const auto& ep = cfg.endpoint(id);
    if (ep.mode != DecodingMode::greedy) throw ConfigError("judge endpoint '" + id + "' must use greedy decoding");
    std::vector<std::optional<Judgment>> out(items.size());
    std::vector<std::string> errors(items.size());
    parallel_for(items.size(), cfg.judge_threads, [&](std::size_t i) {
      try {
        out[i] = judge_item(items[i], *gw, ep);
      } catch (const TransportError& e) {
        errors[i] = id + "/" + items[i].item_id + ": " + e.what();
      }
    });
    std::vector<Judgment> js;
    std::size_t unparsed = 0, correct = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!errors[i].empty()) r.problems.push_back(errors[i]);
      if (!out[i]) continue;
      unparsed += out[i]->unparsed();
      correct += out[i]->correct;
      js.push_back(std::move(*out[i]));
    }
    write_judgments(at(cfg, artifacts::judgments(id)), js);
    r.outputs.push_back(artifacts::judgments(id));
    r.counts[id] = {{"judged", js.size()}, {"unparsed", unparsed}, {"correct", correct},
                    {"failed", items.size() - js.size()}};
  }
  std::vector<std::string> shown;
  for (auto d : opts.disclosures) shown.push_back(to_string(d));
  r.counts["disclosures"] = shown.empty() ? std::vector<std::string>{"all"} : shown;
  return r;
}

StageResult stage_serve(const RunConfig& cfg, const StageOptions& opts) {
  StageResult r;
  const auto items = read_items(require(cfg, artifacts::kItems, "build-items"));
  const auto plan_path = at(cfg, artifacts::kStudyPlan);
  StudyPlan plan;
  if (fs::exists(plan_path)) {
    plan = read_study_plan(plan_path);
  } else {
    const auto pool = filter_items_by_arm(items, cfg.human_eval.arms);
    plan = build_study_plan(pool, cfg.human_eval.items, derive_seed(cfg.seed, "human"),
                            cfg.human_eval.annotations_per_item);
    write_study_plan(plan_path, plan);
  }
  StudyOptions so;
  so.task_ttl = std::chrono::minutes(cfg.human_eval.task_ttl_minutes);
  StudyService service(at(cfg, artifacts::kStudyDb), at(cfg, artifacts::kHumanJudgments), so);
  service.load_plan(plan, items);

  const char* env = std::getenv(cfg.human_eval.admin_token_env.c_str());
  const std::string admin = env && *env ? env : random_token();
  HumanEvalServer server(service, admin);
  const int port = server.start(cfg.human_eval.host, opts.port.value_or(cfg.human_eval.port));
  if (opts.on_ready) opts.on_ready(port, env && *env ? std::string() : admin);

  auto complete = [&] {
    std::size_t have = 0, want = 0;
    for (const auto& [k, p] : service.progress()) {
      have += p.judgments;
      want += p.target_judgments;
    }
    return have >= want;
  };
  while (!(opts.stop && opts.stop->load()) && !(opts.exit_when_complete && complete())) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();

  std::size_t judgments = 0, target = 0;
  for (const auto& [k, p] : service.progress()) {
    judgments += p.judgments;
    target += p.target_judgments;
  }
  r.outputs = {artifacts::kStudyPlan, artifacts::kHumanJudgments};
  r.counts = {{"items", plan.item_ids.size()}, {"judgments", judgments}, {"target_judgments", target}};
  return r;
}

std::string slice_title(const std::vector<std::string>& keys) {
  if (keys.empty()) return "Identification, all judgments";
  return "Identification by " + text::join(keys, " x ");
}

StageResult stage_report(const RunConfig& cfg, const StageOptions& opts) {
  StageResult r;
  const auto items = read_items(require(cfg, artifacts::kItems, "build-items"));
  std::vector<Judgment> judgments;
  std::vector<fs::path> files;
  const auto jdir = at(cfg, "judgments");
  if (fs::is_directory(jdir)) {
    for (const auto& e : fs::directory_iterator(jdir)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  const auto human = at(cfg, artifacts::kHumanJudgments);
  if (fs::exists(human)) files.push_back(human);
  if (files.empty()) throw MissingArtifactError(jdir.string(), "judge");
  for (const auto& f : files) {
    auto js = read_judgments(f);
    judgments.insert(judgments.end(), js.begin(), js.end());
  }

  const auto groupings = opts.slice.empty() ? cfg.report_slices : std::vector<std::vector<std::string>>{opts.slice};
  std::string text;
  json metrics = json::array();
  for (const auto& g : groupings) {
    const auto m = identification_metrics(judgments, items, g);
    text += format_metrics_table(m, slice_title(g)) + "\n";
    metrics.push_back(to_json(m));
    for (const auto& n : m.notes) r.notes.push_back(slice_title(g) + ": " + n);
  }

  if (cfg.frequency_table.empty()) throw ConfigError("report needs \"frequency_table\" in the config");
  if (!fs::exists(cfg.frequency_table)) throw ConfigError("frequency table not found: " + cfg.frequency_table.string());
  const auto table = FrequencyTable::load(cfg.frequency_table);
  const auto corpus = run_corpus(cfg, false);
  std::vector<Dialogue> dialogues;
  if (cfg.include_gold && fs::exists(at(cfg, artifacts::kSplit))) {
    for (const auto& id : read_split_manifest(at(cfg, artifacts::kSplit)).test) dialogues.push_back(corpus.dialogue(id));
  }
  for (const auto& d : corpus.dialogues()) {
    if (d.source == DialogueSource::generated) dialogues.push_back(d);
  }
  const auto overlap = overlap_report(dialogues, corpus, table, cfg.rare_threshold, cfg.items.bio_cap);
  text += format_overlap_tables(overlap);

  jsonio::write_json(at(cfg, artifacts::kReportMetrics), metrics);
  jsonio::write_json(at(cfg, artifacts::kReportOverlap), to_json(overlap));
  jsonio::write_text(at(cfg, artifacts::kReportText), text);
  r.outputs = {artifacts::kReportText, artifacts::kReportMetrics, artifacts::kReportOverlap};
  r.counts = {{"judgments", judgments.size()}, {"items", items.size()}, {"tables", groupings.size() + 2},
              {"overlap_dialogues", dialogues.size()}};
  r.text = std::move(text);
  return r;
}

}  // namespace

// -- config ------------------------------------------------------------------------------

const LlmEndpoint& RunConfig::endpoint(const std::string& id) const {
  const auto it = endpoints.find(id);
  if (it == endpoints.end()) throw ConfigError("endpoint '" + id + "' is not defined");
  return it->second;
}

std::string RunConfig::config_hash() const {
  // execution-only settings do not change what a run produces
  auto j = effective;
  for (const char* k : {"out_dir", "cache_dir", "offline", "max_in_flight", "retry"}) j.erase(k);
  return sha256_hex(j.dump());
}

std::pair<std::string, std::string> parse_endpoint_override(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw ConfigError("--endpoint expects name=url, got '" + spec + "'");
  }
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

RunConfig load_run_config(const fs::path& path, const RunOverrides& overrides) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(jsonio::read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(std::move(j), fs::absolute(path).parent_path(), overrides);
}

RunConfig parse_run_config(json j, const fs::path& base_dir, const RunOverrides& ov) {
  check_keys(j,
             {"seed", "out_dir", "corpus", "personas", "frequency_table", "cache_dir", "offline", "max_in_flight",
              "retry", "endpoints", "embedder", "split", "topics", "profiles", "pairing", "generation", "evaluation", "judge",
              "human_eval", "report"},
             "config");
  if (ov.seed) j["seed"] = *ov.seed;
  if (ov.out_dir) j["out_dir"] = fs::absolute(*ov.out_dir).lexically_normal().string();
  if (ov.offline) j["offline"] = *ov.offline;
  for (const auto& [id, url] : ov.endpoints) {
    if (!j["endpoints"].contains(id)) j["endpoints"][id] = {{"model", id}};
    j["endpoints"][id]["base_url"] = url;
  }

  RunConfig c;
  c.effective = j;
  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) {
    throw ConfigError("config: \"seed\" must be set to a non-negative integer");
  }
  c.seed = j["seed"].get<std::uint64_t>();
  if (!j.contains("out_dir")) throw ConfigError("config: \"out_dir\" is required (or pass --out)");
  c.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());

  const auto corpus = section(j, "corpus");
  check_keys(corpus, {"profiles", "dialogues"}, "corpus");
  if (!corpus.contains("profiles") || !corpus.contains("dialogues")) {
    throw ConfigError("corpus: \"profiles\" and \"dialogues\" are required");
  }
  c.profiles_path = resolve(base_dir, corpus["profiles"].get<std::string>());
  c.dialogues_path = resolve(base_dir, corpus["dialogues"].get<std::string>());
  if (j.contains("personas")) c.personas_path = resolve(base_dir, j["personas"].get<std::string>());
  if (j.contains("frequency_table")) c.frequency_table = resolve(base_dir, j["frequency_table"].get<std::string>());
  c.cache_dir = j.contains("cache_dir") ? resolve(base_dir, j["cache_dir"].get<std::string>()) : c.out_dir / "cache";
  c.offline = get_or(j, "offline", false, "config");
  c.max_in_flight = get_or(j, "max_in_flight", 8, "config");
  if (c.max_in_flight < 1) throw ConfigError("config.max_in_flight must be at least 1");
  const auto retry = section(j, "retry");
  check_keys(retry, {"max_attempts", "initial_delay_ms", "max_delay_ms"}, "retry");
  c.retry.max_attempts = get_or(retry, "max_attempts", c.retry.max_attempts, "retry");
  c.retry.initial_delay = std::chrono::milliseconds(
      get_or(retry, "initial_delay_ms", static_cast<int>(c.retry.initial_delay.count()), "retry"));
  c.retry.max_delay = std::chrono::milliseconds(
      get_or(retry, "max_delay_ms", static_cast<int>(c.retry.max_delay.count()), "retry"));
  if (c.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be at least 1");

  const auto endpoints = section(j, "endpoints");
  for (const auto& [id, e] : endpoints.items()) c.endpoints.emplace(id, endpoint_from_json(id, e));
  if (j.contains("embedder")) c.embedder = j["embedder"];
  make_embedder(c.embedder);  // validates

  const auto split = section(j, "split");
  check_keys(split, {"train", "validation", "test"}, "split");
  c.split.train = get_or(split, "train", c.split.train, "split");
  c.split.validation = get_or(split, "validation", c.split.validation, "split");
  c.split.test = get_or(split, "test", c.split.test, "split");

  const auto topics = section(j, "topics");
  check_keys(topics, {"endpoint", "top_k", "mapping_file", "cluster_cutoff", "validation_sample", "threads"}, "topics");
  c.topic_endpoint = get_or<std::string>(topics, "endpoint", "", "topics");
  c.topics.top_k = get_or(topics, "top_k", c.topics.top_k, "topics");
  if (topics.contains("mapping_file")) c.topics.mapping_file = resolve(base_dir, topics["mapping_file"].get<std::string>());
  c.topics.cluster_cutoff = get_or(topics, "cluster_cutoff", c.topics.cluster_cutoff, "topics");
  c.topics.threads = get_or(topics, "threads", c.topics.threads, "topics");
  c.validation_sample = get_or(topics, "validation_sample", c.validation_sample, "topics");

  const auto profiles = section(j, "profiles");
  check_keys(profiles, {"endpoint", "count", "threads"}, "profiles");
  c.profile_endpoint = get_or<std::string>(profiles, "endpoint", "", "profiles");
  c.synthetic_profiles = get_or(profiles, "count", c.synthetic_profiles, "profiles");
  c.profile_threads = get_or(profiles, "threads", c.profile_threads, "profiles");

  const auto pairing = section(j, "pairing");
  check_keys(pairing, {"experiments", "entries_per_experiment"}, "pairing");
  if (pairing.contains("experiments")) {
    for (const auto& e : pairing["experiments"]) {
      const auto id = parse_experiment(e.get<std::string>());
      if (!id) throw ConfigError("pairing.experiments: unknown experiment '" + e.get<std::string>() + "'");
      c.experiments.insert(*id);
    }
  } else {
    for (const auto& t : kExperiments) c.experiments.insert(t.id);
  }
  c.pairing.entries_per_experiment = get_or(pairing, "entries_per_experiment", c.pairing.entries_per_experiment, "pairing");

  const auto gen = section(j, "generation");
  check_keys(gen, {"arms", "turns_total", "biography_sentence_cap", "target_first", "threads"}, "generation");
  c.generator_arms = get_or(gen, "arms", std::vector<std::string>{}, "generation");
  c.generation.turns_total = get_or(gen, "turns_total", c.generation.turns_total, "generation");
  c.generation.biography_sentence_cap = get_or(gen, "biography_sentence_cap", c.generation.biography_sentence_cap, "generation");
  c.generation.target_first = get_or(gen, "target_first", c.generation.target_first, "generation");
  c.generation.threads = get_or(gen, "threads", c.generation.threads, "generation");
  c.generation.validate();
  for (const auto& a : c.generator_arms) {
    need_endpoint(c, a, "generation.arms");
    if (a == "gold") throw ConfigError("generation.arms: 'gold' is reserved for corpus dialogues");
  }

  const auto ev = section(j, "evaluation");
  check_keys(ev, {"disclosures", "include_gold", "bio_cap"}, "evaluation");
  if (ev.contains("disclosures")) {
    c.items.disclosures.clear();
    for (const auto& d : ev["disclosures"]) {
      const auto v = parse_disclosure(d.get<std::string>());
      if (!v) throw ConfigError("evaluation.disclosures: unknown disclosure '" + d.get<std::string>() + "'");
      c.items.disclosures.push_back(*v);
    }
  }
  c.include_gold = get_or(ev, "include_gold", c.include_gold, "evaluation");
  c.items.bio_cap = get_or(ev, "bio_cap", c.items.bio_cap, "evaluation");

  const auto judge = section(j, "judge");
  check_keys(judge, {"endpoints", "threads"}, "judge");
  c.judges = get_or(judge, "endpoints", std::vector<std::string>{}, "judge");
  c.judge_threads = get_or(judge, "threads", c.judge_threads, "judge");
  for (const auto& id : c.judges) {
    if (c.endpoint(need_endpoint(c, id, "judge.endpoints")).mode != DecodingMode::greedy) {
      throw ConfigError("judge endpoint '" + id + "' must use \"mode\": \"greedy\"");
    }
  }

  const auto he = section(j, "human_eval");
  check_keys(he, {"arms", "items", "annotations_per_item", "task_ttl_minutes", "host", "port", "admin_token_env"},
             "human_eval");
  if (he.contains("arms")) c.human_eval.arms = he["arms"].get<std::set<std::string>>();
  c.human_eval.items = get_or(he, "items", c.human_eval.items, "human_eval");
  c.human_eval.annotations_per_item = get_or(he, "annotations_per_item", c.human_eval.annotations_per_item, "human_eval");
  c.human_eval.task_ttl_minutes = get_or(he, "task_ttl_minutes", c.human_eval.task_ttl_minutes, "human_eval");
  c.human_eval.host = get_or(he, "host", c.human_eval.host, "human_eval");
  c.human_eval.port = get_or(he, "port", c.human_eval.port, "human_eval");
  c.human_eval.admin_token_env = get_or(he, "admin_token_env", c.human_eval.admin_token_env, "human_eval");

  const auto rep = section(j, "report");
  check_keys(rep, {"slices", "rare_threshold"}, "report");
  c.report_slices = get_or(rep, "slices", kDefaultSlices, "report");
  c.rare_threshold = get_or(rep, "rare_threshold", c.rare_threshold, "report");
  for (const auto& s : c.report_slices) {
    for (const auto& k : s) {
      if (std::find(kSliceKeys.begin(), kSliceKeys.end(), k) == kSliceKeys.end()) {
        throw ConfigError("report.slices: unknown key '" + k + "'");
      }
    }
  }
  return c;
}

// -- dispatch -----------------------------------------------------------------------------

StageResult run_stage(const std::string& stage, const RunConfig& cfg, const StageOptions& opts) {
  using Fn = StageResult (*)(const RunConfig&, const StageOptions&);
  static const std::map<std::string, Fn> table = {
      {"ingest", stage_ingest},           {"split", stage_split},
      {"annotate-topics", stage_annotate_topics}, {"gen-profiles", stage_gen_profiles},
      {"plan-pairings", stage_plan_pairings},     {"generate", stage_generate},
      {"build-items", stage_build_items},         {"judge", stage_judge},
      {"serve-human-eval", stage_serve},          {"report", stage_report},
  };
  const auto it = table.find(stage);
  if (it == table.end()) throw ConfigError("unknown stage '" + stage + "'");
  fs::create_directories(cfg.out_dir);
  auto r = it->second(cfg, opts);
  r.stage = stage;
  record_manifest(cfg, r);
  return r;
}

std::vector<StageResult> run_all(const RunConfig& cfg, const StageOptions& opts) {
  const bool need_syn = std::any_of(cfg.experiments.begin(), cfg.experiments.end(), needs_synthetic_profiles);
  std::vector<StageResult> out;
  for (const auto& s : kStages) {
    if (s == "serve-human-eval") continue;
    if (s == "gen-profiles" && !need_syn) continue;
    out.push_back(run_stage(s, cfg, opts));
  }
  return out;
}

}  // namespace ph
