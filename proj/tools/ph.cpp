// ph: one subcommand per pipeline stage. Exit codes: 0 ok, 2 config error,
// 3 partial failure (each failure is listed on stderr).

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "persona_harness/errors.hpp"
#include "persona_harness/pipeline.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

}  // namespace

int main(int argc, char** argv) {
  auto log = spdlog::stderr_color_mt("ph");
  log->set_pattern("%^%l%$: %v");

  CLI::App app{"Persona dialogue generation and author-identification harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path = "config.json";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> endpoint_specs;
  bool offline = false, quiet = false;
  app.add_option("-c,--config", config_path, "Run configuration (JSON)")->capture_default_str();
  app.add_option("--seed", seed, "Override the config's seed");
  app.add_option("--out", out, "Override the output directory");
  app.add_option("--endpoint", endpoint_specs, "Override an endpoint URL: name=url (repeatable)");
  app.add_flag("--offline", offline, "Serve model calls from the cache only");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  ph::StageOptions opts;
  std::vector<std::string> disclosures;
  std::string only_judge, only_arm, apply_validation;
  std::vector<std::string> slice;
  int port = -1;
  bool exit_when_complete = false;

  std::map<std::string, CLI::App*> subs;
  subs["ingest"] = app.add_subcommand("ingest", "Validate the corpus and copy it into the run directory");
  subs["split"] = app.add_subcommand("split", "Pair-disjoint train/validation/test split");
  subs["annotate-topics"] = app.add_subcommand("annotate-topics", "Label gold dialogues with topic clusters");
  subs["annotate-topics"]->add_option("--apply-validation", apply_validation,
                                      "Copy reviewed labels from an edited validation manifest");
  subs["gen-profiles"] = app.add_subcommand("gen-profiles", "Generate synthetic speaker profiles");
  subs["plan-pairings"] = app.add_subcommand("plan-pairings", "Build the per-experiment pairing plan");
  subs["generate"] = app.add_subcommand("generate", "Generate dialogues for every arm");
  subs["generate"]->add_option("--arm", only_arm, "Only this generator arm");
  subs["build-items"] = app.add_subcommand("build-items", "Build identification items");
  subs["judge"] = app.add_subcommand("judge", "Run the LLM judges over the items");
  subs["judge"]->add_option("--disclosure", disclosures, "Only these disclosure kinds (repeatable)");
  subs["judge"]->add_option("--judge", only_judge, "Only this judge endpoint");
  subs["serve-human-eval"] = app.add_subcommand("serve-human-eval", "Serve the human study over HTTP");
  subs["serve-human-eval"]->add_option("--port", port, "Port (0 picks a free one)");
  subs["serve-human-eval"]->add_flag("--exit-when-complete", exit_when_complete,
                                     "Stop once every item has its judgments");
  subs["report"] = app.add_subcommand("report", "Metrics and overlap tables");
  subs["report"]->add_option("--slice", slice, "Group by these keys (one table), e.g. --slice disclosure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (quiet) log->set_level(spdlog::level::err);

  std::string stage;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) stage = name;
  }

  try {
    ph::RunOverrides ov;
    ov.seed = seed;
    if (out) ov.out_dir = *out;
    for (const auto& s : endpoint_specs) ov.endpoints.push_back(ph::parse_endpoint_override(s));
    if (offline) ov.offline = true;
    const auto cfg = ph::load_run_config(config_path, ov);

    for (const auto& d : disclosures) {
      const auto v = ph::parse_disclosure(d);
      if (!v) throw ph::ConfigError("unknown disclosure '" + d + "' (Both_Disc, Bio_Disc, Turns_Disc, Both_Mask)");
      opts.disclosures.push_back(*v);
    }
    if (!only_judge.empty()) opts.only_judge = only_judge;
    if (!only_arm.empty()) opts.only_arm = only_arm;
    if (!apply_validation.empty()) opts.apply_validation = apply_validation;
    opts.slice = slice;
    if (port >= 0) opts.port = port;
    opts.exit_when_complete = exit_when_complete;
    if (stage == "serve-human-eval") {
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      opts.stop = &g_stop;
      opts.on_ready = [&](int p, const std::string& token) {
        log->info("serving the study on http://{}:{}", cfg.human_eval.host, p);
        if (!token.empty()) {
          log->warn("{} is not set; generated admin token: {}", cfg.human_eval.admin_token_env, token);
        }
      };
    }

    const auto r = ph::run_stage(stage, cfg, opts);
    for (const auto& n : r.notes) log->warn("{}", n);
    if (!r.text.empty()) std::cout << r.text << std::flush;
    log->info("{}: {}", stage, r.counts.dump());
    for (const auto& o : r.outputs) log->info("wrote {}", (cfg.out_dir / o).string());
    if (r.partial()) {
      log->error("{} finished with {} failure(s):", stage, r.problems.size());
      for (const auto& p : r.problems) log->error("  {}", p);
      return kExitPartial;
    }
    return kExitOk;
  } catch (const ph::ConfigError& e) {
    log->error("{}", e.what());
    return kExitConfig;
  } catch (const ph::SchemaError& e) {
    log->error("{}", e.what());
    return kExitConfig;
  } catch (const ph::ReferentialError& e) {
    log->error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return kExitFailure;
  }
}
