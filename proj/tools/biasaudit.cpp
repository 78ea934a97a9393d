#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "biasaudit/executor.hpp"
#include "biasaudit/log.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/stage_files.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kInterrupted = 130 };

}  // namespace

int main(int argc, char** argv) {
  using namespace biasaudit;

  CLI::App app{"Textbook bias audit pipeline: screening, jury, meta synthesis and reports."};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* run = app.add_subcommand("run", "Run or resume the pipeline");
  std::string config_path, preset, strategy, calibration, out_dir, resume;
  bool dry_run = false;
  run->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--preset", preset, "full | single-pass-chunked | single-pass-whole");
  run->add_option("--strategy", strategy, "heuristic | deliberation | prompted-heuristic");
  run->add_option("--calibration", calibration, "Jury calibration sentence")->check(CLI::IsMember({"on", "off"}));
  run->add_option("--out", out_dir, "Run directory (overrides output_dir)");
  run->add_option("--resume", resume, "Recompute from this stage: screening | jury | meta | report")
      ->check(CLI::IsMember({"screening", "jury", "meta", "report"}));
  run->add_flag("--dry-run", dry_run, "Validate and print planned calls and estimated cost");

  auto* stats = app.add_subcommand("stats", "Corpus statistics over verdict files");
  std::vector<std::string> verdict_files;
  std::string summary_out;
  stats->add_option("files", verdict_files, "verdicts.json files")->required()->check(CLI::ExistingFile);
  stats->add_option("--summary", summary_out, "Also write the summary JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (verbose) log().set_level(spdlog::level::debug);

  try {
    if (stats->parsed()) {
      std::vector<std::filesystem::path> paths(verdict_files.begin(), verdict_files.end());
      const auto model = stats_from_files(paths);
      std::cout << render_text(model);
      if (!summary_out.empty()) write_json_file(summary_out, summary_to_json(model));
      return kOk;
    }

    ConfigOverrides overrides;
    if (!preset.empty()) {
      overrides.preset = parse_preset(preset);
      if (!overrides.preset) throw ConfigError("unknown preset '" + preset + "'");
    }
    if (!strategy.empty()) {
      overrides.strategy = parse_strategy_name(strategy);
      if (!overrides.strategy) throw ConfigError("unknown strategy '" + strategy + "'");
    }
    if (!calibration.empty()) overrides.calibration = calibration == "on";
    if (!out_dir.empty()) overrides.output_dir = out_dir;
    const RunConfig cfg = apply_overrides(load_run_config(config_path), overrides);

    if (dry_run) {
      std::cout << format_plan(plan_run(cfg));
      return kOk;
    }

    std::signal(SIGINT, on_interrupt);
    RunOptions options;
    options.stop = &g_stop;
    if (!resume.empty()) options.resume_from = parse_pipeline_stage(resume);
    const auto summary = run_pipeline(cfg, options);
    log().info("event=run_done dir={} batches={} failed_batches={} excerpts={} verdicts={} escalated={} total_usd={}",
               summary.run_dir.string(), summary.batches, summary.failed_batches, summary.excerpts, summary.verdicts,
               summary.escalated, usd(summary.total_nanousd).str());
    return kOk;
  } catch (const Interrupted&) {
    log().warn("event=interrupted detail=\"stopped after in-flight calls; completed stage files are kept\"");
    return kInterrupted;
  } catch (const ConfigError& e) {
    log().error("event=config_error detail=\"{}\"", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log().error("event=failed detail=\"{}\"", e.what());
    return kFailure;
  }
}
