#include "biasaudit/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "biasaudit/jury.hpp"
#include "biasaudit/log.hpp"
#include "biasaudit/meta.hpp"
#include "biasaudit/single_pass.hpp"
#include "biasaudit/stage_files.hpp"

namespace biasaudit {

namespace fs = std::filesystem;

std::string_view to_string(PipelineStage s) {
  switch (s) {
    case PipelineStage::Screening:
      return "screening";
    case PipelineStage::Jury:
      return "jury";
    case PipelineStage::Meta:
      return "meta";
    case PipelineStage::Report:
      return "report";
  }
  return "?";
}

std::optional<PipelineStage> parse_pipeline_stage(std::string_view text) {
  for (auto s : {PipelineStage::Screening, PipelineStage::Jury, PipelineStage::Meta, PipelineStage::Report}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

namespace {

std::string replace_all(std::string text, std::string_view from, const std::string& to) {
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

void render_pages(const RunConfig& cfg, DocumentManifest& m) {
  if (!cfg.renderer_command) {
    throw MissingInput("document " + m.document_id + " has no page images and no renderer is configured");
  }
  fs::create_directories(*m.page_dir);
  std::string command = replace_all(*cfg.renderer_command, "{pdf}", m.source_pdf->string());
  command = replace_all(command, "{out}", m.page_dir->string());
  log().info("event=render doc={} command=\"{}\"", m.document_id, command);
  if (std::system(command.c_str()) != 0) throw MissingInput("renderer failed for document " + m.document_id);
  m.pages = list_page_images(*m.page_dir);
}

}  // namespace

std::vector<DocumentManifest> load_documents(const RunConfig& cfg) {
  std::vector<DocumentManifest> docs;
  std::set<std::string> ids;
  for (const auto& path : cfg.documents) {
    if (!fs::exists(path)) throw MissingInput("manifest not found: " + path.string());
    DocumentManifest m;
    try {
      m = load_manifest(path);
    } catch (const std::exception& e) {
      throw MissingInput(e.what());
    }
    if (!ids.insert(m.document_id).second) throw ConfigError("duplicate document_id " + m.document_id);
    if (m.pages.empty() && m.source_pdf && m.page_dir) render_pages(cfg, m);
    for (const auto& page : m.pages) {
      if (!fs::is_regular_file(page)) throw MissingInput("page image not found: " + page.string());
    }
    docs.push_back(std::move(m));
  }
  return docs;
}

namespace {

std::vector<DocumentSummary> summarize_documents(const std::vector<DocumentScreening>& screening) {
  std::vector<DocumentSummary> out;
  for (const auto& d : screening) {
    DocumentSummary s{d.document_id, d.page_count, static_cast<int>(d.batches.size()), 0, 0};
    for (const auto& b : d.batches) {
      s.failed_batches += b.failure.has_value();
      s.excerpts += static_cast<int>(b.excerpts.size());
    }
    out.push_back(s);
  }
  return out;
}

void check_screening_reachable(const std::vector<DocumentScreening>& docs) {
  std::size_t batches = 0, unreachable = 0;
  for (const auto& d : docs) {
    for (const auto& b : d.batches) {
      ++batches;
      unreachable += b.backend_failure;
    }
  }
  if (batches > 0 && unreachable == batches) {
    throw FatalBackendError("screening backend unreachable: every batch failed at the transport level");
  }
}

void check_jury_reachable(const std::vector<JuryRecord>& records) {
  std::size_t outcomes = 0, unreachable = 0;
  for (const auto& r : records) {
    outcomes += r.juror_count();
    for (const auto& f : r.failures) unreachable += f.backend_error;
  }
  if (outcomes > 0 && unreachable == outcomes) {
    throw FatalBackendError("jury backends unreachable: every juror call failed at the transport level");
  }
}

class Run {
 public:
  Run(const RunConfig& cfg, BackendSet& backends, const RunOptions& options)
      : cfg_(cfg),
        options_(options),
        dir_(cfg.output_dir),
        taxonomy_(load_run_taxonomy(cfg)),
        gateway_(backends.bindings, backends.prices, ledger_) {}

  RunSummary execute() {
    fs::create_directories(dir_);
    write_json_file(dir_ / kConfigSnapshotFile, run_config_to_json(cfg_));
    const PipelineStage from = options_.resume_from.value_or(PipelineStage::Screening);
    if (from != PipelineStage::Screening) {
      ledger_ = read_ledger_file(dir_ / kLedgerFile);
      if (from == PipelineStage::Jury) ledger_.drop_stage(Stage::Jury);
      if (from == PipelineStage::Jury || from == PipelineStage::Meta) ledger_.drop_stage(Stage::Meta);
    }
    if (from == PipelineStage::Jury && is_single_pass(cfg_.preset)) {
      throw ConfigError("single-pass runs have no separate jury stage; resume from screening or meta");
    }

    if (from <= PipelineStage::Screening) screen();
    if (from <= PipelineStage::Jury && !is_single_pass(cfg_.preset)) adjudicate();
    if (from <= PipelineStage::Meta) synthesize_verdicts();
    report();
    summary_.run_dir = dir_;
    summary_.total_nanousd = ledger_.total_nanousd();
    return summary_;
  }

 private:
  std::size_t workers() const { return static_cast<std::size_t>(cfg_.global_concurrency); }

  void save_ledger() { write_json_file(dir_ / kLedgerFile, ledger_to_json(ledger_)); }

  void screen() {
    const auto docs = load_documents(cfg_);
    if (is_single_pass(cfg_.preset)) {
      SinglePassSettings settings{cfg_.single_pass_backend, load_prompt(cfg_, PromptKind::SinglePass), cfg_.calibration,
                                  cfg_.max_attempts, cfg_.single_pass_temperature};
      const int batch_size = cfg_.preset == Preset::SinglePassWhole ? 0 : cfg_.batch_size;
      auto run = single_pass_documents(docs, batch_size, settings, gateway_, taxonomy_, workers(), options_.stop);
      check_screening_reachable(run.documents);
      screening_ = {std::move(run.documents)};
      jury_ = JuryFile{{cfg_.single_pass_backend}, taxonomy_, std::move(run.records)};
      write_json_file(dir_ / kScreeningFile, screening_to_json(screening_));
      write_json_file(dir_ / kJuryFile, jury_to_json(jury_));
    } else {
      ScreeningSettings settings{cfg_.screening_backend, load_prompt(cfg_, PromptKind::Screening), cfg_.max_attempts,
                                 cfg_.screening_temperature};
      auto result = screen_documents(docs, cfg_.batch_size, settings, gateway_, workers(), options_.stop);
      check_screening_reachable(result);
      screening_ = {std::move(result)};
      write_json_file(dir_ / kScreeningFile, screening_to_json(screening_));
    }
    save_ledger();
    summary_.stages_run.push_back(PipelineStage::Screening);
    int excerpts = 0, failed = 0, batches = 0;
    for (const auto& d : screening_.documents) {
      for (const auto& b : d.batches) {
        ++batches;
        failed += b.failure.has_value();
        excerpts += static_cast<int>(b.excerpts.size());
      }
    }
    log().info("event=stage_done stage=screening documents={} batches={} failed_batches={} excerpts={}",
               screening_.documents.size(), batches, failed, excerpts);
  }

  void adjudicate() {
    if (summary_.stages_run.empty()) screening_ = read_screening_file(dir_ / kScreeningFile);
    std::vector<FlaggedExcerpt> excerpts;
    for (const auto& d : screening_.documents) {
      auto e = d.excerpts();
      excerpts.insert(excerpts.end(), e.begin(), e.end());
    }
    JurySettings settings{cfg_.jurors, load_prompt(cfg_, PromptKind::Jury), cfg_.calibration, cfg_.max_attempts,
                          cfg_.jury_temperature, cfg_.block_rule};
    auto records = adjudicate_all(excerpts, settings, gateway_, taxonomy_, workers(), options_.stop);
    check_jury_reachable(records);
    jury_ = JuryFile{cfg_.jurors, taxonomy_, std::move(records)};
    write_json_file(dir_ / kJuryFile, jury_to_json(jury_));
    save_ledger();
    summary_.stages_run.push_back(PipelineStage::Jury);
    std::size_t complete = 0;
    for (const auto& r : jury_.records) complete += r.complete();
    log().info("event=stage_done stage=jury excerpts={} complete={}", jury_.records.size(), complete);
  }

  void synthesize_verdicts() {
    if (summary_.stages_run.empty()) jury_ = read_jury_file(dir_ / kJuryFile);
    MetaSettings settings;
    settings.backend_id = cfg_.meta_backend;
    settings.aggregation = cfg_.aggregation;
    settings.aggregation.strategy = effective_strategy(cfg_);
    settings.deliberation_prompt = load_prompt(cfg_, PromptKind::Deliberation);
    settings.heuristic_prompt = load_prompt(cfg_, PromptKind::PromptedHeuristic);
    settings.max_attempts = cfg_.max_attempts;
    settings.temperature = cfg_.meta_temperature;
    settings.block_rule = cfg_.block_rule;
    auto verdicts = synthesize_all(jury_.records, settings, &gateway_, jury_.taxonomy, workers(), options_.stop);
    verdicts_ = VerdictsFile{settings.aggregation.strategy, jury_.taxonomy, jury_.records, std::move(verdicts)};
    write_json_file(dir_ / kVerdictsFile, verdicts_to_json(verdicts_));
    save_ledger();
    summary_.stages_run.push_back(PipelineStage::Meta);
    int fallbacks = 0, escalated = 0;
    for (const auto& v : verdicts_.verdicts) {
      if (!v) continue;
      fallbacks += v->fallback;
      escalated += v->human_review;
    }
    log().info("event=stage_done stage=meta strategy={} verdicts={} escalated={} fallbacks={}",
               to_string(settings.aggregation.strategy), verdicts_.verdicts.size(), escalated, fallbacks);
  }

  void report() {
    if (summary_.stages_run.empty()) {
      verdicts_ = read_verdicts_file(dir_ / kVerdictsFile);
      screening_ = read_screening_file(dir_ / kScreeningFile);
    } else if (screening_.documents.empty()) {
      screening_ = read_screening_file(dir_ / kScreeningFile);
    }
    auto model = build_report_model("Bias audit report", summarize_documents(screening_.documents),
                                    verdicts_.records, verdicts_.verdicts, &ledger_);
    write_reports(dir_, model);
    summary_.stages_run.push_back(PipelineStage::Report);
    for (const auto& d : model.documents) {
      ++summary_.documents;
      summary_.batches += d.batches;
      summary_.failed_batches += d.failed_batches;
      summary_.excerpts += d.excerpts;
    }
    summary_.verdicts = static_cast<int>(model.items.size());
    summary_.unresolved = static_cast<int>(model.unresolved.size());
    summary_.escalated = static_cast<int>(model.agreement.escalation_count);
    log().info("event=stage_done stage=report verdicts={} unresolved={} total_usd={}", summary_.verdicts,
               summary_.unresolved, usd(ledger_.total_nanousd()).str());
  }

  const RunConfig& cfg_;
  const RunOptions& options_;
  fs::path dir_;
  TaxonomyRegistry taxonomy_;
  CostLedger ledger_;
  ModelGateway gateway_;
  ScreeningFile screening_;
  JuryFile jury_;
  VerdictsFile verdicts_;
  RunSummary summary_;
};

}  // namespace

RunSummary run_pipeline(const RunConfig& cfg, BackendSet& backends, const RunOptions& options) {
  validate_run_config(cfg);
  Run run(cfg, backends, options);
  return run.execute();
}

RunSummary run_pipeline(const RunConfig& cfg, const RunOptions& options) {
  validate_run_config(cfg);
  BackendSet backends = make_backends(cfg);
  return run_pipeline(cfg, backends, options);
}

void write_reports(const fs::path& run_dir, const ReportModel& model) {
  write_json_file(run_dir / kSummaryFile, summary_to_json(model));
  write_text_file(run_dir / kReportFile, render_html(model));
  for (const auto& d : model.documents) {
    write_text_file(run_dir / kDocumentReportDir / (d.document_id + ".html"),
                    render_html(document_report_model(model, d.document_id)));
  }
}

namespace {

std::int64_t approx_tokens(const PromptTemplate& t) {
  return static_cast<std::int64_t>((t.system.size() + t.user.size()) / 4);
}

std::int64_t call_cost(const Price& price, std::int64_t input_tokens, std::int64_t output_tokens) {
  return token_cost_nanousd(input_tokens, price.input_nano_per_million) +
         token_cost_nanousd(output_tokens, price.output_nano_per_million);
}

Price price_of(const BackendSpec& s) {
  return Price::from_usd_per_million(s.input_usd_per_million, s.output_usd_per_million);
}

}  // namespace

DryRunPlan plan_run(const RunConfig& cfg) {
  validate_run_config(cfg);
  DryRunPlan plan;
  std::vector<int> batch_pages;
  for (const auto& path : cfg.documents) {
    if (!fs::exists(path)) throw MissingInput("manifest not found: " + path.string());
    const auto m = load_manifest(path);
    ++plan.documents;
    const int pages = static_cast<int>(m.pages.size());
    if (pages == 0 && m.source_pdf) {
      plan.notes.push_back("document " + m.document_id + " is not rendered yet; its pages are not counted");
    }
    for (const auto& page : m.pages) {
      if (!fs::is_regular_file(page)) throw MissingInput("page image not found: " + page.string());
    }
    plan.pages += pages;
    const int size = cfg.preset == Preset::SinglePassWhole ? std::max(pages, 1) : cfg.batch_size;
    for (const auto& r : make_batches(pages, size)) batch_pages.push_back(r.size());
  }
  plan.batches = static_cast<int>(batch_pages.size());
  const std::int64_t attempts = cfg.max_attempts;

  auto page_stage = [&](const std::string& name, const BackendSpec& spec, PromptKind kind) {
    PlannedStage s{name, spec.id, plan.batches, plan.batches * attempts, 0, 0};
    const Price price = price_of(spec);
    for (int pages : batch_pages) {
      const std::int64_t in = approx_tokens(load_prompt(cfg, kind)) +
                              static_cast<std::int64_t>(pages) * cfg.estimate.input_tokens_per_page;
      const std::int64_t one = call_cost(price, in, spec.max_output_tokens);
      s.expected_nanousd += one;
      s.upper_bound_nanousd += one * attempts;
    }
    return s;
  };

  if (is_single_pass(cfg.preset)) {
    plan.stages.push_back(page_stage("single-pass", cfg.backends.at(cfg.single_pass_backend), PromptKind::SinglePass));
  } else {
    plan.stages.push_back(page_stage("screening", cfg.backends.at(cfg.screening_backend), PromptKind::Screening));
    plan.estimated_excerpts = static_cast<std::int64_t>(plan.batches) * cfg.estimate.excerpts_per_batch;
    plan.notes.push_back(fmt::format("jury and meta figures assume {} flagged excerpts per batch",
                                     cfg.estimate.excerpts_per_batch));

    constexpr std::int64_t kExcerptTokens = 300;
    PlannedStage jury{"jury", "", 0, 0, 0, 0};
    const std::int64_t jury_in = approx_tokens(load_prompt(cfg, PromptKind::Jury)) + kExcerptTokens;
    for (const auto& id : cfg.jurors) {
      const auto& spec = cfg.backends.at(id);
      jury.backend_ids += (jury.backend_ids.empty() ? "" : ",") + id;
      const std::int64_t one = call_cost(price_of(spec), jury_in, spec.max_output_tokens);
      jury.calls += plan.estimated_excerpts;
      jury.max_calls += plan.estimated_excerpts * attempts;
      jury.expected_nanousd += one * plan.estimated_excerpts;
      jury.upper_bound_nanousd += one * plan.estimated_excerpts * attempts;
    }
    plan.stages.push_back(jury);

    if (cfg.aggregation.strategy != VerdictStrategy::Heuristic) {
      const auto& spec = cfg.backends.at(cfg.meta_backend);
      const PromptKind kind = cfg.aggregation.strategy == VerdictStrategy::PromptedHeuristic
                                  ? PromptKind::PromptedHeuristic
                                  : PromptKind::Deliberation;
      const std::int64_t in = approx_tokens(load_prompt(cfg, kind)) + kExcerptTokens +
                              static_cast<std::int64_t>(cfg.jurors.size()) * kExcerptTokens;
      const std::int64_t one = call_cost(price_of(spec), in, spec.max_output_tokens);
      plan.stages.push_back({"meta", spec.id, plan.estimated_excerpts, plan.estimated_excerpts * attempts,
                             one * plan.estimated_excerpts, one * plan.estimated_excerpts * attempts});
    } else {
      plan.stages.push_back({"meta", "(heuristic, in process)", 0, 0, 0, 0});
    }
  }
  plan.notes.push_back("output tokens are taken at each backend's max_output_tokens budget");
  for (const auto& s : plan.stages) {
    plan.expected_nanousd += s.expected_nanousd;
    plan.upper_bound_nanousd += s.upper_bound_nanousd;
  }
  return plan;
}

std::string format_plan(const DryRunPlan& plan) {
  std::ostringstream out;
  out << fmt::format("documents {}  pages {}  batches {}\n", plan.documents, plan.pages, plan.batches);
  std::size_t width = 8;
  for (const auto& s : plan.stages) width = std::max(width, s.backend_ids.size());
  out << fmt::format("{:<12} {:<{}} {:>8} {:>10} {:>14} {:>14}\n", "stage", "backends", width, "calls", "max calls",
                     "expected USD", "max USD");
  for (const auto& s : plan.stages) {
    out << fmt::format("{:<12} {:<{}} {:>8} {:>10} {:>14} {:>14}\n", s.name, s.backend_ids, width, s.calls,
                       s.max_calls, usd(s.expected_nanousd).str(), usd(s.upper_bound_nanousd).str());
  }
  out << fmt::format("total expected ${}, upper bound ${}\n", usd(plan.expected_nanousd).str(),
                     usd(plan.upper_bound_nanousd).str());
  for (const auto& n : plan.notes) out << "note: " << n << "\n";
  return out.str();
}

ReportModel stats_from_files(const std::vector<fs::path>& verdict_files) {
  if (verdict_files.empty()) throw std::invalid_argument("stats needs at least one verdict file");
  std::vector<JuryRecord> records;
  std::vector<std::optional<FinalVerdict>> verdicts;
  for (const auto& path : verdict_files) {
    auto file = read_verdicts_file(path);
    records.insert(records.end(), file.records.begin(), file.records.end());
    verdicts.insert(verdicts.end(), file.verdicts.begin(), file.verdicts.end());
  }
  std::string title = "Verdict statistics:";
  for (const auto& p : verdict_files) title += " " + p.string();
  return build_report_model(title, {}, records, verdicts, nullptr);
}

}  // namespace biasaudit
