#pragma once

// Runs a configured experiment and renders its outputs: rounds.csv (per-round
// metrics), summary.csv (comparison rows) and report.md.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "fedreview/experiment.hpp"
#include "fedreview/report.hpp"

namespace fedreview {

struct RunOptions {
  bool with_central = false;
  Federator federate = federate_in_process;
  bool write_files = true;
};

struct RunOutputs {
  std::string rounds_csv;
  std::string summary_csv;
  std::string report_md;
  TaskMetricsTable summary;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

inline void write_config_line(std::ostream& out, const ExperimentConfig& cfg) {
  out << "seed " << cfg.seed << ", geometry " << cfg.geometry << ", rounds " << cfg.rounds << ", strategy "
      << cfg.strategy << ", aggregation " << cfg.aggregation << ", lr " << cfg.lr << ", shard_total "
      << cfg.shard_total << "\n\n";
}

inline RunOutputs run_individual_experiment(const ExperimentConfig& cfg, const PreparedData& pd,
                                            const TransformerWeights& vanilla, const MultiTaskPlan& plan,
                                            const RunOptions& opts) {
  RunOutputs out;
  std::ostringstream rounds, report;
  write_metrics_csv_header(rounds);
  report << "# Individual-task federation\n\n";
  write_config_line(report, cfg);

  TableRow vanilla_row{"Vanilla", "0 / 0 / 0", {}};
  TableRow central_row{"Central", "", {}};
  TableRow best_row{"FedBEST", "", {}};
  std::array<std::optional<std::size_t>, 3> best;
  for (Task task : cfg.tasks) {
    const auto i = index_of(task);
    auto ind = run_individual(vanilla, pd.data, task, plan, opts.with_central);
    write_metrics_csv_rows(rounds, ind.run.history(task));
    best[i] = ind.best_round;
    vanilla_row.scores[i] = ind.table.find("Vanilla")->scores[i];
    if (const auto* c = ind.table.find("Central")) central_row.scores[i] = c->scores[i];
    best_row.scores[i] = ind.table.find("Fed@BEST")->scores[i];

    report << "## " << to_string(task) << "\n\nFedBEST round: " << ind.best_round << "\n\n";
    ind.table.write_markdown(report);
    report << '\n';
  }
  best_row.best = best_note(best);
  out.summary.rows.push_back(vanilla_row);
  if (opts.with_central) out.summary.rows.push_back(central_row);
  out.summary.rows.push_back(best_row);

  report << "## Summary\n\n";
  out.summary.write_markdown(report);
  out.rounds_csv = rounds.str();
  out.report_md = report.str();
  return out;
}

inline RunOutputs run_strategy_experiment(const ExperimentConfig& cfg, const PreparedData& pd,
                                          const TransformerWeights& vanilla, const MultiTaskPlan& plan) {
  RunOutputs out;
  auto result = run_strategy(vanilla, pd.data, plan);
  std::ostringstream rounds, report;
  result.table.write_csv(rounds);

  out.summary.rows.push_back({"Vanilla", "0 / 0 / 0", evaluate_multitask(vanilla, pd.data, plan.eval)});
  out.summary.rows.push_back(result.summary);

  report << "# Multi-task federation: " << report_label(result.strategy) << "\n\n";
  write_config_line(report, cfg);
  report << "Best rounds (T1 / T2 / T3): " << best_note(result.best) << "\n\n";
  result.table.write_markdown(report);
  report << "\n## Summary\n\n";
  out.summary.write_markdown(report);
  out.rounds_csv = rounds.str();
  out.report_md = report.str();
  return out;
}

}  // namespace detail

inline RunOutputs run_experiment(const ExperimentConfig& cfg, const PreparedData& pd, const TransformerWeights& vanilla,
                                 const RunOptions& opts = {}) {
  cfg.validate();
  MultiTaskPlan plan = cfg.plan();
  plan.federate = opts.federate;
  if (!opts.write_files) plan.checkpoint_dir.clear();
  RunOutputs out = plan.strategy == StrategyKind::individual
                       ? detail::run_individual_experiment(cfg, pd, vanilla, plan, opts)
                       : detail::run_strategy_experiment(cfg, pd, vanilla, plan);
  std::ostringstream summary;
  out.summary.write_csv(summary);
  out.summary_csv = summary.str();
  if (opts.write_files) {
    std::filesystem::create_directories(cfg.output);
    const std::filesystem::path dir(cfg.output);
    detail::write_text(dir / "rounds.csv", out.rounds_csv);
    detail::write_text(dir / "summary.csv", out.summary_csv);
    detail::write_text(dir / "report.md", out.report_md);
  }
  return out;
}

// ---------------------------------------------------------------- partition

struct PartitionReport {
  std::string markdown;
  std::size_t overlaps = 0;
};

// Writes client_<id>/<task>.jsonl and test/<task>.jsonl under `dir`.
inline PartitionReport write_partition(const PreparedData& pd, const ExperimentConfig& cfg, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::ostringstream md;
  md << "# Partition\n\n";
  detail::write_config_line(md, cfg);
  md << "| Task | Client 0 | Client 1 | Test | Ratio | Client 0 yes/no | Client 1 yes/no | Dropped (too long) | "
        "Project overlaps |\n|---|---:|---:|---:|---|---|---|---:|---|\n";
  PartitionReport out;
  for (Task t : cfg.tasks) {
    const auto i = index_of(t);
    for (std::size_t c = 0; c < pd.data.clients.size(); ++c) {
      const auto sub = root / ("client_" + std::to_string(c));
      std::filesystem::create_directories(sub);
      write_jsonl((sub / (to_string(t) + ".jsonl")).string(), pd.data.clients[c][i]);
    }
    std::filesystem::create_directories(root / "test");
    write_jsonl((root / "test" / (to_string(t) + ".jsonl")).string(), pd.data.tests[i]);

    auto yes_no = [&](const Corpus& c) -> std::string {
      if (kind_of(t) != TaskKind::classification) return "-";
      std::size_t yes = 0;
      for (const auto& r : c.records) yes += (r.label && *r.label) ? 1 : 0;
      return std::to_string(yes) + "/" + std::to_string(c.records.size() - yes);
    };
    const auto& a = pd.data.clients[0][i];
    const auto& b = pd.data.clients[1][i];
    const auto overlap = assert_project_disjoint({&a, &b, &pd.data.tests[i]});
    out.overlaps += overlap.size();
    std::string overlap_text = overlap.empty() ? "none" : "";
    for (const auto& p : overlap) overlap_text += (overlap_text.empty() ? "" : " ") + p;
    md << "| " << to_string(t) << " | " << a.records.size() << " | " << b.records.size() << " | "
       << pd.data.tests[i].records.size() << " | " << cfg.ratio.a << ":" << cfg.ratio.b << " | " << yes_no(a)
       << " | " << yes_no(b) << " | " << pd.dropped_too_long[i] << " | " << overlap_text << " |\n";
  }
  out.markdown = md.str();
  detail::write_text(root / "partition_report.md", out.markdown);
  return out;
}

}  // namespace fedreview
