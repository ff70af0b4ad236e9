#pragma once

// Experiment schedules over the federation loop: individual-task federation
// and the five multi-task strategies (task-of-clients, client-of-tasks,
// concurrent adapters, cumulative mixed data, cumulative with a separate
// classifier).

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedreview/federation.hpp"

namespace fedreview {

enum class StrategyKind { individual, toc, cot, cat, cft, cft_reg };

inline constexpr std::array<StrategyKind, 5> kMultiTaskStrategies{StrategyKind::toc, StrategyKind::cot,
                                                                  StrategyKind::cat, StrategyKind::cft,
                                                                  StrategyKind::cft_reg};

inline std::string to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::individual:
      return "individual";
    case StrategyKind::toc:
      return "toc";
    case StrategyKind::cot:
      return "cot";
    case StrategyKind::cat:
      return "cat";
    case StrategyKind::cft:
      return "cft";
    case StrategyKind::cft_reg:
      return "cft_reg";
  }
  return "?";
}

// Row label used in comparison reports.
inline std::string report_label(StrategyKind s) {
  switch (s) {
    case StrategyKind::individual:
      return "FedBEST";
    case StrategyKind::toc:
      return "TOC";
    case StrategyKind::cot:
      return "COT";
    case StrategyKind::cat:
      return "CAT";
    case StrategyKind::cft:
      return "CFT";
    case StrategyKind::cft_reg:
      return "CFT-reg";
  }
  return "?";
}

inline StrategyKind parse_strategy(std::string_view s) {
  for (StrategyKind k : {StrategyKind::individual, StrategyKind::toc, StrategyKind::cot, StrategyKind::cat,
                         StrategyKind::cft, StrategyKind::cft_reg}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

// Runs one federation; swapped out to move the rounds onto sockets.
using Federator = std::function<FederationResult(const TransformerWeights& start, const std::vector<ClientSpec>& clients,
                                                 const LoraConfig& config, const TrainHyper& hyper,
                                                 const FedConfig& fc, const Evaluator& evaluate)>;

inline FederationResult federate_in_process(const TransformerWeights& start, const std::vector<ClientSpec>& clients,
                                            const LoraConfig& config, const TrainHyper& hyper, const FedConfig& fc,
                                            const Evaluator& evaluate) {
  return run_federation(start, clients, config, hyper, fc, evaluate);
}

// Per-client task shards plus the shared test corpora.
struct MultiTaskData {
  std::vector<std::array<Corpus, 3>> clients;  // clients[c][task]
  std::array<Corpus, 3> tests;
  Vocabulary vocab;
};

struct MultiTaskPlan {
  StrategyKind strategy = StrategyKind::individual;
  std::array<LoraConfig, 3> task_configs{task_profile(Task::t1), task_profile(Task::t2), task_profile(Task::t3)};
  LoraConfig shared_config = multitask_profile();
  std::array<Task, 3> order{Task::t1, Task::t2, Task::t3};
  std::size_t rounds = 20;
  AggregationPolicy policy{};
  bool cat_equal_task_weights = true;
  bool continue_adapters = false;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
  std::string checkpoint_dir;  // empty: no checkpoints
  TrainHyper hyper{};
  EvalOptions eval{};
  Federator federate = federate_in_process;

  void validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    for (const auto& c : task_configs) c.validate();
    shared_config.validate();
    std::array<bool, 3> seen{};
    for (Task t : order) {
      if (seen[index_of(t)]) throw ConfigError("task order repeats " + to_string(t));
      seen[index_of(t)] = true;
    }
    hyper.validate();
  }

  FedConfig fed_config(const std::string& lineage, const std::string& subdir) const {
    FedConfig fc;
    fc.rounds = rounds;
    fc.policy = policy;
    fc.continue_adapters = continue_adapters;
    fc.seed = seed;
    fc.lineage = lineage;
    fc.jobs = jobs;
    if (!checkpoint_dir.empty()) fc.checkpoint_dir = (std::filesystem::path(checkpoint_dir) / subdir).string();
    return fc;
  }
};

// ---------------------------------------------------------------- tables

struct TableRow {
  std::string label;
  std::string best;  // e.g. "1 / 8 / 2"; empty when not applicable
  TaskScoreSet scores;
};

struct TaskMetricsTable {
  std::vector<TableRow> rows;

  const TableRow* find(std::string_view label) const {
    for (const auto& r : rows) {
      if (r.label == label) return &r;
    }
    return nullptr;
  }

  // round,task,metric,value_percent with the row label in the round column.
  void write_csv(std::ostream& out, bool header = true) const {
    if (header) write_metrics_csv_header(out);
    for (const auto& row : rows) {
      for (Task t : kAllTasks) {
        const auto& s = row.scores[index_of(t)];
        if (!s) continue;
        const auto& names = metric_names(kind_of(t));
        for (std::size_t m = 0; m < 3; ++m) {
          out << row.label << ',' << to_string(t) << ',' << names[m] << ',' << format_percent((*s)[m]) << '\n';
        }
      }
    }
  }

  void write_markdown(std::ostream& out) const {
    out << "| Model | BEST | T1 P | T1 R | T1 F1 | T2 C-BLEU | T2 METEOR | T2 ROUGE-L | T3 C-BLEU | T3 METEOR | T3 ROUGE-L |\n";
    out << "|---|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    char buf[32];
    for (const auto& row : rows) {
      out << "| " << row.label << " | " << (row.best.empty() ? "-" : row.best) << " |";
      for (const auto& s : row.scores) {
        for (std::size_t m = 0; m < 3; ++m) {
          if (s) {
            std::snprintf(buf, sizeof buf, " %.3f |", 100.0 * (*s)[m]);
            out << buf;
          } else {
            out << " - |";
          }
        }
      }
      out << '\n';
    }
  }
};

inline std::string best_note(const std::array<std::optional<std::size_t>, 3>& best) {
  std::string s;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i) s += " / ";
    s += best[i] ? std::to_string(*best[i]) : "-";
  }
  return s;
}

// ---------------------------------------------------------------- helpers

inline std::array<const Corpus*, 3> test_pointers(const MultiTaskData& data, std::initializer_list<Task> tasks) {
  std::array<const Corpus*, 3> out{};
  for (Task t : tasks) out[index_of(t)] = &data.tests[index_of(t)];
  return out;
}

inline std::vector<ClientSpec> single_task_clients(const MultiTaskData& data, Task task) {
  std::vector<ClientSpec> out;
  for (std::size_t c = 0; c < data.clients.size(); ++c) {
    out.push_back(single_task_client(static_cast<std::uint32_t>(c), data.clients[c][index_of(task)], data.vocab));
  }
  return out;
}

// Seeded shuffle of the concatenated task shards of one client.
inline std::vector<TrainingExample> mixed_examples(const std::array<Corpus, 3>& shards, std::initializer_list<Task> tasks,
                                                   const Vocabulary& vocab, std::uint64_t seed, std::uint32_t client) {
  std::vector<TrainingExample> out;
  for (Task t : tasks) {
    auto ex = make_examples(shards[index_of(t)], vocab);
    out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  Rng rng(derive_seed(seed, {hash_tag("mix"), client}));
  shuffle(std::span<TrainingExample>(out), rng);
  return out;
}

inline std::string individual_lineage(Task t) { return "individual/" + to_string(t); }

// Per-task best rounds over a history that evaluated the given tasks.
inline std::array<std::optional<std::size_t>, 3> best_rounds(const FederationResult& r, std::initializer_list<Task> tasks) {
  std::array<std::optional<std::size_t>, 3> out;
  for (Task t : tasks) out[index_of(t)] = select_best_round(r.history(t), kind_of(t));
  return out;
}

// ---------------------------------------------------------------- individual

struct IndividualResult {
  Task task = Task::t1;
  FederationResult run;
  std::size_t best_round = 1;
  TaskMetricsTable table;  // Vanilla / [Central] / Client x@1 / Fed@1 / Fed@BEST
};

// One adapter set trained for one epoch on all client shards concatenated.
inline Scores central_scores(const TransformerWeights& vanilla, const MultiTaskData& data, Task task,
                             const LoraConfig& config, const MultiTaskPlan& plan) {
  std::vector<TrainingExample> all;
  for (const auto& shards : data.clients) {
    auto ex = make_examples(shards[index_of(task)], data.vocab);
    all.insert(all.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  AdapterSet adapters = init_adapters(vanilla.geometry, config, derive_seed(plan.seed, {hash_tag("central-init"), hash_tag(to_string(task))}));
  train_adapters(vanilla, adapters, all, plan.hyper, derive_seed(plan.seed, {hash_tag("central"), hash_tag(to_string(task))}));
  return evaluate_task(merge(vanilla, adapters), nullptr, data.tests[index_of(task)], data.vocab, plan.eval);
}

inline IndividualResult run_individual(const TransformerWeights& vanilla, const MultiTaskData& data, Task task,
                                       const MultiTaskPlan& plan, bool with_central = false) {
  plan.validate();
  const LoraConfig& config = plan.task_configs[index_of(task)];
  const auto clients = single_task_clients(data, task);
  const FedConfig fc = plan.fed_config(individual_lineage(task), "individual_" + to_string(task));
  IndividualResult out;
  out.task = task;
  out.run = plan.federate(vanilla, clients, config, plan.hyper, fc,
                           corpus_evaluator(test_pointers(data, {task}), data.vocab, plan.eval));
  out.best_round = select_best_round(out.run.history(task), kind_of(task));

  auto row = [&](std::string label, std::string best, Scores s) {
    TableRow r{std::move(label), std::move(best), {}};
    r.scores[index_of(task)] = s;
    out.table.rows.push_back(std::move(r));
  };
  const auto& test = data.tests[index_of(task)];
  row("Vanilla", "0", *out.run.records[0].scores[index_of(task)]);
  if (with_central) row("Central", "", central_scores(vanilla, data, task, config, plan));
  for (const auto& u : out.run.updates.empty() ? std::vector<AdapterUpdate>{} : out.run.updates.front()) {
    AdapterSet alone = import_state(vanilla.geometry, config, u.entries);
    const std::string name = std::string("Client ") + static_cast<char>('a' + u.client_id % 26) + "@1";
    row(name, "1", evaluate_task(merge(vanilla, alone), nullptr, test, data.vocab, plan.eval));
  }
  row("Fed@1", "1", *out.run.records[1].scores[index_of(task)]);
  row("Fed@BEST", std::to_string(out.best_round), *out.run.records[out.best_round].scores[index_of(task)]);
  return out;
}

// ---------------------------------------------------------------- multi-task

struct MultiTaskResult {
  StrategyKind strategy = StrategyKind::toc;
  std::vector<FederationResult> runs;  // stages (TOC) or lineages (CFT-reg: classification, regression)
  TaskMetricsTable table;
  TableRow summary;  // the strategy's comparison row
  std::array<std::optional<std::size_t>, 3> best;
};

inline TaskScoreSet evaluate_multitask(const TransformerWeights& model, const MultiTaskData& data,
                                       const EvalOptions& opts) {
  return evaluate_all(model, test_pointers(data, {Task::t1, Task::t2, Task::t3}), data.vocab, opts);
}

// Per-round rows "Fed@t" for every evaluated round plus a FedBEST row taking
// each task's scores at its own best round.
inline void append_round_rows(TaskMetricsTable& table, const FederationResult& run, const std::string& prefix) {
  for (const auto& rec : run.records) table.rows.push_back({prefix + "@" + std::to_string(rec.round), std::to_string(rec.round), rec.scores});
}

inline TableRow best_row(const std::string& label, const std::array<std::optional<std::size_t>, 3>& best,
                         const std::array<const FederationResult*, 3>& source) {
  TableRow row{label, best_note(best), {}};
  for (Task t : kAllTasks) {
    const auto i = index_of(t);
    if (best[i] && source[i]) row.scores[i] = source[i]->records[*best[i]].scores[i];
  }
  return row;
}

// Sequential federations, one per task, each starting from the previous
// stage's best-round model.
inline MultiTaskResult run_toc(const TransformerWeights& vanilla, const MultiTaskData& data, const MultiTaskPlan& plan) {
  plan.validate();
  MultiTaskResult out;
  out.strategy = StrategyKind::toc;
  TransformerWeights current = vanilla;
  std::string name = "M";
  for (Task task : plan.order) {
    const auto clients = single_task_clients(data, task);
    const FedConfig fc = plan.fed_config("toc/" + to_string(task), "toc_" + to_string(task));
    auto run = plan.federate(current, clients, plan.task_configs[index_of(task)], plan.hyper, fc,
                              corpus_evaluator(test_pointers(data, {task}), data.vocab, plan.eval));
    const std::size_t best = select_best_round(run.history(task), kind_of(task));
    out.best[index_of(task)] = best;
    current = run.models[best];
    name += std::to_string(index_of(task) + 1);
    out.table.rows.push_back({name, std::to_string(best), evaluate_multitask(current, data, plan.eval)});
    out.runs.push_back(std::move(run));
  }
  out.summary = {report_label(StrategyKind::toc), best_note(out.best), out.table.rows.back().scores};
  out.table.rows.push_back(out.summary);
  return out;
}

inline MultiTaskResult finish_single_run(StrategyKind kind, FederationResult run) {
  MultiTaskResult out;
  out.strategy = kind;
  out.best = best_rounds(run, {Task::t1, Task::t2, Task::t3});
  append_round_rows(out.table, run, "Fed");
  out.summary = best_row(report_label(kind), out.best, {&run, &run, &run});
  out.table.rows.push_back(out.summary);
  out.runs.push_back(std::move(run));
  return out;
}

// Each client trains one adapter set on its tasks in sequence every round.
inline MultiTaskResult run_cot(const TransformerWeights& vanilla, const MultiTaskData& data, const MultiTaskPlan& plan) {
  plan.validate();
  std::vector<ClientSpec> clients;
  for (std::size_t c = 0; c < data.clients.size(); ++c) {
    ClientJob job{"cot", {}};
    for (Task t : plan.order) job.stages.push_back({to_string(t), make_examples(data.clients[c][index_of(t)], data.vocab)});
    clients.push_back({static_cast<std::uint32_t>(c), {std::move(job)}});
  }
  auto run = plan.federate(vanilla, clients, plan.shared_config, plan.hyper, plan.fed_config("cot", "cot"),
                            corpus_evaluator(test_pointers(data, {Task::t1, Task::t2, Task::t3}), data.vocab, plan.eval));
  return finish_single_run(StrategyKind::cot, std::move(run));
}

// Each client trains a separate adapter set per task; all of them are averaged.
inline MultiTaskResult run_cat(const TransformerWeights& vanilla, const MultiTaskData& data, const MultiTaskPlan& plan) {
  plan.validate();
  std::vector<ClientSpec> clients;
  for (std::size_t c = 0; c < data.clients.size(); ++c) {
    ClientSpec spec{static_cast<std::uint32_t>(c), {}};
    for (Task t : plan.order) {
      spec.jobs.push_back({to_string(t), {{to_string(t), make_examples(data.clients[c][index_of(t)], data.vocab)}}});
    }
    clients.push_back(std::move(spec));
  }
  FedConfig fc = plan.fed_config("cat", "cat");
  fc.equal_task_weights = plan.cat_equal_task_weights;
  auto run = plan.federate(vanilla, clients, plan.shared_config, plan.hyper, fc,
                            corpus_evaluator(test_pointers(data, {Task::t1, Task::t2, Task::t3}), data.vocab, plan.eval));
  return finish_single_run(StrategyKind::cat, std::move(run));
}

inline std::vector<ClientSpec> mixed_clients(const MultiTaskData& data, std::initializer_list<Task> tasks,
                                             std::uint64_t seed, const std::string& tag) {
  std::vector<ClientSpec> clients;
  for (std::size_t c = 0; c < data.clients.size(); ++c) {
    const auto id = static_cast<std::uint32_t>(c);
    clients.push_back({id, {{tag, {{tag, mixed_examples(data.clients[c], tasks, data.vocab, seed, id)}}}}});
  }
  return clients;
}

// Standard federation over each client's shuffled mix of all three tasks.
inline MultiTaskResult run_cft(const TransformerWeights& vanilla, const MultiTaskData& data, const MultiTaskPlan& plan) {
  plan.validate();
  const auto clients = mixed_clients(data, {Task::t1, Task::t2, Task::t3}, plan.seed, "cft");
  auto run = plan.federate(vanilla, clients, plan.shared_config, plan.hyper, plan.fed_config("cft", "cft"),
                            corpus_evaluator(test_pointers(data, {Task::t1, Task::t2, Task::t3}), data.vocab, plan.eval));
  return finish_single_run(StrategyKind::cft, std::move(run));
}

// Classification model = the individual T1 federation; regression model =
// cumulative federation over the two generation tasks.
inline MultiTaskResult run_cft_reg(const TransformerWeights& vanilla, const MultiTaskData& data, const MultiTaskPlan& plan) {
  plan.validate();
  MultiTaskResult out;
  out.strategy = StrategyKind::cft_reg;
  const FedConfig cfc = plan.fed_config(individual_lineage(Task::t1), "cft_reg/classification");
  auto classification = plan.federate(vanilla, single_task_clients(data, Task::t1), plan.task_configs[index_of(Task::t1)],
                                       plan.hyper, cfc, corpus_evaluator(test_pointers(data, {Task::t1}), data.vocab, plan.eval));
  const auto clients = mixed_clients(data, {Task::t2, Task::t3}, plan.seed, "cft_reg");
  auto regression = plan.federate(vanilla, clients, plan.shared_config, plan.hyper,
                                   plan.fed_config("cft_reg/regression", "cft_reg/regression"),
                                   corpus_evaluator(test_pointers(data, {Task::t2, Task::t3}), data.vocab, plan.eval));
  out.best[0] = select_best_round(classification.history(Task::t1), TaskKind::classification);
  out.best[1] = select_best_round(regression.history(Task::t2), TaskKind::generation);
  out.best[2] = select_best_round(regression.history(Task::t3), TaskKind::generation);
  append_round_rows(out.table, classification, "C");
  append_round_rows(out.table, regression, "R");
  out.summary = best_row(report_label(StrategyKind::cft_reg), out.best, {&classification, &regression, &regression});
  out.table.rows.push_back(out.summary);
  out.runs.push_back(std::move(classification));
  out.runs.push_back(std::move(regression));
  return out;
}

inline MultiTaskResult run_strategy(const TransformerWeights& vanilla, const MultiTaskData& data, const MultiTaskPlan& plan) {
  switch (plan.strategy) {
    case StrategyKind::toc:
      return run_toc(vanilla, data, plan);
    case StrategyKind::cot:
      return run_cot(vanilla, data, plan);
    case StrategyKind::cat:
      return run_cat(vanilla, data, plan);
    case StrategyKind::cft:
      return run_cft(vanilla, data, plan);
    case StrategyKind::cft_reg:
      return run_cft_reg(vanilla, data, plan);
    case StrategyKind::individual:
      break;
  }
  throw ConfigError("run_strategy needs a multi-task strategy");
}

}  // namespace fedreview
