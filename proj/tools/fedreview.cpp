// fedreview: partition data, run federated LoRA experiments in process or over
// sockets, and consolidate results into a comparison report.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedreview/report.hpp"
#include "fedreview/runner.hpp"
#include "fedreview/tcp.hpp"

namespace fr = fedreview;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> strategy;
  std::optional<std::string> output;
  bool with_central = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config file (key = value)");
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--jobs", f.jobs, "client training threads");
  cmd->add_option("--strategy", f.strategy, "individual, toc, cot, cat, cft or cft_reg");
  cmd->add_option("--output", f.output, "output directory");
}

// Precedence: config file, then FEDREVIEW_SEED, then flags.
fr::ExperimentConfig resolve_config(const CommonFlags& f) {
  fr::ExperimentConfig cfg = f.config.empty() ? fr::ExperimentConfig{} : fr::load_config(f.config);
  if (const char* env = std::getenv("FEDREVIEW_SEED"); env && *env) {
    cfg.seed = fr::detail::parse_uint("FEDREVIEW_SEED", env);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.strategy) cfg.strategy = *f.strategy;
  if (f.output) cfg.output = *f.output;
  if (f.with_central) cfg.with_central = true;
  cfg.validate();
  return cfg;
}

struct Prepared {
  fr::PreparedData data;
  fr::TransformerWeights vanilla;
};

Prepared prepare(const fr::ExperimentConfig& cfg) {
  std::cerr << "preparing data (" << cfg.data << ", seed " << cfg.seed << ")\n";
  Prepared p{fr::prepare_data(cfg), {}};
  if (cfg.pretrain.records > 0) std::cerr << "pretraining base on " << cfg.pretrain.records << " records\n";
  p.vanilla = fr::build_vanilla(cfg, p.data);
  return p;
}

fr::Federator logged(fr::Federator inner) {
  return [inner = std::move(inner)](const fr::TransformerWeights& start, const std::vector<fr::ClientSpec>& clients,
                                    const fr::LoraConfig& config, const fr::TrainHyper& hyper,
                                    const fr::FedConfig& fc, const fr::Evaluator& evaluate) {
    std::cerr << "federation " << fc.lineage << ": " << clients.size() << " clients, " << fc.rounds << " rounds\n";
    fr::Evaluator traced = [&](const fr::TransformerWeights& m, std::uint32_t round) {
      auto s = evaluate(m, round);
      std::cerr << "  " << fc.lineage << " round " << round << " evaluated\n";
      return s;
    };
    return inner(start, clients, config, hyper, fc, traced);
  };
}

void finish_run(const fr::ExperimentConfig& cfg, const fr::RunOutputs& out) {
  std::cout << out.report_md;
  std::cerr << "wrote " << cfg.output << "/{rounds.csv,summary.csv,report.md}\n";
}

int cmd_partition(const CommonFlags& f) {
  const auto cfg = resolve_config(f);
  const auto pd = fr::prepare_data(cfg);
  const auto dir = (std::filesystem::path(cfg.output) / "partition").string();
  const auto report = fr::write_partition(pd, cfg, dir);
  std::cout << report.markdown;
  return 0;
}

int cmd_run(const CommonFlags& f, const std::string& transport, int timeout_ms) {
  const auto cfg = resolve_config(f);
  fr::RunOptions opts;
  opts.with_central = cfg.with_central;
  if (transport == "tcp") {
    opts.federate = [timeout_ms](const fr::TransformerWeights& start, const std::vector<fr::ClientSpec>& clients,
                                 const fr::LoraConfig& config, const fr::TrainHyper& hyper, const fr::FedConfig& fc,
                                 const fr::Evaluator& evaluate) {
      return fr::run_federation_loopback(start, clients, config, hyper, fc, evaluate, timeout_ms);
    };
  } else if (transport != "inproc") {
    throw fr::ConfigError("unknown transport '" + transport + "'");
  }
  opts.federate = logged(std::move(opts.federate));
  auto p = prepare(cfg);
  finish_run(cfg, fr::run_experiment(cfg, p.data, p.vanilla, opts));
  return 0;
}

int cmd_serve(const CommonFlags& f, const std::string& listen, int timeout_ms) {
  const auto cfg = resolve_config(f);
  auto p = prepare(cfg);
  fr::TcpListener listener(fr::Address::parse(listen));
  std::cout << "listening on " << fr::Address::parse(listen).host << ":" << listener.port() << std::endl;
  fr::RunOptions opts;
  opts.with_central = cfg.with_central;
  opts.federate = logged([&listener, timeout_ms](const fr::TransformerWeights& start,
                                                 const std::vector<fr::ClientSpec>& clients,
                                                 const fr::LoraConfig& config, const fr::TrainHyper&,
                                                 const fr::FedConfig& fc, const fr::Evaluator& evaluate) {
    return fr::serve_federation(listener, start, clients.size(), fr::updates_per_client(clients), config, fc, evaluate,
                                timeout_ms);
  });
  finish_run(cfg, fr::run_experiment(cfg, p.data, p.vanilla, opts));
  return 0;
}

int cmd_client(const CommonFlags& f, const std::string& connect, std::uint32_t client_id, int timeout_ms) {
  const auto cfg = resolve_config(f);
  const auto server = fr::Address::parse(connect);
  auto p = prepare(cfg);
  fr::RunOptions opts;
  opts.write_files = false;
  opts.federate = logged([&](const fr::TransformerWeights& start, const std::vector<fr::ClientSpec>& clients,
                             const fr::LoraConfig& config, const fr::TrainHyper& hyper, const fr::FedConfig& fc,
                             const fr::Evaluator& evaluate) {
    const fr::ClientSpec* mine = nullptr;
    for (const auto& c : clients) {
      if (c.client_id == client_id) mine = &c;
    }
    if (!mine) throw fr::ConfigError("no client with id " + std::to_string(client_id) + " in this experiment");
    std::vector<std::vector<fr::NamedEntry>> aggregates;
    fr::participate_tcp(server, start, *mine, config, hyper, fc, timeout_ms, &aggregates);
    // Replaying locally keeps later stages (TOC) on the same models as the server.
    return fr::replay_federation(start, config, fc, std::move(aggregates), evaluate);
  });
  const auto out = fr::run_experiment(cfg, p.data, p.vanilla, opts);
  std::cerr << "client " << client_id << " finished\n";
  std::cout << out.summary_csv;
  return 0;
}

int cmd_report(const std::string& dir) {
  std::vector<std::string> sources;
  const auto rows = fr::collect_summaries(dir, &sources);
  auto report = fr::build_comparison(rows);
  if (sources.empty()) report.warnings.insert(report.warnings.begin(), "no summary.csv found under " + dir);
  std::ostringstream md;
  fr::write_comparison_markdown(md, report);
  if (std::filesystem::is_directory(dir)) fr::detail::write_text(std::filesystem::path(dir) / "comparison.md", md.str());
  std::cout << md.str();
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated LoRA fine-tuning for code review tasks"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string transport = "inproc";
  std::string listen = "127.0.0.1:7450";
  std::string connect = "127.0.0.1:7450";
  std::uint32_t client_id = 0;
  double timeout_s = 300;
  std::string report_dir;

  auto* partition = app.add_subcommand("partition", "write client shards, test split and a partition report");
  add_common(partition, flags);

  auto* run = app.add_subcommand("run", "run individual-task federation or a multi-task strategy");
  add_common(run, flags);
  run->add_flag("--with-central", flags.with_central, "add the centrally trained row");
  run->add_option("--transport", transport, "inproc or tcp (loopback sockets)")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  run->add_option("--timeout", timeout_s, "socket timeout in seconds");

  auto* serve = app.add_subcommand("serve", "federation server; writes the authoritative outputs");
  add_common(serve, flags);
  serve->add_flag("--with-central", flags.with_central, "add the centrally trained row");
  serve->add_option("--listen", listen, "address to bind, host:port (port 0 picks one)");
  serve->add_option("--timeout", timeout_s, "socket timeout in seconds");

  auto* client = app.add_subcommand("client", "federation client process");
  add_common(client, flags);
  client->add_option("--connect", connect, "server address host:port");
  client->add_option("--client-id", client_id, "which client shard to train")->required();
  client->add_option("--timeout", timeout_s, "socket timeout in seconds");

  auto* report = app.add_subcommand("report", "consolidate summary.csv files into comparison.md");
  report->add_option("dir", report_dir, "directory holding run outputs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const int timeout_ms = static_cast<int>(timeout_s * 1000.0);
  try {
    if (*partition) return cmd_partition(flags);
    if (*run) return cmd_run(flags, transport, timeout_ms);
    if (*serve) return cmd_serve(flags, listen, timeout_ms);
    if (*client) return cmd_client(flags, connect, client_id, timeout_ms);
    if (*report) return cmd_report(report_dir);
  } catch (const fr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fr::exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
