#pragma once

// Federated rounds over LoRA adapters: clients fine-tune adapters on the
// current global model, the server averages them (FedAvg), merges the average
// into the model and evaluates it.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedreview/eval.hpp"
#include "fedreview/parallel.hpp"
#include "fedreview/training.hpp"
#include "fedreview/wire.hpp"

namespace fedreview {

// ---------------------------------------------------------------- aggregation

enum class AggregationMode { uniform, sample_weighted };

struct AggregationPolicy {
  AggregationMode mode = AggregationMode::sample_weighted;
  friend bool operator==(const AggregationPolicy&, const AggregationPolicy&) = default;
};

inline std::string to_string(AggregationMode m) {
  return m == AggregationMode::uniform ? "uniform" : "sample_weighted";
}

inline AggregationMode parse_aggregation(std::string_view s) {
  if (s == "uniform") return AggregationMode::uniform;
  if (s == "sample_weighted") return AggregationMode::sample_weighted;
  throw ConfigError("unknown aggregation policy '" + std::string(s) + "'");
}

// Entrywise sum((w_i / sum(w)) * x_i). Updates are visited in ascending
// client id (stable for several updates from one client), so the result does
// not depend on arrival order.
inline std::vector<NamedEntry> fedavg_weighted(const std::vector<AdapterUpdate>& updates,
                                               const std::vector<double>& weights) {
  if (updates.empty()) throw InputError("fedavg: no updates");
  if (weights.size() != updates.size()) throw InputError("fedavg: one weight per update required");
  std::vector<std::size_t> order(updates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return updates[a].client_id < updates[b].client_id; });

  const AdapterUpdate& first = updates[order.front()];
  for (std::size_t i : order) {
    const AdapterUpdate& u = updates[i];
    if (u.round != first.round) {
      throw AggregationError("client " + std::to_string(u.client_id) + " sent round " + std::to_string(u.round) +
                             ", expected " + std::to_string(first.round));
    }
    if (u.entries.size() != first.entries.size()) {
      throw AggregationError("client " + std::to_string(u.client_id) + " sent " + std::to_string(u.entries.size()) +
                             " entries, expected " + std::to_string(first.entries.size()));
    }
    for (std::size_t e = 0; e < u.entries.size(); ++e) {
      if (u.entries[e].name != first.entries[e].name) {
        throw AggregationError("client " + std::to_string(u.client_id) + " entry '" + u.entries[e].name +
                               "' where '" + first.entries[e].name + "' was expected");
      }
      if (!u.entries[e].value.same_shape(first.entries[e].value)) {
        throw AggregationError("client " + std::to_string(u.client_id) + " entry '" + u.entries[e].name +
                               "' has shape " + u.entries[e].value.shape_string() + ", expected " +
                               first.entries[e].value.shape_string());
      }
    }
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw AggregationError("fedavg: invalid weight");
  }
  double total = 0.0;
  for (std::size_t i : order) total += weights[i];
  if (!(total > 0.0)) throw AggregationError("fedavg: weights sum to zero");

  std::vector<NamedEntry> out;
  for (std::size_t e = 0; e < first.entries.size(); ++e) {
    Matrix acc(first.entries[e].value.rows(), first.entries[e].value.cols());
    for (std::size_t i : order) add_scaled(acc, updates[i].entries[e].value, weights[i] / total);
    out.push_back({first.entries[e].name, std::move(acc)});
  }
  return out;
}

inline std::vector<NamedEntry> fedavg(const std::vector<AdapterUpdate>& updates, AggregationPolicy policy) {
  std::vector<double> w(updates.size(), 1.0);
  if (policy.mode == AggregationMode::sample_weighted) {
    for (std::size_t i = 0; i < updates.size(); ++i) {
      if (updates[i].sample_count == 0) {
        throw AggregationError("client " + std::to_string(updates[i].client_id) + " reported sample_count 0");
      }
      w[i] = static_cast<double>(updates[i].sample_count);
    }
  }
  return fedavg_weighted(updates, w);
}

// Equal task weights inside each client; clients weighted by the policy
// (uniform, or by their summed sample counts).
inline std::vector<NamedEntry> fedavg_equal_tasks(const std::vector<AdapterUpdate>& updates, AggregationPolicy policy) {
  std::map<std::uint32_t, std::pair<std::size_t, std::uint64_t>> per_client;  // updates, samples
  for (const auto& u : updates) {
    auto& slot = per_client[u.client_id];
    ++slot.first;
    slot.second += u.sample_count;
  }
  std::vector<double> w(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const auto& [n, samples] = per_client[updates[i].client_id];
    const double client_weight = policy.mode == AggregationMode::uniform ? 1.0 : static_cast<double>(samples);
    w[i] = client_weight / static_cast<double>(n);
  }
  return fedavg_weighted(updates, w);
}

// ---------------------------------------------------------------- clients

// One local training pass over a fixed example list.
struct LocalStage {
  std::string tag;
  std::vector<TrainingExample> examples;
};

// A job yields one update per round. Its stages run in order on the same
// adapter set, each with a fresh optimizer.
struct ClientJob {
  std::string tag;
  std::vector<LocalStage> stages;

  std::uint64_t sample_count() const noexcept {
    std::uint64_t n = 0;
    for (const auto& s : stages) n += s.examples.size();
    return n;
  }
};

struct ClientSpec {
  std::uint32_t client_id = 0;
  std::vector<ClientJob> jobs;
};

inline ClientSpec single_task_client(std::uint32_t id, const Corpus& shard, const Vocabulary& vocab) {
  return {id, {{to_string(shard.task), {{to_string(shard.task), make_examples(shard, vocab)}}}}};
}

struct FedConfig {
  std::size_t rounds = 20;
  AggregationPolicy policy{};
  bool equal_task_weights = false;  // multi-job clients: each client's jobs share its weight
  bool continue_adapters = false;   // keep training the received adapters instead of fresh ones
  std::uint64_t seed = 42;
  std::string lineage = "individual";  // seeds differ per lineage
  std::size_t jobs = 1;                // client training threads
  std::string checkpoint_dir;          // empty: no checkpoint files

  void validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

// The model every client starts from in a round. In the default mode the
// aggregate of round t is merged into model(t-1) and clients start the next
// round from fresh adapters on the merged model. With continue_adapters the
// base stays the vanilla model and clients resume from the last aggregate.
class GlobalModel {
 public:
  GlobalModel(TransformerWeights vanilla, LoraConfig config, bool continue_adapters)
      : vanilla_(std::move(vanilla)), current_(vanilla_), config_(std::move(config)), continue_(continue_adapters) {
    config_.validate();
  }

  const TransformerWeights& base() const noexcept { return continue_ ? vanilla_ : current_; }
  const TransformerWeights& current() const noexcept { return current_; }
  const LoraConfig& config() const noexcept { return config_; }
  std::uint32_t round() const noexcept { return round_; }

  AdapterSet start_adapters(std::uint64_t init_seed) const {
    if (continue_ && carried_) return *carried_;
    return init_adapters(base().geometry, config_, init_seed);
  }

  void advance(const std::vector<NamedEntry>& aggregate) {
    AdapterSet agg = import_state(current_.geometry, config_, aggregate);
    if (continue_) {
      current_ = merge(vanilla_, agg);
      carried_ = std::move(agg);
    } else {
      current_ = merge(current_, agg);
    }
    ++round_;
  }

 private:
  TransformerWeights vanilla_;
  TransformerWeights current_;
  LoraConfig config_;
  bool continue_ = false;
  std::optional<AdapterSet> carried_;
  std::uint32_t round_ = 0;
};

inline std::uint64_t adapter_init_seed(const FedConfig& fc, std::uint32_t round, std::size_t job) {
  return derive_seed(fc.seed, {hash_tag("adapter-init"), hash_tag(fc.lineage), round, job});
}

inline std::uint64_t client_seed(const FedConfig& fc, std::uint32_t round, std::uint32_t client, std::size_t job,
                                 std::size_t stage) {
  return derive_seed(fc.seed, {hash_tag("client"), hash_tag(fc.lineage), round, client, job, stage});
}

// One round of local training for one job: exported adapters plus sample count.
inline AdapterUpdate client_train_round(const GlobalModel& global, const ClientSpec& client, std::size_t job_index,
                                        const TrainHyper& hyper, const FedConfig& fc, std::uint32_t round) {
  const ClientJob& job = client.jobs.at(job_index);
  if (job.sample_count() == 0) {
    throw DataError("client " + std::to_string(client.client_id) + " job " + job.tag + " has no examples");
  }
  AdapterSet adapters = global.start_adapters(adapter_init_seed(fc, round, job_index));
  for (std::size_t s = 0; s < job.stages.size(); ++s) {
    if (job.stages[s].examples.empty()) continue;
    try {
      train_adapters(global.base(), adapters, job.stages[s].examples, hyper,
                     client_seed(fc, round, client.client_id, job_index, s));
    } catch (const TrainingError& e) {
      throw TrainingError("client " + std::to_string(client.client_id) + " round " + std::to_string(round) + " " +
                          job.tag + "/" + job.stages[s].tag + ": " + e.what());
    }
  }
  return {client.client_id, round, job.sample_count(), export_state(adapters)};
}

inline std::vector<AdapterUpdate> train_clients(const GlobalModel& global, const std::vector<ClientSpec>& clients,
                                                const TrainHyper& hyper, const FedConfig& fc, std::uint32_t round) {
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    for (std::size_t j = 0; j < clients[c].jobs.size(); ++j) work.emplace_back(c, j);
  }
  std::vector<AdapterUpdate> out(work.size());
  parallel_for(work.size(), fc.jobs, [&](std::size_t i) {
    out[i] = client_train_round(global, clients[work[i].first], work[i].second, hyper, fc, round);
  });
  return out;
}

inline std::vector<NamedEntry> aggregate_updates(const std::vector<AdapterUpdate>& updates, const FedConfig& fc) {
  return fc.equal_task_weights ? fedavg_equal_tasks(updates, fc.policy) : fedavg(updates, fc.policy);
}

// ---------------------------------------------------------------- transports

// Where a round's updates come from. The in-process transport trains the
// clients itself; the socket server receives them from remote processes.
class RoundTransport {
 public:
  virtual ~RoundTransport() = default;
  virtual std::vector<AdapterUpdate> collect(std::uint32_t round, const GlobalModel& global) = 0;
  virtual void broadcast(std::uint32_t, const std::vector<NamedEntry>&) {}
  virtual void finish(std::uint32_t) {}
};

class InProcessTransport : public RoundTransport {
 public:
  InProcessTransport(const std::vector<ClientSpec>& clients, TrainHyper hyper, FedConfig fc)
      : clients_(clients), hyper_(hyper), fc_(std::move(fc)) {}

  std::vector<AdapterUpdate> collect(std::uint32_t round, const GlobalModel& global) override {
    return train_clients(global, clients_, hyper_, fc_, round);
  }

 private:
  const std::vector<ClientSpec>& clients_;
  TrainHyper hyper_;
  FedConfig fc_;
};

// ---------------------------------------------------------------- round loop

using Evaluator = std::function<TaskScoreSet(const TransformerWeights& model, std::uint32_t round)>;

struct RoundRecord {
  std::uint32_t round = 0;
  TaskScoreSet scores;
  std::string checkpoint;  // empty when not written
};

struct FederationResult {
  std::vector<RoundRecord> records;                  // rounds 0..T
  std::vector<TransformerWeights> models;            // merged model per round, 0 = vanilla
  std::vector<std::vector<NamedEntry>> aggregates;   // index t - 1
  std::vector<std::vector<AdapterUpdate>> updates;   // index t - 1, ascending client id

  RoundHistory history(Task task) const {
    RoundHistory h;
    h.task = task;
    for (const auto& r : records) {
      const auto& s = r.scores[index_of(task)];
      if (!s) throw InputError("no " + to_string(task) + " scores recorded for round " + std::to_string(r.round));
      h.rounds.push_back(*s);
    }
    return h;
  }
};

inline std::string checkpoint_path(const std::string& dir, std::uint32_t round) {
  return (std::filesystem::path(dir) / ("round_" + std::to_string(round) + ".fedlora")).string();
}

inline FederationResult run_federation(const TransformerWeights& vanilla, const LoraConfig& config,
                                       const FedConfig& fc, RoundTransport& transport, const Evaluator& evaluate) {
  fc.validate();
  GlobalModel global(vanilla, config, fc.continue_adapters);
  FederationResult out;
  out.models.push_back(vanilla);
  out.records.push_back({0, evaluate(vanilla, 0), ""});
  if (!fc.checkpoint_dir.empty()) std::filesystem::create_directories(fc.checkpoint_dir);

  for (std::uint32_t t = 1; t <= fc.rounds; ++t) {
    auto updates = transport.collect(t, global);
    std::stable_sort(updates.begin(), updates.end(),
                     [](const AdapterUpdate& a, const AdapterUpdate& b) { return a.client_id < b.client_id; });
    auto aggregate = aggregate_updates(updates, fc);
    transport.broadcast(t, aggregate);
    global.advance(aggregate);
    RoundRecord rec{t, evaluate(global.current(), t), ""};
    if (!fc.checkpoint_dir.empty()) {
      rec.checkpoint = checkpoint_path(fc.checkpoint_dir, t);
      write_bytes(rec.checkpoint, encode_message({MessageType::aggregate, t, 0, 0, aggregate}));
    }
    out.records.push_back(std::move(rec));
    out.models.push_back(global.current());
    out.aggregates.push_back(std::move(aggregate));
    out.updates.push_back(std::move(updates));
  }
  transport.finish(static_cast<std::uint32_t>(fc.rounds));
  return out;
}

inline FederationResult run_federation(const TransformerWeights& vanilla, const std::vector<ClientSpec>& clients,
                                       const LoraConfig& config, const TrainHyper& hyper, const FedConfig& fc,
                                       const Evaluator& evaluate) {
  if (clients.empty()) throw InputError("run_federation: no clients");
  InProcessTransport transport(clients, hyper, fc);
  return run_federation(vanilla, config, fc, transport, evaluate);
}

// Evaluator over a fixed set of test corpora (null entries are skipped).
inline Evaluator corpus_evaluator(std::array<const Corpus*, 3> tests, const Vocabulary& vocab, EvalOptions opts) {
  return [tests, &vocab, opts](const TransformerWeights& model, std::uint32_t) {
    return evaluate_all(model, tests, vocab, opts);
  };
}

}  // namespace fedreview
