#pragma once

// Low-rank adapters on the attention projections.
//
// Each targeted projection W (d_in x d_out) gets a pair A (d_in x r) and
// B (r x d_out). The effective weight is W + (alpha / r) * A * B; with
// alpha == r this is the plain W + A * B update. A starts normal(0, 0.02) and
// B starts at zero, so a fresh adapter set leaves the model unchanged.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedreview/task.hpp"
#include "fedreview/weights.hpp"

namespace fedreview {

struct LoraConfig {
  std::vector<Target> targets;  // canonical order q, k, v, o; no duplicates
  std::size_t rank = 8;
  double alpha = 16.0;
  double dropout = 0.1;

  double scaling() const noexcept { return alpha / static_cast<double>(rank); }

  bool has_target(Target t) const noexcept {
    return std::find(targets.begin(), targets.end(), t) != targets.end();
  }

  void validate() const {
    if (targets.empty()) throw ConfigError("LoRA config needs at least one target module");
    if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("LoRA dropout must lie in [0, 1)");
    for (std::size_t i = 1; i < targets.size(); ++i) {
      if (!(targets[i - 1] < targets[i])) {
        throw ConfigError("LoRA targets must be unique and in q,k,v,o order");
      }
    }
  }

  static LoraConfig make(std::vector<Target> targets, std::size_t rank, double alpha = 16.0,
                         double dropout = 0.1) {
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    LoraConfig c{std::move(targets), rank, alpha, dropout};
    c.validate();
    return c;
  }

  friend bool operator==(const LoraConfig&, const LoraConfig&) = default;
};

inline std::string targets_string(const std::vector<Target>& targets) {
  std::string s;
  for (Target t : targets) {
    if (!s.empty()) s += ',';
    s += to_string(t);
  }
  return s;
}

// Tuned single-task profiles and the all-projection multi-task profile.
inline LoraConfig task_profile(Task task) {
  switch (task) {
    case Task::t1:
      return LoraConfig::make({Target::k, Target::v}, 8);
    case Task::t2:
      return LoraConfig::make({Target::v}, 8);
    case Task::t3:
      return LoraConfig::make({Target::q, Target::o}, 16);
  }
  return {};
}

inline LoraConfig multitask_profile() {
  return LoraConfig::make({Target::q, Target::k, Target::v, Target::o}, 8);
}

struct AdapterKey {
  std::size_t layer = 0;
  Target target = Target::q;
  friend auto operator<=>(const AdapterKey&, const AdapterKey&) = default;
};

struct AdapterPair {
  Matrix a;  // d_in x r
  Matrix b;  // r x d_out
  friend bool operator==(const AdapterPair&, const AdapterPair&) = default;
};

// Ordered (layer ascending, then q,k,v,o) map of adapter pairs.
class AdapterSet {
 public:
  AdapterSet() = default;
  AdapterSet(LoraConfig config, std::size_t n_layers) : config_(std::move(config)), n_layers_(n_layers) {}

  const LoraConfig& config() const noexcept { return config_; }
  std::size_t n_layers() const noexcept { return n_layers_; }
  std::size_t size() const noexcept { return pairs_.size(); }

  const std::map<AdapterKey, AdapterPair>& pairs() const noexcept { return pairs_; }
  std::map<AdapterKey, AdapterPair>& pairs() noexcept { return pairs_; }

  const AdapterPair* find(std::size_t layer, Target t) const {
    auto it = pairs_.find({layer, t});
    return it == pairs_.end() ? nullptr : &it->second;
  }
  AdapterPair* find(std::size_t layer, Target t) {
    auto it = pairs_.find({layer, t});
    return it == pairs_.end() ? nullptr : &it->second;
  }

  // Parameter matrices in canonical order (A then B per pair).
  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& [key, pair] : pairs_) {
      out.push_back(&pair.a);
      out.push_back(&pair.b);
    }
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& [key, pair] : pairs_) {
      out.push_back(&pair.a);
      out.push_back(&pair.b);
    }
    return out;
  }

  // Same structure with every matrix zeroed.
  AdapterSet zeros_like() const {
    AdapterSet z(config_, n_layers_);
    for (const auto& [key, pair] : pairs_) {
      z.pairs_.emplace(key, AdapterPair{Matrix(pair.a.rows(), pair.a.cols()),
                                        Matrix(pair.b.rows(), pair.b.cols())});
    }
    return z;
  }

  friend bool operator==(const AdapterSet&, const AdapterSet&) = default;

 private:
  LoraConfig config_;
  std::size_t n_layers_ = 0;
  std::map<AdapterKey, AdapterPair> pairs_;
};

inline AdapterSet init_adapters(const ModelGeometry& g, const LoraConfig& config, std::uint64_t seed) {
  config.validate();
  g.validate();
  AdapterSet set(config, g.n_layers);
  Rng rng(seed);
  for (std::size_t l = 0; l < g.n_layers; ++l) {
    for (Target t : config.targets) {
      AdapterPair p{Matrix(g.in_dim(t), config.rank), Matrix(config.rank, g.out_dim(t))};
      fill_normal(p.a, rng, kInitStd);
      set.pairs().emplace(AdapterKey{l, t}, std::move(p));
    }
  }
  return set;
}

inline Matrix effective_delta(const AdapterPair& pair, double alpha, std::size_t rank) {
  if (rank == 0) throw ConfigError("LoRA rank must be >= 1");
  if (pair.a.cols() != rank || pair.b.rows() != rank) {
    throw DimensionError("adapter pair " + pair.a.shape_string() + " / " + pair.b.shape_string() +
                         " does not match rank " + std::to_string(rank));
  }
  return scaled(matmul(pair.a, pair.b), alpha / static_cast<double>(rank));
}

inline void check_adapters_match(const ModelGeometry& g, const AdapterSet& adapters) {
  const std::size_t r = adapters.config().rank;
  for (const auto& [key, pair] : adapters.pairs()) {
    if (key.layer >= g.n_layers || pair.a.rows() != g.in_dim(key.target) || pair.a.cols() != r ||
        pair.b.rows() != r || pair.b.cols() != g.out_dim(key.target)) {
      throw DimensionError("adapter layer." + std::to_string(key.layer) + "." +
                           to_string(key.target) + " " + pair.a.shape_string() + "/" +
                           pair.b.shape_string() + " does not fit the model geometry");
    }
  }
}

// Returns a copy of `weights` with every targeted projection replaced by
// W + effective_delta. Merging the same set twice adds the delta twice.
inline TransformerWeights merge(const TransformerWeights& weights, const AdapterSet& adapters) {
  check_adapters_match(weights.geometry, adapters);
  TransformerWeights out = weights;
  const auto& cfg = adapters.config();
  for (const auto& [key, pair] : adapters.pairs()) {
    add_scaled(out.layers[key.layer].projection(key.target), effective_delta(pair, cfg.alpha, cfg.rank));
  }
  return out;
}

inline std::uint64_t param_count(const ModelGeometry& g, const LoraConfig& config) {
  std::uint64_t per_layer = 0;
  for (Target t : config.targets) per_layer += config.rank * (g.in_dim(t) + g.out_dim(t));
  return g.n_layers * per_layer;
}

// Percentage of the base model's parameters that the adapters add.
inline double trainable_fraction(const ModelGeometry& g, const LoraConfig& config) {
  if (g.total_base_params == 0) throw AccountingError("geometry has no total_base_params");
  return 100.0 * static_cast<double>(param_count(g, config)) / static_cast<double>(g.total_base_params);
}

struct NamedEntry {
  std::string name;
  Matrix value;
  friend bool operator==(const NamedEntry&, const NamedEntry&) = default;
};

inline std::string entry_name(std::size_t layer, Target t, char which) {
  return "layer." + std::to_string(layer) + "." + to_string(t) + "." + which;
}

// "layer.{i}.{target}.{A|B}" entries in canonical order.
inline std::vector<NamedEntry> export_state(const AdapterSet& adapters) {
  std::vector<NamedEntry> out;
  out.reserve(adapters.size() * 2);
  for (const auto& [key, pair] : adapters.pairs()) {
    out.push_back({entry_name(key.layer, key.target, 'A'), pair.a});
    out.push_back({entry_name(key.layer, key.target, 'B'), pair.b});
  }
  return out;
}

inline AdapterSet import_state(const ModelGeometry& g, const LoraConfig& config,
                               const std::vector<NamedEntry>& entries) {
  config.validate();
  struct Slot {
    AdapterKey key;
    bool is_a;
    std::size_t rows, cols;
  };
  std::map<std::string, Slot> expected;
  for (std::size_t l = 0; l < g.n_layers; ++l) {
    for (Target t : config.targets) {
      expected.emplace(entry_name(l, t, 'A'), Slot{{l, t}, true, g.in_dim(t), config.rank});
      expected.emplace(entry_name(l, t, 'B'), Slot{{l, t}, false, config.rank, g.out_dim(t)});
    }
  }
  AdapterSet set(config, g.n_layers);
  std::set<std::string> seen;
  for (const auto& e : entries) {
    auto it = expected.find(e.name);
    if (it == expected.end()) throw StateError("unknown adapter entry '" + e.name + "'");
    if (!seen.insert(e.name).second) throw StateError("duplicate adapter entry '" + e.name + "'");
    const Slot& slot = it->second;
    if (e.value.rows() != slot.rows || e.value.cols() != slot.cols) {
      throw StateError("adapter entry '" + e.name + "' has shape " + e.value.shape_string() +
                       ", expected " + Matrix::shape_string(slot.rows, slot.cols));
    }
    AdapterPair& pair = set.pairs()[slot.key];
    (slot.is_a ? pair.a : pair.b) = e.value;
  }
  for (const auto& [name, slot] : expected) {
    if (!seen.count(name)) throw StateError("missing adapter entry '" + name + "'");
  }
  return set;
}

}  // namespace fedreview
