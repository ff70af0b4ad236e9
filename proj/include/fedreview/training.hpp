#pragma once

// Local supervised fine-tuning of an adapter set: one pass over a shuffled
// example list with AdamW, a warmup + cosine schedule and global-norm clipping.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedreview/data.hpp"
#include "fedreview/model.hpp"

namespace fedreview {

struct TrainHyper {
  double lr = 3e-4;
  double warmup_ratio = 0.03;
  double max_grad_norm = 0.3;
  std::size_t batch_size = 2;
  std::size_t epochs = 1;
  AdamWConfig adamw{};

  void validate() const {
    LrSchedule{lr, warmup_ratio, 0}.validate();
    if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
  }

  friend bool operator==(const TrainHyper& a, const TrainHyper& b) {
    return a.lr == b.lr && a.warmup_ratio == b.warmup_ratio && a.max_grad_norm == b.max_grad_norm &&
           a.batch_size == b.batch_size && a.epochs == b.epochs;
  }
};

struct TrainingExample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;  // supervised tokens
};

// Generation targets are terminated with <EOS> so greedy decoding learns to stop.
inline TrainingExample make_example(Task task, const ReviewRecord& r, const Vocabulary& vocab) {
  auto pp = format_prompt(task, r, vocab);
  if (kind_of(task) == TaskKind::generation) pp.target.push_back(tokens::eos);
  return {std::move(pp.prompt), std::move(pp.target)};
}

inline std::vector<TrainingExample> make_examples(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<TrainingExample> out;
  out.reserve(corpus.records.size());
  for (const auto& r : corpus.records) out.push_back(make_example(corpus.task, r, vocab));
  return out;
}

// Right-padded batch; only target positions carry loss.
inline Batch make_batch(const std::vector<const TrainingExample*>& examples) {
  std::size_t len = 0;
  for (const auto* e : examples) len = std::max(len, e->prompt.size() + e->target.size());
  Batch b;
  for (const auto* e : examples) {
    std::vector<TokenId> seq(len, tokens::pad);
    std::vector<std::uint8_t> mask(len, 0);
    std::copy(e->prompt.begin(), e->prompt.end(), seq.begin());
    for (std::size_t i = 0; i < e->target.size(); ++i) {
      seq[e->prompt.size() + i] = e->target[i];
      mask[e->prompt.size() + i] = 1;
    }
    b.tokens.push_back(std::move(seq));
    b.loss_mask.push_back(std::move(mask));
  }
  return b;
}

struct TrainStats {
  std::size_t steps = 0;
  std::vector<double> losses;  // per optimizer step

  double mean_loss() const {
    if (losses.empty()) return 0.0;
    double s = 0.0;
    for (double l : losses) s += l;
    return s / static_cast<double>(losses.size());
  }
};

// Trains `adapters` in place on `examples` for hyper.epochs passes. Shuffle
// order and dropout masks are drawn from streams derived from `seed`; the
// optimizer state starts fresh.
inline TrainStats train_adapters(const TransformerWeights& base, AdapterSet& adapters,
                                 const std::vector<TrainingExample>& examples, const TrainHyper& hyper,
                                 std::uint64_t seed) {
  hyper.validate();
  if (examples.empty()) throw DataError("local training on an empty example list");
  check_adapters_match(base.geometry, adapters);

  const std::size_t per_epoch = (examples.size() + hyper.batch_size - 1) / hyper.batch_size;
  const LrSchedule schedule{hyper.lr, hyper.warmup_ratio, per_epoch * hyper.epochs};
  auto params = adapters.parameters();
  std::vector<const Matrix*> cparams(params.begin(), params.end());
  OptimizerState opt = OptimizerState::zeros_like(cparams);
  Rng dropout_rng(derive_seed(seed, {hash_tag("dropout")}));

  TrainStats stats;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, {hash_tag("shuffle"), epoch}));
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      std::vector<const TrainingExample*> members;
      for (std::size_t j = start; j < std::min(order.size(), start + hyper.batch_size); ++j) {
        members.push_back(&examples[order[j]]);
      }
      const Batch batch = make_batch(members);
      auto lg = loss_and_grads(base, adapters, batch, ForwardMode{true, &dropout_rng});
      if (!std::isfinite(lg.loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(stats.steps));
      }
      std::vector<Matrix> grads;
      for (Matrix* g : lg.grads.parameters()) grads.push_back(std::move(*g));
      try {
        clip_global_norm(std::span<Matrix>(grads), hyper.max_grad_norm);
      } catch (const NumericError& e) {
        throw TrainingError("step " + std::to_string(stats.steps) + ": " + e.what());
      }
      adamw_step(params, grads, opt, lr_at(schedule, stats.steps), hyper.adamw);
      stats.losses.push_back(lg.loss);
      ++stats.steps;
    }
  }
  return stats;
}

// Mean batch loss over examples (evaluation mode, no dropout).
inline double mean_loss(const TransformerWeights& base, const AdapterSet* adapters,
                        const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw DataError("mean_loss on an empty example list");
  double total = 0.0;
  for (const auto& e : examples) total += batch_loss(base, adapters, make_batch({&e}));
  return total / static_cast<double>(examples.size());
}

}  // namespace fedreview
