#pragma once

// Generic pretraining of the toy base model, so the "vanilla" starting point
// is a language model rather than random weights. The corpus carries no task
// supervision: code sequences for next-token modelling and verbatim echoes of a
// patch after the refinement marker (with an unrelated comment half the time).

#include <cstdint>
#include <string>
#include <vector>

#include "fedreview/training.hpp"

namespace fedreview {

struct PretrainOptions {
  std::size_t records = 0;  // 0 disables pretraining
  std::size_t epochs = 2;
  double lr = 3e-3;
  std::size_t batch_size = 8;
};

inline std::vector<TrainingExample> pretraining_examples(const SyntheticTaskSpec& spec, const Vocabulary& vocab,
                                                         std::size_t n, std::uint64_t seed) {
  std::vector<std::string> code = spec.code_symbols;
  for (const auto& [bad, good] : spec.rewrites) {
    code.push_back(bad);
    code.push_back(good);
  }
  std::vector<std::string> prose{"fix", "at"};
  for (auto& p : spec.position_symbols()) prose.push_back(std::move(p));
  for (const auto& c : code) prose.push_back(c);

  Rng rng(derive_seed(seed, {hash_tag("pretrain-corpus")}));
  auto words = [&](const std::vector<std::string>& pool, std::size_t k) {
    std::string s;
    for (std::size_t i = 0; i < k; ++i) {
      if (i) s += ' ';
      s += pool[rng.below(pool.size())];
    }
    return s;
  };
  std::vector<TrainingExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto patch = vocab.encode(words(code, spec.patch_tokens));
    TrainingExample ex;
    ex.prompt.push_back(tokens::patch_open);
    if (i % 3 == 0) {
      // plain code modelling
      ex.target = patch;
      ex.target.push_back(tokens::patch_close);
    } else {
      ex.prompt.insert(ex.prompt.end(), patch.begin(), patch.end());
      ex.prompt.push_back(tokens::patch_close);
      if (rng.bernoulli(0.5)) {
        const auto comment = vocab.encode(words(prose, 4));
        ex.prompt.push_back(tokens::comment_open);
        ex.prompt.insert(ex.prompt.end(), comment.begin(), comment.end());
        ex.prompt.push_back(tokens::comment_close);
      }
      ex.prompt.push_back(tokens::gen_refined);
      ex.target = patch;
      ex.target.push_back(tokens::eos);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// Full-parameter AdamW over all base weights; returns per-step losses.
inline TrainStats pretrain_base(TransformerWeights& w, const std::vector<TrainingExample>& examples,
                                const PretrainOptions& opts, std::uint64_t seed) {
  TrainHyper hyper;
  hyper.lr = opts.lr;
  hyper.batch_size = opts.batch_size;
  hyper.epochs = opts.epochs;
  hyper.validate();
  if (examples.empty()) throw DataError("pretraining on an empty example list");

  const std::size_t per_epoch = (examples.size() + hyper.batch_size - 1) / hyper.batch_size;
  const LrSchedule schedule{hyper.lr, hyper.warmup_ratio, per_epoch * hyper.epochs};
  auto params = parameters(w);
  std::vector<const Matrix*> cparams(params.begin(), params.end());
  OptimizerState opt = OptimizerState::zeros_like(cparams);

  TrainStats stats;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(seed, {hash_tag("pretrain-shuffle"), epoch}));
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      std::vector<const TrainingExample*> members;
      for (std::size_t j = start; j < std::min(order.size(), start + hyper.batch_size); ++j) {
        members.push_back(&examples[order[j]]);
      }
      auto lg = base_loss_and_grads(w, make_batch(members));
      if (!std::isfinite(lg.loss)) throw TrainingError("non-finite pretraining loss at step " + std::to_string(stats.steps));
      std::vector<Matrix> grads;
      for (Matrix* g : parameters(lg.grads)) grads.push_back(std::move(*g));
      clip_global_norm(std::span<Matrix>(grads), hyper.max_grad_norm);
      adamw_step(params, grads, opt, lr_at(schedule, stats.steps), hyper.adamw);
      stats.losses.push_back(lg.loss);
      ++stats.steps;
    }
  }
  return stats;
}

}  // namespace fedreview
