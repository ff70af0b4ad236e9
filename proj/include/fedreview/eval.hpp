#pragma once

// Task evaluation: yes/no readout scored with P/R/F1, greedy generations
// scored with C-BLEU, METEOR and ROUGE-L.

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "fedreview/data.hpp"
#include "fedreview/metrics.hpp"
#include "fedreview/model.hpp"
#include "fedreview/parallel.hpp"

namespace fedreview {

struct EvalOptions {
  std::size_t max_new = 16;     // generation budget, further capped by max_seq
  std::size_t max_records = 0;  // 0 = whole corpus
  std::size_t jobs = 1;
  const SynonymTable* synonyms = nullptr;
};

struct TestSet {
  Corpus corpus;
  const Vocabulary* vocab = nullptr;
};

inline Scores evaluate_task(const TransformerWeights& model, const AdapterSet* adapters, const Corpus& corpus,
                            const Vocabulary& vocab, const EvalOptions& opts = {}) {
  std::size_t n = corpus.records.size();
  if (opts.max_records > 0) n = std::min(n, opts.max_records);
  if (n == 0) throw DataError(to_string(corpus.task) + " evaluation corpus is empty");
  const Task task = corpus.task;

  if (kind_of(task) == TaskKind::classification) {
    std::vector<char> predicted(n);
    parallel_for(n, opts.jobs, [&](std::size_t i) {
      const auto pp = format_prompt(task, corpus.records[i], vocab);
      predicted[i] = classify_yes_no(model, adapters, pp.prompt) ? 1 : 0;
    });
    ConfusionCounts counts;
    for (std::size_t i = 0; i < n; ++i) counts.add(predicted[i] != 0, *corpus.records[i].label);
    const auto m = prf1(counts);
    return {m.precision, m.recall, m.f1};
  }

  std::vector<GenPair> pairs(n);
  parallel_for(n, opts.jobs, [&](std::size_t i) {
    const ReviewRecord& r = corpus.records[i];
    const auto pp = format_prompt(task, r, vocab);
    const std::size_t room = model.geometry.max_seq > pp.prompt.size() ? model.geometry.max_seq - pp.prompt.size() : 0;
    const auto out = generate(model, adapters, pp.prompt, std::min(opts.max_new, room));
    const std::vector<TokenId> generated(out.begin() + static_cast<std::ptrdiff_t>(pp.prompt.size()), out.end());
    pairs[i].hypothesis = tokenize_for_metrics(vocab.decode(generated));
    pairs[i].reference = tokenize_for_metrics(task == Task::t2 ? *r.comment : *r.refined);
  });
  return {corpus_bleu(pairs), meteor(pairs, opts.synonyms), rouge_l(pairs)};
}

// Scores for every task that has a test corpus.
using TaskScoreSet = std::array<std::optional<Scores>, 3>;

inline TaskScoreSet evaluate_all(const TransformerWeights& model, const std::array<const Corpus*, 3>& tests,
                                 const Vocabulary& vocab, const EvalOptions& opts = {}) {
  TaskScoreSet out;
  for (Task t : kAllTasks) {
    if (const Corpus* c = tests[index_of(t)]) out[index_of(t)] = evaluate_task(model, nullptr, *c, vocab, opts);
  }
  return out;
}

}  // namespace fedreview
