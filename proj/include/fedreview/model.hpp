#pragma once

// Tiny causal transformer: learned positions, pre-norm RMSNorm blocks with
// grouped-query attention and a SiLU feed-forward, untied output head.
// Gradients are computed by hand for the adapter parameters and, when asked
// (base pretraining), for every base weight.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fedreview/lora.hpp"
#include "fedreview/tokens.hpp"

namespace fedreview {

// Token sequences padded to one length. loss_mask[b][t] = 1 marks tokens[b][t]
// as a supervised target, predicted from position t - 1.
struct Batch {
  std::vector<std::vector<TokenId>> tokens;
  std::vector<std::vector<std::uint8_t>> loss_mask;

  std::size_t size() const noexcept { return tokens.size(); }
  std::size_t seq_len() const noexcept { return tokens.empty() ? 0 : tokens.front().size(); }

  void validate(const ModelGeometry& g) const {
    if (tokens.size() != loss_mask.size()) throw InputError("batch token/mask row counts differ");
    const std::size_t len = seq_len();
    if (len > g.max_seq) {
      throw RangeError("sequence length " + std::to_string(len) + " exceeds max_seq " +
                       std::to_string(g.max_seq));
    }
    for (std::size_t b = 0; b < tokens.size(); ++b) {
      if (tokens[b].size() != len || loss_mask[b].size() != len) {
        throw InputError("batch row " + std::to_string(b) + " is not padded to length " +
                         std::to_string(len));
      }
      for (TokenId t : tokens[b]) {
        if (t < 0 || static_cast<std::size_t>(t) >= g.vocab_size) {
          throw InputError("token id " + std::to_string(t) + " outside vocabulary of size " +
                           std::to_string(g.vocab_size));
        }
      }
    }
  }
};

// Training mode enables adapter dropout, sampled from `dropout_rng`.
struct ForwardMode {
  bool training = false;
  Rng* dropout_rng = nullptr;
};

namespace detail {

inline constexpr double kNormEps = 1e-6;

struct LinearCache {
  Matrix dropped;  // dropout(x), adapter input
  Matrix u;        // dropped * A
  Matrix mask;     // empty when dropout is inactive
};

struct LayerCache {
  Matrix x_in;
  std::vector<double> inv_rms1;
  Matrix h1;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, T x T (lower triangle)
  Matrix ctx;
  Matrix x_mid;
  std::vector<double> inv_rms2;
  Matrix h2;
  Matrix z;
  Matrix act;
  LinearCache lin_q, lin_k, lin_v, lin_o;
};

struct SequenceCache {
  std::vector<LayerCache> layers;
  Matrix x_final;
  std::vector<double> inv_rms_final;
  Matrix h_final;
  Matrix logits;
};

inline Matrix rmsnorm(const Matrix& x, const Matrix& gain, std::vector<double>* inv_rms_out) {
  Matrix y(x.rows(), x.cols());
  if (inv_rms_out) inv_rms_out->assign(x.rows(), 0.0);
  const double d = static_cast<double>(x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto xr = x.row(t);
    double ms = 0.0;
    for (double v : xr) ms += v * v;
    const double inv = 1.0 / std::sqrt(ms / d + kNormEps);
    if (inv_rms_out) (*inv_rms_out)[t] = inv;
    auto yr = y.row(t);
    for (std::size_t i = 0; i < xr.size(); ++i) yr[i] = gain(0, i) * xr[i] * inv;
  }
  return y;
}

inline Matrix rmsnorm_backward(const Matrix& dy, const Matrix& x, const Matrix& gain,
                               const std::vector<double>& inv_rms, Matrix* dgain = nullptr) {
  Matrix dx(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto xr = x.row(t);
    auto dyr = dy.row(t);
    const double r = inv_rms[t];
    double dot = 0.0;
    for (std::size_t i = 0; i < xr.size(); ++i) dot += gain(0, i) * dyr[i] * xr[i];
    const double coeff = r * r * r * dot / d;
    auto dxr = dx.row(t);
    for (std::size_t i = 0; i < xr.size(); ++i) dxr[i] = r * gain(0, i) * dyr[i] - xr[i] * coeff;
    if (dgain) {
      for (std::size_t i = 0; i < xr.size(); ++i) (*dgain)(0, i) += dyr[i] * xr[i] * r;
    }
  }
  return dx;
}

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

// y = x * W + scale * (dropout(x) * A) * B
inline Matrix adapted_linear(const Matrix& x, const Matrix& w, const AdapterPair* pair, double scale,
                             double dropout, const ForwardMode& mode, LinearCache* cache) {
  Matrix y = matmul(x, w);
  if (!pair) return y;
  Matrix dropped = x;
  Matrix mask;
  if (mode.training && dropout > 0.0) {
    if (!mode.dropout_rng) throw InputError("training forward with dropout needs an rng");
    mask = Matrix(x.rows(), x.cols());
    const double keep_scale = 1.0 / (1.0 - dropout);
    auto mv = mask.values();
    auto dv = dropped.values();
    for (std::size_t i = 0; i < mv.size(); ++i) {
      mv[i] = mode.dropout_rng->bernoulli(dropout) ? 0.0 : keep_scale;
      dv[i] *= mv[i];
    }
  }
  Matrix u = matmul(dropped, pair->a);
  add_scaled(y, matmul(u, pair->b), scale);
  if (cache) {
    cache->dropped = std::move(dropped);
    cache->u = std::move(u);
    cache->mask = std::move(mask);
  }
  return y;
}

inline Matrix adapted_linear_backward(const Matrix& dy, const Matrix& x, const Matrix& w, const AdapterPair* pair,
                                      double scale, const LinearCache& cache, AdapterPair* grad, Matrix* dw) {
  Matrix dx = matmul_a_bt(dy, w);
  if (dw) add_scaled(*dw, matmul_at_b(x, dy));
  if (!pair || !grad) return dx;
  add_scaled(grad->b, matmul_at_b(cache.u, dy), scale);
  Matrix du = scaled(matmul_a_bt(dy, pair->b), scale);
  add_scaled(grad->a, matmul_at_b(cache.dropped, du));
  Matrix dd = matmul_a_bt(du, pair->a);
  if (!cache.mask.empty()) {
    auto d = dd.values();
    auto m = cache.mask.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= m[i];
  }
  add_scaled(dx, dd);
  return dx;
}

inline Matrix attention(const ModelGeometry& g, const Matrix& q, const Matrix& k, const Matrix& v,
                        std::vector<Matrix>* probs_out) {
  const std::size_t T = q.rows();
  const std::size_t hd = g.head_dim();
  const std::size_t group = g.group_size();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix ctx(T, g.d_q_out);
  if (probs_out) probs_out->assign(g.n_heads, Matrix());
  std::vector<double> scores(T);
  for (std::size_t h = 0; h < g.n_heads; ++h) {
    const std::size_t qo = h * hd;
    const std::size_t ko = (h / group) * hd;
    Matrix probs(T, T);
    for (std::size_t t = 0; t < T; ++t) {
      double mx = -1e300;
      for (std::size_t u = 0; u <= t; ++u) {
        double s = 0.0;
        for (std::size_t j = 0; j < hd; ++j) s += q(t, qo + j) * k(u, ko + j);
        scores[u] = s * inv_sqrt;
        mx = std::max(mx, scores[u]);
      }
      double z = 0.0;
      for (std::size_t u = 0; u <= t; ++u) {
        scores[u] = std::exp(scores[u] - mx);
        z += scores[u];
      }
      for (std::size_t u = 0; u <= t; ++u) {
        const double p = scores[u] / z;
        probs(t, u) = p;
        for (std::size_t j = 0; j < hd; ++j) ctx(t, qo + j) += p * v(u, ko + j);
      }
    }
    if (probs_out) (*probs_out)[h] = std::move(probs);
  }
  return ctx;
}

inline void attention_backward(const ModelGeometry& g, const LayerCache& c, const Matrix& dctx,
                               Matrix& dq, Matrix& dk, Matrix& dv) {
  const std::size_t T = c.q.rows();
  const std::size_t hd = g.head_dim();
  const std::size_t group = g.group_size();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  dq = Matrix(T, g.d_q_out);
  dk = Matrix(T, g.d_kv_out);
  dv = Matrix(T, g.d_kv_out);
  std::vector<double> dp(T);
  for (std::size_t h = 0; h < g.n_heads; ++h) {
    const std::size_t qo = h * hd;
    const std::size_t ko = (h / group) * hd;
    const Matrix& probs = c.probs[h];
    for (std::size_t t = 0; t < T; ++t) {
      double weighted = 0.0;
      for (std::size_t u = 0; u <= t; ++u) {
        double s = 0.0;
        for (std::size_t j = 0; j < hd; ++j) {
          s += dctx(t, qo + j) * c.v(u, ko + j);
          dv(u, ko + j) += probs(t, u) * dctx(t, qo + j);
        }
        dp[u] = s;
        weighted += probs(t, u) * s;
      }
      for (std::size_t u = 0; u <= t; ++u) {
        const double ds = probs(t, u) * (dp[u] - weighted) * inv_sqrt;
        if (ds == 0.0) continue;
        for (std::size_t j = 0; j < hd; ++j) {
          dq(t, qo + j) += ds * c.k(u, ko + j);
          dk(u, ko + j) += ds * c.q(t, qo + j);
        }
      }
    }
  }
}

inline const AdapterPair* pair_for(const AdapterSet* adapters, std::size_t layer, Target t) {
  return adapters ? adapters->find(layer, t) : nullptr;
}

inline void check_sequence(const ModelGeometry& g, const std::vector<TokenId>& tokens) {
  if (tokens.empty()) throw InputError("empty token sequence");
  if (tokens.size() > g.max_seq) {
    throw RangeError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq " +
                     std::to_string(g.max_seq));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= g.vocab_size) {
      throw InputError("token id " + std::to_string(t) + " outside vocabulary of size " +
                       std::to_string(g.vocab_size));
    }
  }
}

// Full forward over one sequence; fills `cache` when given.
inline Matrix forward_sequence(const TransformerWeights& w, const AdapterSet* adapters,
                               const std::vector<TokenId>& tokens, const ForwardMode& mode,
                               SequenceCache* cache) {
  const ModelGeometry& g = w.geometry;
  check_sequence(g, tokens);
  const std::size_t T = tokens.size();
  const double scale = adapters ? adapters->config().scaling() : 0.0;
  const double dropout = adapters ? adapters->config().dropout : 0.0;

  Matrix x(T, g.d_model);
  for (std::size_t t = 0; t < T; ++t) {
    auto xr = x.row(t);
    auto er = w.token_embedding.row(static_cast<std::size_t>(tokens[t]));
    auto pr = w.position_embedding.row(t);
    for (std::size_t i = 0; i < g.d_model; ++i) xr[i] = er[i] + pr[i];
  }
  if (cache) cache->layers.assign(g.n_layers, LayerCache{});

  for (std::size_t l = 0; l < g.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[l] : local;
    c.x_in = x;
    c.h1 = rmsnorm(x, lw.attn_norm, &c.inv_rms1);
    c.q = adapted_linear(c.h1, lw.wq, pair_for(adapters, l, Target::q), scale, dropout, mode, &c.lin_q);
    c.k = adapted_linear(c.h1, lw.wk, pair_for(adapters, l, Target::k), scale, dropout, mode, &c.lin_k);
    c.v = adapted_linear(c.h1, lw.wv, pair_for(adapters, l, Target::v), scale, dropout, mode, &c.lin_v);
    c.ctx = attention(g, c.q, c.k, c.v, cache ? &c.probs : nullptr);
    Matrix o = adapted_linear(c.ctx, lw.wo, pair_for(adapters, l, Target::o), scale, dropout, mode, &c.lin_o);
    add_scaled(x, o);
    c.x_mid = x;
    c.h2 = rmsnorm(x, lw.ffn_norm, &c.inv_rms2);
    c.z = matmul(c.h2, lw.w_up);
    c.act = Matrix(c.z.rows(), c.z.cols());
    auto zv = c.z.values();
    auto av = c.act.values();
    for (std::size_t i = 0; i < zv.size(); ++i) av[i] = zv[i] * sigmoid(zv[i]);
    add_scaled(x, matmul(c.act, lw.w_down));
  }

  std::vector<double> inv_rms;
  Matrix hf = rmsnorm(x, w.final_norm, &inv_rms);
  Matrix logits = matmul(hf, w.output_head);
  if (cache) {
    cache->x_final = std::move(x);
    cache->inv_rms_final = std::move(inv_rms);
    cache->h_final = std::move(hf);
    cache->logits = logits;
  }
  return logits;
}

// Backpropagates d(loss)/d(logits) into adapter gradients and, when `wgrads`
// is given, into base weight gradients.
inline void backward_sequence(const TransformerWeights& w, const AdapterSet* adapters,
                              const std::vector<TokenId>& tokens, const SequenceCache& cache,
                              const Matrix& dlogits, AdapterSet* grads, TransformerWeights* wgrads) {
  const ModelGeometry& g = w.geometry;
  const double scale = adapters ? adapters->config().scaling() : 0.0;
  auto find_grad = [&](std::size_t l, Target t) { return grads ? grads->find(l, t) : nullptr; };
  if (wgrads) add_scaled(wgrads->output_head, matmul_at_b(cache.h_final, dlogits));
  Matrix dh = matmul_a_bt(dlogits, w.output_head);
  Matrix dx = rmsnorm_backward(dh, cache.x_final, w.final_norm, cache.inv_rms_final,
                               wgrads ? &wgrads->final_norm : nullptr);

  for (std::size_t li = g.n_layers; li-- > 0;) {
    const LayerWeights& lw = w.layers[li];
    const LayerCache& c = cache.layers[li];
    LayerWeights* lg = wgrads ? &wgrads->layers[li] : nullptr;

    // feed-forward residual
    if (lg) add_scaled(lg->w_down, matmul_at_b(c.act, dx));
    Matrix dact = matmul_a_bt(dx, lw.w_down);
    auto zv = c.z.values();
    auto dav = dact.values();
    for (std::size_t i = 0; i < zv.size(); ++i) {
      const double s = sigmoid(zv[i]);
      dav[i] *= s * (1.0 + zv[i] * (1.0 - s));
    }
    if (lg) add_scaled(lg->w_up, matmul_at_b(c.h2, dact));
    Matrix dh2 = matmul_a_bt(dact, lw.w_up);
    add_scaled(dx, rmsnorm_backward(dh2, c.x_mid, lw.ffn_norm, c.inv_rms2, lg ? &lg->ffn_norm : nullptr));

    // attention residual
    Matrix dctx = adapted_linear_backward(dx, c.ctx, lw.wo, pair_for(adapters, li, Target::o), scale, c.lin_o,
                                          find_grad(li, Target::o), lg ? &lg->wo : nullptr);
    Matrix dq, dk, dv;
    attention_backward(g, c, dctx, dq, dk, dv);
    Matrix dh1 = adapted_linear_backward(dq, c.h1, lw.wq, pair_for(adapters, li, Target::q), scale, c.lin_q,
                                         find_grad(li, Target::q), lg ? &lg->wq : nullptr);
    add_scaled(dh1, adapted_linear_backward(dk, c.h1, lw.wk, pair_for(adapters, li, Target::k), scale, c.lin_k,
                                            find_grad(li, Target::k), lg ? &lg->wk : nullptr));
    add_scaled(dh1, adapted_linear_backward(dv, c.h1, lw.wv, pair_for(adapters, li, Target::v), scale, c.lin_v,
                                            find_grad(li, Target::v), lg ? &lg->wv : nullptr));
    add_scaled(dx, rmsnorm_backward(dh1, c.x_in, lw.attn_norm, c.inv_rms1, lg ? &lg->attn_norm : nullptr));
  }

  if (wgrads) {
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      auto dr = dx.row(t);
      auto er = wgrads->token_embedding.row(static_cast<std::size_t>(tokens[t]));
      auto pr = wgrads->position_embedding.row(t);
      for (std::size_t i = 0; i < dr.size(); ++i) {
        er[i] += dr[i];
        pr[i] += dr[i];
      }
    }
  }
}

// Mean masked cross-entropy of one sequence; writes d(loss)/d(logits) * weight.
inline double sequence_loss(const Matrix& logits, const std::vector<TokenId>& tokens,
                            const std::vector<std::uint8_t>& mask, Matrix* dlogits, double weight) {
  std::size_t count = 0;
  for (std::size_t t = 1; t < tokens.size(); ++t) count += mask[t] ? 1 : 0;
  if (count == 0) throw DegenerateError("batch row has an empty loss mask");
  if (dlogits) *dlogits = Matrix(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    if (!mask[t]) continue;
    auto row = logits.row(t - 1);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    const auto target = static_cast<std::size_t>(tokens[t]);
    total += log_z - row[target];
    if (dlogits) {
      auto d = dlogits->row(t - 1);
      const double coeff = weight / static_cast<double>(count);
      for (std::size_t j = 0; j < row.size(); ++j) d[j] = coeff * std::exp(row[j] - log_z);
      d[target] -= coeff;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

// Logits per batch row, each seq_len x vocab_size.
inline std::vector<Matrix> forward(const TransformerWeights& w, const AdapterSet* adapters,
                                   const Batch& batch, const ForwardMode& mode = {}) {
  batch.validate(w.geometry);
  if (adapters) check_adapters_match(w.geometry, *adapters);
  std::vector<Matrix> out;
  out.reserve(batch.size());
  for (const auto& seq : batch.tokens) out.push_back(detail::forward_sequence(w, adapters, seq, mode, nullptr));
  return out;
}

// Batch loss: mean over rows of each row's mean masked cross-entropy.
inline double batch_loss(const TransformerWeights& w, const AdapterSet* adapters, const Batch& batch,
                         const ForwardMode& mode = {}) {
  batch.validate(w.geometry);
  if (batch.size() == 0) throw DegenerateError("empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Matrix logits = detail::forward_sequence(w, adapters, batch.tokens[b], mode, nullptr);
    total += detail::sequence_loss(logits, batch.tokens[b], batch.loss_mask[b], nullptr, 1.0);
  }
  return total / static_cast<double>(batch.size());
}

struct LossAndGrads {
  double loss = 0.0;
  AdapterSet grads;  // same structure as the adapters
};

inline LossAndGrads loss_and_grads(const TransformerWeights& w, const AdapterSet& adapters,
                                   const Batch& batch, const ForwardMode& mode = {}) {
  batch.validate(w.geometry);
  check_adapters_match(w.geometry, adapters);
  if (batch.size() == 0) throw DegenerateError("empty batch");
  LossAndGrads out{0.0, adapters.zeros_like()};
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    detail::SequenceCache cache;
    Matrix logits = detail::forward_sequence(w, &adapters, batch.tokens[b], mode, &cache);
    Matrix dlogits;
    out.loss += weight * detail::sequence_loss(logits, batch.tokens[b], batch.loss_mask[b], &dlogits, weight);
    detail::backward_sequence(w, &adapters, batch.tokens[b], cache, dlogits, &out.grads, nullptr);
  }
  return out;
}

struct BaseLossAndGrads {
  double loss = 0.0;
  TransformerWeights grads;  // same shapes as the base weights
};

// Full-parameter gradients of the batch loss, no adapters.
inline BaseLossAndGrads base_loss_and_grads(const TransformerWeights& w, const Batch& batch) {
  batch.validate(w.geometry);
  if (batch.size() == 0) throw DegenerateError("empty batch");
  BaseLossAndGrads out{0.0, zeros_like(w)};
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    detail::SequenceCache cache;
    Matrix logits = detail::forward_sequence(w, nullptr, batch.tokens[b], {}, &cache);
    Matrix dlogits;
    out.loss += weight * detail::sequence_loss(logits, batch.tokens[b], batch.loss_mask[b], &dlogits, weight);
    detail::backward_sequence(w, nullptr, batch.tokens[b], cache, dlogits, nullptr, &out.grads);
  }
  return out;
}

inline std::vector<double> next_token_logits(const TransformerWeights& w, const AdapterSet* adapters,
                                             const std::vector<TokenId>& prompt) {
  Matrix logits = detail::forward_sequence(w, adapters, prompt, {}, nullptr);
  auto last = logits.row(logits.rows() - 1);
  return {last.begin(), last.end()};
}

// Greedy decoding. Returns the prompt followed by the generated tokens; stops
// after max_new tokens or when <EOS> is produced (the <EOS> is not appended).
inline std::vector<TokenId> generate(const TransformerWeights& w, const AdapterSet* adapters,
                                     const std::vector<TokenId>& prompt, std::size_t max_new) {
  if (prompt.size() + max_new > w.geometry.max_seq) {
    throw RangeError("prompt length " + std::to_string(prompt.size()) + " + max_new " +
                     std::to_string(max_new) + " exceeds max_seq " + std::to_string(w.geometry.max_seq));
  }
  std::vector<TokenId> seq = prompt;
  for (std::size_t i = 0; i < max_new; ++i) {
    auto logits = next_token_logits(w, adapters, seq);
    const auto best = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == tokens::eos) break;
    seq.push_back(best);
  }
  return seq;
}

// Yes iff logit(YES) > logit(NO) at the answer position; an exact tie reads as no.
inline bool classify_yes_no(const TransformerWeights& w, const AdapterSet* adapters,
                            const std::vector<TokenId>& prompt) {
  auto logits = next_token_logits(w, adapters, prompt);
  return logits[tokens::yes] > logits[tokens::no];
}

}  // namespace fedreview
