#pragma once

#include <cstdint>
#include <vector>

#include "fedreview/geometry.hpp"
#include "fedreview/numerics.hpp"

namespace fedreview {

struct LayerWeights {
  Matrix attn_norm;  // 1 x d_model gains
  Matrix wq;         // d_model x d_q_out
  Matrix wk;         // d_model x d_kv_out
  Matrix wv;         // d_model x d_kv_out
  Matrix wo;         // d_q_out x d_model
  Matrix ffn_norm;   // 1 x d_model gains
  Matrix w_up;       // d_model x d_ff
  Matrix w_down;     // d_ff x d_model

  Matrix& projection(Target t) noexcept {
    switch (t) {
      case Target::q:
        return wq;
      case Target::k:
        return wk;
      case Target::v:
        return wv;
      case Target::o:
        break;
    }
    return wo;
  }
  const Matrix& projection(Target t) const noexcept {
    return const_cast<LayerWeights*>(this)->projection(t);
  }

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

// Frozen base model. Projections use the row-vector convention y = x * W, so a
// projection from d to k is stored d x k.
struct TransformerWeights {
  ModelGeometry geometry;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_seq x d_model
  std::vector<LayerWeights> layers;
  Matrix final_norm;   // 1 x d_model
  Matrix output_head;  // d_model x vocab

  friend bool operator==(const TransformerWeights&, const TransformerWeights&) = default;
};

inline constexpr double kInitStd = 0.02;

// Normal(0, 0.02) matrices and unit norm gains; deterministic in `seed`.
inline TransformerWeights init_weights(const ModelGeometry& g, std::uint64_t seed) {
  g.validate();
  Rng rng(seed);
  auto normal = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    fill_normal(m, rng, kInitStd);
    return m;
  };
  TransformerWeights w;
  w.geometry = g;
  w.token_embedding = normal(g.vocab_size, g.d_model);
  w.position_embedding = normal(g.max_seq, g.d_model);
  for (std::size_t l = 0; l < g.n_layers; ++l) {
    LayerWeights lw;
    lw.attn_norm = Matrix(1, g.d_model, 1.0);
    lw.wq = normal(g.d_model, g.d_q_out);
    lw.wk = normal(g.d_model, g.d_kv_out);
    lw.wv = normal(g.d_model, g.d_kv_out);
    lw.wo = normal(g.d_q_out, g.d_model);
    lw.ffn_norm = Matrix(1, g.d_model, 1.0);
    lw.w_up = normal(g.d_model, g.d_ff);
    lw.w_down = normal(g.d_ff, g.d_model);
    w.layers.push_back(std::move(lw));
  }
  w.final_norm = Matrix(1, g.d_model, 1.0);
  w.output_head = normal(g.d_model, g.vocab_size);
  return w;
}

// Every base matrix, in a fixed order.
inline std::vector<Matrix*> parameters(TransformerWeights& w) {
  std::vector<Matrix*> out{&w.token_embedding, &w.position_embedding};
  for (auto& l : w.layers) {
    for (Matrix* m : {&l.attn_norm, &l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_norm, &l.w_up, &l.w_down}) out.push_back(m);
  }
  out.push_back(&w.final_norm);
  out.push_back(&w.output_head);
  return out;
}

inline std::vector<const Matrix*> parameters(const TransformerWeights& w) {
  auto ps = parameters(const_cast<TransformerWeights&>(w));
  return {ps.begin(), ps.end()};
}

inline TransformerWeights zeros_like(const TransformerWeights& w) {
  TransformerWeights z = w;
  for (Matrix* m : parameters(z)) m->fill(0.0);
  return z;
}

}  // namespace fedreview
