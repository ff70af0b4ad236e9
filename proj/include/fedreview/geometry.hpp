#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "fedreview/errors.hpp"

namespace fedreview {

// Attention projections that can carry a low-rank adapter.
enum class Target : std::uint8_t { q = 0, k = 1, v = 2, o = 3 };

inline constexpr std::array<Target, 4> kAllTargets{Target::q, Target::k, Target::v, Target::o};

inline std::string to_string(Target t) {
  switch (t) {
    case Target::q:
      return "q";
    case Target::k:
      return "k";
    case Target::v:
      return "v";
    case Target::o:
      return "o";
  }
  return "?";
}

inline Target parse_target(std::string_view s) {
  if (s == "q") return Target::q;
  if (s == "k") return Target::k;
  if (s == "v") return Target::v;
  if (s == "o") return Target::o;
  throw ConfigError("unknown target module '" + std::string(s) + "'");
}

struct ModelGeometry {
  std::size_t vocab_size = 0;
  std::size_t d_model = 0;
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_q_out = 0;
  std::size_t d_kv_out = 0;
  std::size_t d_ff = 0;
  std::size_t max_seq = 0;
  // Base parameter count used for trainable-fraction accounting; 0 = unknown.
  std::uint64_t total_base_params = 0;

  std::size_t head_dim() const noexcept { return d_q_out / n_heads; }
  std::size_t n_kv_heads() const noexcept { return d_kv_out / head_dim(); }
  std::size_t group_size() const noexcept { return n_heads / n_kv_heads(); }

  std::size_t in_dim(Target t) const noexcept { return t == Target::o ? d_q_out : d_model; }
  std::size_t out_dim(Target t) const noexcept {
    switch (t) {
      case Target::q:
        return d_q_out;
      case Target::k:
      case Target::v:
        return d_kv_out;
      case Target::o:
        return d_model;
    }
    return 0;
  }

  // Parameters of the trainable toy transformer (embeddings, projections, norms, head).
  std::uint64_t counted_params() const noexcept {
    const std::uint64_t per_layer = d_model * (d_q_out + 2 * d_kv_out) + d_q_out * d_model +
                                    2 * d_model * d_ff + 2 * d_model;
    return vocab_size * d_model + max_seq * d_model + n_layers * per_layer + d_model +
           d_model * vocab_size;
  }

  void validate() const {
    if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || d_q_out == 0 ||
        d_kv_out == 0 || d_ff == 0) {
      throw ConfigError("model geometry has a zero dimension");
    }
    if (d_q_out % n_heads != 0) throw ConfigError("d_q_out must be divisible by n_heads");
    if (d_kv_out > d_q_out) throw ConfigError("d_kv_out must not exceed d_q_out");
    if (d_kv_out % head_dim() != 0) throw ConfigError("d_kv_out must be a multiple of head_dim");
    if (n_heads % n_kv_heads() != 0) throw ConfigError("n_heads must be a multiple of kv heads");
    if (max_seq < 2) throw ConfigError("max_seq must be at least 2");
  }

  friend bool operator==(const ModelGeometry&, const ModelGeometry&) = default;

  // Trainable desk-scale preset. k/v are narrower than q/o (grouped-query attention).
  static ModelGeometry toy() {
    ModelGeometry g{64, 32, 2, 2, 32, 16, 64, 128, 0};
    g.total_base_params = g.counted_params();
    return g;
  }

  // Shape of an 8B grouped-query model; used only for adapter parameter accounting.
  static ModelGeometry llama3_8b_accounting() {
    return ModelGeometry{128256, 4096, 32, 32, 4096, 1024, 14336, 8192, 8'030'000'000ULL};
  }

  static ModelGeometry preset(std::string_view name) {
    if (name == "toy") return toy();
    if (name == "llama3-8b-accounting") return llama3_8b_accounting();
    throw ConfigError("unknown geometry preset '" + std::string(name) + "'");
  }
};

}  // namespace fedreview
