#pragma once

// Dense matrices, replayable RNG, and the optimizer stack used for local
// fine-tuning: AdamW with decoupled weight decay, cosine learning rate with
// linear warmup, and global-norm gradient clipping.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedreview/errors.hpp"

namespace fedreview {

// Row-major matrix of binary64 values.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(rows_, cols_));
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(double v) noexcept {
    for (double& x : data_) x = v;
  }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_string() const { return shape_string(rows_, cols_); }
  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

  // Bitwise equality on shape and values.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto br = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

// a^T * b
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_at_b shape mismatch: " + a.shape_string() + "^T x " +
                         b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ar = a.row(k);
    auto br = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      auto o = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

// a * b^T
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_a_bt shape mismatch: " + a.shape_string() + " x " +
                         b.shape_string() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// dst += scale * src
inline void add_scaled(Matrix& dst, const Matrix& src, double scale = 1.0) {
  if (!dst.same_shape(src)) {
    throw DimensionError("add shape mismatch: " + dst.shape_string() + " += " + src.shape_string());
  }
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

inline Matrix scaled(Matrix m, double scale) {
  for (double& v : m.values()) v *= scale;
  return m;
}

inline double squared_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return s;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.values())
    if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// RNG

struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t position = 0;
  friend bool operator==(const RngState&, const RngState&) = default;
};

inline std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based splitmix64: the value at stream position p depends only on
// (seed, p), so any draw can be replayed from its state.
class Rng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit Rng(std::uint64_t seed, std::uint64_t position = 0) : state_{seed, position} {}
  explicit Rng(RngState state) : state_(state) {}

  RngState state() const noexcept { return state_; }

  std::uint64_t next_u64() noexcept {
    ++state_.position;
    return splitmix64_mix(state_.seed + state_.position * kGolden);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Box-Muller, two draws per sample; no cached spare so the state stays (seed, position).
  double normal(double mean = 0.0, double stddev = 1.0) noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw RangeError("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  RngState state_;
};

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

inline std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Child seed derived from a parent seed and a sequence of tags.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t s = splitmix64_mix(seed + Rng::kGolden);
  for (std::uint64_t t : tags) s = splitmix64_mix(s ^ splitmix64_mix(t + Rng::kGolden));
  return s;
}

inline void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
}

// ---------------------------------------------------------------------------
// Optimizer stack

// Rescales every gradient in place so the global L2 norm is at most `max_norm`.
// Returns the applied scale (1 when already within bounds).
inline double clip_global_norm(std::span<Matrix> grads, double max_norm = 0.3) {
  if (!(max_norm > 0.0)) throw RangeError("max_norm must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!all_finite(grads[i])) {
      throw NumericError("non-finite gradient entry in matrix " + std::to_string(i));
    }
    sq += squared_norm(grads[i]);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0;
  const double scale = max_norm / norm;
  for (Matrix& g : grads)
    for (double& v : g.values()) v *= scale;
  return scale;
}

struct ClipResult {
  std::vector<Matrix> grads;
  double scale = 1.0;
};

inline ClipResult clip_global_norm(std::vector<Matrix> grads, double max_norm = 0.3) {
  const double scale = clip_global_norm(std::span<Matrix>(grads), max_norm);
  return {std::move(grads), scale};
}

struct LrSchedule {
  double base_lr = 3e-4;
  double warmup_ratio = 0.03;
  std::size_t total_steps = 0;

  void validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
      throw ConfigError("warmup_ratio must lie in [0, 1)");
    }
  }

  // Round half up.
  std::size_t warmup_steps() const noexcept {
    return static_cast<std::size_t>(std::floor(warmup_ratio * static_cast<double>(total_steps) + 0.5));
  }
};

// Linear warmup from 0 to base_lr, then half-cosine decay reaching 0 at total_steps.
inline double lr_at(const LrSchedule& s, std::size_t step) {
  if (step > s.total_steps) {
    throw RangeError("step " + std::to_string(step) + " exceeds total_steps " +
                     std::to_string(s.total_steps));
  }
  const std::size_t warm = s.warmup_steps();
  if (step < warm) return s.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  if (step == s.total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(s.total_steps - warm);
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(std::span<const Matrix* const> params) {
    OptimizerState s;
    for (const Matrix* p : params) {
      s.first_moment.emplace_back(p->rows(), p->cols());
      s.second_moment.emplace_back(p->rows(), p->cols());
    }
    return s;
  }
};

// One AdamW update applied in place. Weight decay multiplies the parameter
// directly and never enters the moment estimates.
inline void adamw_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
                       OptimizerState& state, double lr, const AdamWConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adamw_step: parameter/gradient/moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.first_moment[i]) ||
        !params[i]->same_shape(state.second_moment[i])) {
      throw DimensionError("adamw_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                           params[i]->shape_string() + " vs grad " + grads[i].shape_string());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= lr * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace fedreview
