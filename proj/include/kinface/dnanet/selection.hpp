#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinface/numerics/ops.hpp"
#include "kinface/numerics/rng.hpp"

namespace kinface::dnanet {

/// Per-gene choice of parent: 1 takes the father's gene, 0 the mother's.
struct SelectionMask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  void validate() const {
    for (auto b : bits)
      if (b > 1) throw std::invalid_argument("selection mask entries must be 0 or 1");
  }

  SelectionMask complement() const {
    SelectionMask c{bits};
    for (auto& b : c.bits) b = static_cast<std::uint8_t>(1 - b);
    return c;
  }

  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
};

inline SelectionMask sample_mask(std::size_t gene_dim, SeededRng& rng) {
  SelectionMask m;
  m.bits.resize(gene_dim);
  for (auto& b : m.bits) b = rng.bernoulli(0.5) ? 1 : 0;
  return m;
}

inline void check_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

/// Elementwise maximum of two parents' genes.
template <Real T>
Tensor<T> select_max(const Tensor<T>& g_father, const Tensor<T>& g_mother) {
  check_same_length(g_father.size(), g_mother.size(), "select_max");
  if (g_father.shape() != g_mother.shape()) throw ShapeError("select_max: shape mismatch");
  Tensor<T> out(g_father.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(g_father[i], g_mother[i]);
  return out;
}

/// g_child_i = r_i * g_father_i + (1 - r_i) * g_mother_i
template <Real T>
Tensor<T> select_mask(const Tensor<T>& g_father, const Tensor<T>& g_mother, const SelectionMask& r) {
  check_same_length(g_father.size(), g_mother.size(), "select_mask");
  check_same_length(g_father.size(), r.size(), "select_mask");
  if (g_father.shape() != g_mother.shape()) throw ShapeError("select_mask: shape mismatch");
  r.validate();
  Tensor<T> out(g_father.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T ri = static_cast<T>(r.bits[i]);
    out[i] = ri * g_father[i] + (T{1} - ri) * g_mother[i];
  }
  return out;
}

/// Differentiable max rule over batched genes [B, m].
template <Real T>
Var<T> select_max(const Var<T>& g_father, const Var<T>& g_mother) {
  return ops::maximum(g_father, g_mother);
}

/// Differentiable mask rule; the same mask applies to every row of [B, m].
template <Real T>
Var<T> select_mask(const Var<T>& g_father, const Var<T>& g_mother, const SelectionMask& r) {
  const auto& s = g_father.shape();
  if (s != g_mother.shape()) throw ShapeError("select_mask: shape mismatch");
  check_same_length(s.back(), r.size(), "select_mask");
  r.validate();
  Tensor<T> take_father(s), take_mother(s);
  for (std::size_t i = 0; i < take_father.size(); ++i) {
    take_father[i] = static_cast<T>(r.bits[i % r.size()]);
    take_mother[i] = T{1} - take_father[i];
  }
  return ops::add(ops::mul(Var<T>::constant(std::move(take_father)), g_father),
                  ops::mul(Var<T>::constant(std::move(take_mother)), g_mother));
}

}  // namespace kinface::dnanet
