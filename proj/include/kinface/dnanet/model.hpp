#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kinface/dnanet/selection.hpp"
#include "kinface/numerics/layers.hpp"

namespace kinface::dnanet {

struct DnaNetConfig {
  std::size_t feature_dim = 100;
  std::size_t gene_dim = 100;
  std::vector<std::size_t> hidden_widths{128, 128};
  std::vector<std::size_t> dh_widths{64, 32};
  float leaky_slope = 0.2f;

  void validate() const {
    if (feature_dim == 0 || gene_dim == 0) throw std::invalid_argument("feature_dim and gene_dim must be positive");
    if (hidden_widths.size() != 2) throw std::invalid_argument("gene networks have exactly two hidden layers");
    for (auto w : hidden_widths)
      if (w == 0) throw std::invalid_argument("hidden widths must be positive");
    if (dh_widths.empty()) throw std::invalid_argument("dh_widths must be non-empty");
  }
};

enum class SelectionMode { Max, Mask };

/**
 * Feature/gene mappings and the output discriminator.
 *
 *   gene_encoder (T_fg):  n -> h1 -> h2 -> m, rectifier hidden, linear output
 *   gene_decoder (T_gf):  m -> h2 -> h1 -> n, rectifier hidden, tanh output
 *   discriminator (D_h):  n -> ... -> 1, leaky rectifier hidden, sigmoid output
 */
template <Real T = float>
class DnaNetModel {
 public:
  DnaNetModel(DnaNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    SeededRng root(seed);
    {
      SeededRng rng = root.fork(1);
      const auto& h = config_.hidden_widths;
      gene_encoder_.emplace_back(gene_encoder_params_, "tfg.fc0", config_.feature_dim, h[0], rng);
      gene_encoder_.emplace_back(gene_encoder_params_, "tfg.fc1", h[0], h[1], rng);
      gene_encoder_.emplace_back(gene_encoder_params_, "tfg.fc2", h[1], config_.gene_dim, rng);
    }
    {
      SeededRng rng = root.fork(2);
      const auto& h = config_.hidden_widths;
      gene_decoder_.emplace_back(gene_decoder_params_, "tgf.fc0", config_.gene_dim, h[1], rng);
      gene_decoder_.emplace_back(gene_decoder_params_, "tgf.fc1", h[1], h[0], rng);
      gene_decoder_.emplace_back(gene_decoder_params_, "tgf.fc2", h[0], config_.feature_dim, rng);
    }
    {
      SeededRng rng = root.fork(3);
      std::size_t in = config_.feature_dim;
      for (std::size_t i = 0; i < config_.dh_widths.size(); ++i) {
        dh_.emplace_back(dh_params_, "dh.fc" + std::to_string(i), in, config_.dh_widths[i], rng);
        in = config_.dh_widths[i];
      }
      dh_.emplace_back(dh_params_, "dh.out", in, 1, rng);
    }
  }

  DnaNetModel(const DnaNetModel&) = delete;
  DnaNetModel& operator=(const DnaNetModel&) = delete;
  DnaNetModel(DnaNetModel&&) = default;
  DnaNetModel& operator=(DnaNetModel&&) = default;

  const DnaNetConfig& config() const { return config_; }
  std::size_t feature_dim() const { return config_.feature_dim; }
  std::size_t gene_dim() const { return config_.gene_dim; }

  ParameterSet<T>& gene_encoder_params() { return gene_encoder_params_; }
  ParameterSet<T>& gene_decoder_params() { return gene_decoder_params_; }
  ParameterSet<T>& dh_params() { return dh_params_; }
  const ParameterSet<T>& gene_encoder_params() const { return gene_encoder_params_; }
  const ParameterSet<T>& gene_decoder_params() const { return gene_decoder_params_; }
  const ParameterSet<T>& dh_params() const { return dh_params_; }

  ParameterSet<T> all_params() const {
    ParameterSet<T> all;
    all.append(gene_encoder_params_);
    all.append(gene_decoder_params_);
    all.append(dh_params_);
    return all;
  }

  /// features [B, n] -> genes [B, m]
  Var<T> genes(const Var<T>& features) const {
    check_cols(features, config_.feature_dim, "gene encoder");
    Var<T> x = ops::relu(gene_encoder_[0](features));
    x = ops::relu(gene_encoder_[1](x));
    return gene_encoder_[2](x);
  }

  /// genes [B, m] -> features [B, n] in [-1, 1]
  Var<T> features(const Var<T>& genes) const {
    check_cols(genes, config_.gene_dim, "gene decoder");
    Var<T> x = ops::relu(gene_decoder_[0](genes));
    x = ops::relu(gene_decoder_[1](x));
    return ops::tanh(gene_decoder_[2](x));
  }

  /// T(h_f, h_m) = T_gf(S(T_fg(h_f), T_fg(h_m))) over batches.
  Var<T> child(const Var<T>& father, const Var<T>& mother, SelectionMode mode = SelectionMode::Max,
               const SelectionMask* mask = nullptr) const {
    if (father.shape() != mother.shape()) throw ShapeError("parent feature batches differ in shape");
    const Var<T> gf = genes(father), gm = genes(mother);
    if (mode == SelectionMode::Max) return features(select_max(gf, gm));
    if (!mask) throw std::invalid_argument("mask selection requires a mask");
    return features(select_mask(gf, gm, *mask));
  }

  /// features [B, n] -> probability [B, 1] of coming from the prior
  Var<T> discriminator(const Var<T>& features) const {
    check_cols(features, config_.feature_dim, "feature discriminator");
    Var<T> x = features;
    for (std::size_t i = 0; i + 1 < dh_.size(); ++i)
      x = ops::leaky_relu(dh_[i](x), static_cast<T>(config_.leaky_slope));
    return ops::sigmoid(dh_.back()(x));
  }

 private:
  static void check_cols(const Var<T>& v, std::size_t cols, const char* who) {
    if (v.value().rank() != 2 || v.shape()[1] != cols)
      throw ShapeError(std::string(who) + " expects [B," + std::to_string(cols) + "], got " + shape_string(v.shape()));
  }

  DnaNetConfig config_;
  ParameterSet<T> gene_encoder_params_, gene_decoder_params_, dh_params_;
  std::vector<DenseLayer<T>> gene_encoder_, gene_decoder_, dh_;
};

namespace detail {
template <Real T>
Var<T> as_row(const Tensor<T>& v, std::size_t expected, const char* who) {
  if (v.size() != expected)
    throw ShapeError(std::string(who) + ": expected length " + std::to_string(expected) + ", got " +
                     std::to_string(v.size()));
  return Var<T>::constant(v.reshaped({1, expected}));
}
}  // namespace detail

template <Real T>
Tensor<T> genes_from_feature(const DnaNetModel<T>& model, const Tensor<T>& h) {
  NoGradGuard guard;
  return model.genes(detail::as_row(h, model.feature_dim(), "genes_from_feature")).value().reshaped({model.gene_dim()});
}

template <Real T>
Tensor<T> feature_from_genes(const DnaNetModel<T>& model, const Tensor<T>& g) {
  NoGradGuard guard;
  return model.features(detail::as_row(g, model.gene_dim(), "feature_from_genes"))
      .value()
      .reshaped({model.feature_dim()});
}

/// Child feature from two parents' features under the max rule or a mask.
template <Real T>
Tensor<T> child_feature(const DnaNetModel<T>& model, const Tensor<T>& h_father, const Tensor<T>& h_mother,
                        SelectionMode mode, const std::optional<SelectionMask>& mask = std::nullopt) {
  const Tensor<T> gf = genes_from_feature(model, h_father);
  const Tensor<T> gm = genes_from_feature(model, h_mother);
  if (mode == SelectionMode::Max) return feature_from_genes(model, select_max(gf, gm));
  if (!mask) throw std::invalid_argument("mask selection requires a mask");
  return feature_from_genes(model, select_mask(gf, gm, *mask));
}

}  // namespace kinface::dnanet
