#pragma once

#include <cmath>
#include <numeric>

#include "kinface/caae/losses.hpp"
#include "kinface/dnanet/model.hpp"
#include "kinface/numerics/adam.hpp"

namespace kinface::dnanet {

enum class ReconstructionNorm { L2, L1 };

inline const char* norm_name(ReconstructionNorm n) { return n == ReconstructionNorm::L2 ? "L2" : "L1"; }

inline ReconstructionNorm parse_norm(const std::string& s) {
  if (s == "L2" || s == "l2") return ReconstructionNorm::L2;
  if (s == "L1" || s == "l1") return ReconstructionNorm::L1;
  throw std::invalid_argument("unknown norm '" + s + "', expected L1 or L2");
}

/// Batch mean of per-row ||h_pred - h_child||.
template <Real T>
Var<T> reconstruction_loss(const Var<T>& h_pred, const Var<T>& h_child, ReconstructionNorm norm) {
  if (h_pred.shape() != h_child.shape()) throw ShapeError("dnanet reconstruction: shape mismatch");
  auto diff = ops::sub(h_pred, h_child);
  return ops::mean(norm == ReconstructionNorm::L2 ? ops::row_l2_norm(diff) : ops::row_l1_norm(diff));
}

template <Real T>
T reconstruction_loss(const Tensor<T>& h_pred, const Tensor<T>& h_child, ReconstructionNorm norm = ReconstructionNorm::L2) {
  check_same_length(h_pred.size(), h_child.size(), "dnanet_reconstruction_loss");
  NoGradGuard guard;
  return reconstruction_loss(Var<T>::constant(h_pred.reshaped({1, h_pred.size()})),
                             Var<T>::constant(h_child.reshaped({1, h_child.size()})), norm)
      .value()
      .item();
}

/// D_h game: prior samples are real, predicted child features are fake.
template <Real T>
caae::AdversarialTerms<T> dh_losses(const DnaNetModel<T>& model, const Var<T>& h_pred_batch,
                                    const Var<T>& z_prior_batch) {
  if (h_pred_batch.shape()[0] == 0 || z_prior_batch.shape()[0] == 0)
    throw std::invalid_argument("dh_losses: empty batch");
  return caae::adversarial_terms(model.discriminator(z_prior_batch), model.discriminator(h_pred_batch));
}

struct DnaNetLossWeights {
  double reconstruction = 1.0;
  double dh = 0.1;
};

struct DnaNetTrainConfig {
  AdamConfig adam;
  DnaNetLossWeights weights;
  ReconstructionNorm norm = ReconstructionNorm::L2;
  std::size_t discriminator_steps = 1;
};

struct DnaNetLossReport {
  double reconstruction = 0.0;
  double dh_discriminator = 0.0;
  double dh_generator = 0.0;

  bool finite() const {
    return std::isfinite(reconstruction) && std::isfinite(dh_discriminator) && std::isfinite(dh_generator);
  }
  DnaNetLossReport& operator+=(const DnaNetLossReport& o) {
    reconstruction += o.reconstruction;
    dh_discriminator += o.dh_discriminator;
    dh_generator += o.dh_generator;
    return *this;
  }
  DnaNetLossReport scaled(double f) const { return {reconstruction * f, dh_discriminator * f, dh_generator * f}; }
  friend bool operator==(const DnaNetLossReport&, const DnaNetLossReport&) = default;
};

/// Precomputed (father, mother, child) features, each [N, n].
template <Real T>
struct TripletFeatures {
  Tensor<T> father, mother, child;

  std::size_t size() const { return father.dim(0); }

  void validate() const {
    if (father.shape() != mother.shape() || father.shape() != child.shape())
      throw ShapeError("triplet feature tensors must share a shape");
  }

  TripletFeatures gather(std::span<const std::size_t> idx) const {
    const std::size_t n = father.dim(1);
    TripletFeatures out{Tensor<T>({idx.size(), n}), Tensor<T>({idx.size(), n}), Tensor<T>({idx.size(), n})};
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) {
        out.father[i * n + j] = father[idx[i] * n + j];
        out.mother[i * n + j] = mother[idx[i] * n + j];
        out.child[i * n + j] = child[idx[i] * n + j];
      }
    return out;
  }
};

/**
 * Alternating DNA-Net optimisation with the max selection rule: one D_h
 * update on detached predictions, then one update of T_fg and T_gf on the
 * weighted reconstruction and non-saturating adversarial terms.
 */
template <Real T>
class DnaNetTrainer {
 public:
  DnaNetTrainer(DnaNetModel<T>& model, DnaNetTrainConfig config, std::uint64_t seed)
      : model_(model),
        config_(config),
        rng_(seed),
        encoder_opt_(model.gene_encoder_params(), config.adam),
        decoder_opt_(model.gene_decoder_params(), config.adam),
        dh_opt_(model.dh_params(), config.adam) {
    if (config_.discriminator_steps == 0) throw std::invalid_argument("discriminator_steps must be positive");
  }

  DnaNetLossReport step(const TripletFeatures<T>& batch) {
    batch.validate();
    const std::size_t b = batch.size();
    DnaNetLossReport report;
    auto hf = Var<T>::constant(batch.father), hm = Var<T>::constant(batch.mother), hc = Var<T>::constant(batch.child);
    Var<T> pred = model_.child(hf, hm, SelectionMode::Max);
    auto pred_fixed = Var<T>::constant(pred.value());

    for (std::size_t k = 0; k < config_.discriminator_steps; ++k) {
      auto z = Var<T>::constant(caae::sample_prior<T>(b, model_.feature_dim(), rng_));
      dh_opt_.zero_grad();
      auto terms = dh_losses(model_, pred_fixed, z);
      if (k == 0) report.dh_discriminator = terms.discriminator.value().item();
      backward(terms.discriminator);
      dh_opt_.step();
    }

    model_.dh_params().set_trainable(false);
    try {
      encoder_opt_.zero_grad();
      decoder_opt_.zero_grad();
      auto recon = reconstruction_loss(pred, hc, config_.norm);
      auto adv = ops::binary_cross_entropy(model_.discriminator(pred), caae::constant_targets<T>(b, T{1}),
                                           static_cast<T>(caae::kProbabilityEpsilon));
      report.reconstruction = recon.value().item();
      report.dh_generator = adv.value().item();
      if (!report.finite()) throw NumericError("non-finite DNA-Net loss; step aborted");
      Var<T> total = ops::scale(recon, static_cast<T>(config_.weights.reconstruction));
      if (config_.weights.dh != 0.0) total = ops::add(total, ops::scale(adv, static_cast<T>(config_.weights.dh)));
      backward(total);
      encoder_opt_.step();
      decoder_opt_.step();
    } catch (...) {
      model_.dh_params().set_trainable(true);
      throw;
    }
    model_.dh_params().set_trainable(true);
    return report;
  }

  DnaNetLossReport train_epoch(const TripletFeatures<T>& data, std::size_t batch_size) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(order));
    DnaNetLossReport sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      sum += step(data.gather(std::span<const std::size_t>(order).subspan(start, end - start)));
      ++batches;
    }
    return sum.scaled(1.0 / static_cast<double>(batches));
  }

 private:
  DnaNetModel<T>& model_;
  DnaNetTrainConfig config_;
  SeededRng rng_;
  AdamOptimizer<T> encoder_opt_, decoder_opt_, dh_opt_;
};

/// Mean reconstruction loss of the max-rule prediction, without updates.
template <Real T>
double mean_reconstruction_loss(const DnaNetModel<T>& model, const TripletFeatures<T>& data,
                                ReconstructionNorm norm = ReconstructionNorm::L2) {
  NoGradGuard guard;
  auto pred = model.child(Var<T>::constant(data.father), Var<T>::constant(data.mother), SelectionMode::Max);
  return reconstruction_loss(pred, Var<T>::constant(data.child), norm).value().item();
}

}  // namespace kinface::dnanet
