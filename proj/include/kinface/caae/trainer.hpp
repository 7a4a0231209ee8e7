#pragma once

#include <array>
#include <cmath>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

#include "kinface/caae/losses.hpp"
#include "kinface/numerics/adam.hpp"

namespace kinface::caae {

struct CaaeLossWeights {
  double reconstruction = 1.0;
  double dz = 1.0;
  // Image-adversarial pressure is kept small next to the per-pixel reconstruction.
  double dimg = 0.01;
};

struct CaaeTrainConfig {
  AdamConfig adam;
  CaaeLossWeights weights;
  std::size_t discriminator_steps = 1;
};

/// The five summed terms of the CAAE objective, as positive cross-entropies.
struct CaaeLossReport {
  double reconstruction = 0.0;  // L(x, G(E(x), l))
  double dz_prior = 0.0;        // -E log D_z(z*)
  double dz_encoded = 0.0;      // -E log(1 - D_z(E(x)))
  double dimg_real = 0.0;       // -E log D_img(x, l)
  double dimg_generated = 0.0;  // -E log(1 - D_img(G(E(x), l), l))

  static constexpr std::array<std::string_view, 5> kNames{"reconstruction", "dz_prior", "dz_encoded", "dimg_real",
                                                          "dimg_generated"};

  std::array<double, 5> values() const { return {reconstruction, dz_prior, dz_encoded, dimg_real, dimg_generated}; }

  bool finite() const {
    for (double v : values())
      if (!std::isfinite(v)) return false;
    return true;
  }

  CaaeLossReport& operator+=(const CaaeLossReport& o) {
    reconstruction += o.reconstruction;
    dz_prior += o.dz_prior;
    dz_encoded += o.dz_encoded;
    dimg_real += o.dimg_real;
    dimg_generated += o.dimg_generated;
    return *this;
  }
  CaaeLossReport scaled(double f) const {
    return {reconstruction * f, dz_prior * f, dz_encoded * f, dimg_real * f, dimg_generated * f};
  }
  friend bool operator==(const CaaeLossReport&, const CaaeLossReport&) = default;
};

/// In-memory labelled faces in training layout.
template <Real T>
struct FaceDataset {
  Tensor<T> images;  // [N, 3, S, S]
  Tensor<T> labels;  // [N, 20]

  std::size_t size() const { return images.dim(0); }

  static FaceDataset from(std::span<const FaceImage<T>> faces, std::span<const ConditionLabel> labels) {
    if (faces.size() != labels.size()) throw std::invalid_argument("faces and labels differ in length");
    return FaceDataset{image_batch<T>(faces), label_batch<T>(labels)};
  }

  std::pair<Tensor<T>, Tensor<T>> gather(std::span<const std::size_t> idx) const {
    const std::size_t per_img = images.size() / size(), per_lbl = labels.size() / size();
    Shape is = images.shape(), ls = labels.shape();
    is[0] = ls[0] = idx.size();
    Tensor<T> x(is), l(ls);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per_img), per_img,
                  x.data().begin() + static_cast<std::ptrdiff_t>(i * per_img));
      std::copy_n(labels.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per_lbl), per_lbl,
                  l.data().begin() + static_cast<std::ptrdiff_t>(i * per_lbl));
    }
    return {std::move(x), std::move(l)};
  }
};

namespace detail {
template <Real T>
class FreezeGuard {
 public:
  explicit FreezeGuard(std::initializer_list<ParameterSet<T>*> sets) : sets_(sets) {
    for (auto* s : sets_) s->set_trainable(false);
  }
  ~FreezeGuard() {
    for (auto* s : sets_) s->set_trainable(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<ParameterSet<T>*> sets_;
};
}  // namespace detail

/// Replaces the encoder's running statistics with the exact moments of its
/// pre-activations over `images` [N, 3, S, S].
template <Real T>
void calibrate_encoder_stats(CaaeModel<T>& model, const Tensor<T>& images, std::size_t batch_size = 64) {
  NoGradGuard guard;
  const std::size_t n = images.dim(0), per = images.size() / n, f = model.feature_dim();
  Tensor<double> sum({f}), sq({f});
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    Shape s = images.shape();
    s[0] = end - start;
    Tensor<T> chunk(s, std::vector<T>(images.data().begin() + static_cast<std::ptrdiff_t>(start * per),
                                      images.data().begin() + static_cast<std::ptrdiff_t>(end * per)));
    const auto pre = model.encoder_preactivation(Var<T>::constant(chunk)).value();
    for (std::size_t r = 0; r < end - start; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double v = pre[r * f + c];
        sum[c] += v;
        sq[c] += v * v;
      }
  }
  Tensor<T> mean({f}), var({f});
  for (std::size_t c = 0; c < f; ++c) {
    const double m = sum[c] / static_cast<double>(n);
    mean[c] = static_cast<T>(m);
    var[c] = static_cast<T>(std::max(0.0, sq[c] / static_cast<double>(n) - m * m));
  }
  model.set_encoder_stats(mean, var);
}

/**
 * Alternating CAAE optimisation.
 *
 * Each step first updates D_z and D_img on detached encoder/decoder outputs,
 * then updates E and G on the weighted sum of reconstruction and the
 * non-saturating adversarial terms with both discriminators frozen.
 */
template <Real T>
class CaaeTrainer {
 public:
  CaaeTrainer(CaaeModel<T>& model, CaaeTrainConfig config, std::uint64_t seed)
      : model_(model),
        config_(config),
        rng_(seed),
        encoder_opt_(model.encoder_params(), config.adam),
        decoder_opt_(model.decoder_params(), config.adam),
        dz_opt_(model.dz_params(), config.adam),
        dimg_opt_(model.dimg_params(), config.adam) {
    if (config_.discriminator_steps == 0) throw std::invalid_argument("discriminator_steps must be positive");
  }

  const CaaeTrainConfig& config() const { return config_; }

  CaaeLossReport step(const Tensor<T>& images, const Tensor<T>& labels) {
    const std::size_t batch = images.dim(0);
    auto x = Var<T>::constant(images);
    auto l = Var<T>::constant(labels);
    CaaeLossReport report;

    auto enc = model_.encode_training(x);
    Var<T> h = enc.features;
    Var<T> x_gen = model_.decode(h, l);
    auto h_fixed = Var<T>::constant(h.value());
    auto x_gen_fixed = Var<T>::constant(x_gen.value());

    for (std::size_t k = 0; k < config_.discriminator_steps; ++k) {
      auto z = Var<T>::constant(sample_prior<T>(batch, model_.feature_dim(), rng_));
      dz_opt_.zero_grad();
      dimg_opt_.zero_grad();
      auto dz = dz_losses(model_, h_fixed, z);
      auto dimg = dimg_losses(model_, x, x_gen_fixed, l);
      if (k == 0) {
        report.dz_prior = dz.real_term.value().item();
        report.dz_encoded = dz.fake_term.value().item();
        report.dimg_real = dimg.real_term.value().item();
        report.dimg_generated = dimg.fake_term.value().item();
      }
      backward(ops::add(dz.discriminator, dimg.discriminator));
      dz_opt_.step();
      dimg_opt_.step();
    }

    {
      detail::FreezeGuard<T> freeze{&model_.dz_params(), &model_.dimg_params()};
      encoder_opt_.zero_grad();
      decoder_opt_.zero_grad();
      auto recon = reconstruction_loss(x, x_gen);
      report.reconstruction = recon.value().item();
      Var<T> total = ops::scale(recon, static_cast<T>(config_.weights.reconstruction));
      const T eps = static_cast<T>(kProbabilityEpsilon);
      if (config_.weights.dz != 0.0) {
        auto adv = ops::binary_cross_entropy(model_.feature_discriminator(h), constant_targets<T>(batch, T{1}), eps);
        total = ops::add(total, ops::scale(adv, static_cast<T>(config_.weights.dz)));
      }
      if (config_.weights.dimg != 0.0) {
        auto adv = ops::binary_cross_entropy(model_.image_discriminator(x_gen, l), constant_targets<T>(batch, T{1}), eps);
        total = ops::add(total, ops::scale(adv, static_cast<T>(config_.weights.dimg)));
      }
      if (!report.finite()) throw NumericError("non-finite CAAE loss; step aborted");
      backward(total);
      encoder_opt_.step();
      decoder_opt_.step();
    }
    model_.update_encoder_stats(enc.batch_mean, enc.batch_var);
    return report;
  }

  /// One pass over the dataset in a seeded random order; returns mean losses.
  CaaeLossReport train_epoch(const FaceDataset<T>& data, std::size_t batch_size) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(std::span<std::size_t>(order));
    CaaeLossReport sum;
    std::size_t batches = 0;
    if (batch_size < 2 || data.size() < 2)
      throw std::invalid_argument("CAAE training needs batches of at least 2 images");
    for (std::size_t start = 0, end = 0; start < order.size(); start = end) {
      end = std::min(order.size(), start + batch_size);
      if (order.size() - end == 1) ++end;  // no singleton tail batch
      auto [x, l] = data.gather(std::span<const std::size_t>(order).subspan(start, end - start));
      sum += step(x, l);
      ++batches;
    }
    calibrate_encoder_stats(model_, data.images);
    return sum.scaled(1.0 / static_cast<double>(batches));
  }

 private:
  CaaeModel<T>& model_;
  CaaeTrainConfig config_;
  SeededRng rng_;
  AdamOptimizer<T> encoder_opt_, decoder_opt_, dz_opt_, dimg_opt_;
};

/// Mean reconstruction loss over a dataset without updating anything.
template <Real T>
double mean_reconstruction_loss(const CaaeModel<T>& model, const FaceDataset<T>& data, std::size_t batch_size = 64) {
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    auto [x, l] = data.gather(idx);
    auto xv = Var<T>::constant(x);
    auto rec = model.decode(model.encode(xv), Var<T>::constant(l));
    total += static_cast<double>(ops::mse(xv, rec).value().item()) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(data.size());
}

/// Encoder features for every image in the dataset, as [N, n].
template <Real T>
Tensor<T> encode_all(const CaaeModel<T>& model, const Tensor<T>& images, std::size_t batch_size = 64) {
  NoGradGuard guard;
  const std::size_t n = images.dim(0), per = images.size() / n;
  Tensor<T> out({n, model.feature_dim()});
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    Shape s = images.shape();
    s[0] = end - start;
    Tensor<T> chunk(s, std::vector<T>(images.data().begin() + static_cast<std::ptrdiff_t>(start * per),
                                      images.data().begin() + static_cast<std::ptrdiff_t>(end * per)));
    auto h = model.encode(Var<T>::constant(std::move(chunk)));
    std::copy(h.value().data().begin(), h.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * model.feature_dim()));
  }
  return out;
}

}  // namespace kinface::caae
