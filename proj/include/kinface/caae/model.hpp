#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinface/caae/label.hpp"
#include "kinface/numerics/layers.hpp"

namespace kinface::caae {

struct CaaeConfig {
  std::size_t image_side = 64;
  std::size_t feature_dim = 100;
  std::vector<std::size_t> encoder_widths{32, 64, 128, 256};
  std::size_t kernel = 5;
  std::vector<std::size_t> dimg_widths{16, 32, 64};
  std::vector<std::size_t> dz_widths{64, 32};
  float leaky_slope = 0.2f;
  // Encoder pre-activations are standardized per coordinate before tanh.
  double norm_eps = 1e-5;
  double norm_momentum = 0.1;

  static bool is_power_of_two(std::size_t v) { return v && !(v & (v - 1)); }

  void validate() const {
    if (!is_power_of_two(image_side) || image_side < 32)
      throw std::invalid_argument("image_side must be a power of two >= 32");
    if (feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
    if (encoder_widths.empty() || dimg_widths.empty() || dz_widths.empty())
      throw std::invalid_argument("network widths must be non-empty");
    if ((image_side >> encoder_widths.size()) == 0)
      throw std::invalid_argument("too many encoder stages for image_side");
    if ((image_side >> dimg_widths.size()) == 0)
      throw std::invalid_argument("too many discriminator stages for image_side");
    if (kernel % 2 == 0) throw std::invalid_argument("kernel must be odd");
    if (!(norm_eps > 0.0)) throw std::invalid_argument("norm_eps must be positive");
    if (!(norm_momentum > 0.0 && norm_momentum <= 1.0)) throw std::invalid_argument("norm_momentum must lie in (0, 1]");
  }

  std::size_t bottleneck_side() const { return image_side >> encoder_widths.size(); }
};

/// Face pixels in HWC layout, values in [-1, 1].
template <Real T = float>
struct FaceImage {
  Tensor<T> pixels;  // [S, S, 3]

  std::size_t side() const { return pixels.dim(0); }

  void validate() const {
    const auto& s = pixels.shape();
    if (s.size() != 3 || s[0] != s[1] || s[2] != 3) throw ShapeError("face image must be S x S x 3");
    for (auto v : pixels.data())
      if (!(v >= T{-1} && v <= T{1})) throw std::invalid_argument("face image pixel outside [-1, 1]");
  }
};

/// Stacks HWC images into an NCHW batch.
template <Real T>
Tensor<T> image_batch(std::span<const FaceImage<T>> images) {
  if (images.empty()) throw std::invalid_argument("empty image batch");
  const std::size_t S = images.front().side(), plane = S * S;
  Tensor<T> out({images.size(), 3, S, S});
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].pixels.shape() != Shape{S, S, 3}) throw ShapeError("image batch has mixed sizes");
    const auto& px = images[b].pixels;
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < 3; ++c) out[(b * 3 + c) * plane + i] = px[i * 3 + c];
  }
  return out;
}

template <Real T>
FaceImage<T> image_from_batch(const Tensor<T>& batch, std::size_t index) {
  const std::size_t S = batch.dim(2), plane = S * S;
  FaceImage<T> img{Tensor<T>({S, S, 3})};
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = batch[(index * 3 + c) * plane + i];
  return img;
}

/**
 * Conditional adversarial autoencoder.
 *
 * encoder E:   strided convolutions -> dense -> standardize -> tanh, image to
 *              feature vector; training passes use batch statistics, all
 *              other passes the running averages kept in encoder_stats()
 * decoder G:   dense -> transposed convolutions -> tanh, (feature, label) to image
 * dz D_z:      dense stack -> sigmoid, feature vector to probability
 * dimg D_img:  strided convolutions over image with the label tiled as extra
 *              channels -> dense -> sigmoid
 */
template <Real T = float>
class CaaeModel {
 public:
  CaaeModel(CaaeConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    SeededRng root(seed);
    build_encoder(root.fork(1));
    build_decoder(root.fork(2));
    build_dz(root.fork(3));
    build_dimg(root.fork(4));
  }

  // Parameter handles point into this model's nodes, so copies would alias.
  CaaeModel(const CaaeModel&) = delete;
  CaaeModel& operator=(const CaaeModel&) = delete;
  CaaeModel(CaaeModel&&) = default;
  CaaeModel& operator=(CaaeModel&&) = default;

  const CaaeConfig& config() const { return config_; }
  std::size_t feature_dim() const { return config_.feature_dim; }
  std::size_t image_side() const { return config_.image_side; }

  ParameterSet<T>& encoder_params() { return encoder_params_; }
  ParameterSet<T>& decoder_params() { return decoder_params_; }
  ParameterSet<T>& dz_params() { return dz_params_; }
  ParameterSet<T>& dimg_params() { return dimg_params_; }
  const ParameterSet<T>& encoder_params() const { return encoder_params_; }
  const ParameterSet<T>& decoder_params() const { return decoder_params_; }
  const ParameterSet<T>& dz_params() const { return dz_params_; }
  const ParameterSet<T>& dimg_params() const { return dimg_params_; }
  // Running mean/variance of the encoder pre-activations; never optimised.
  ParameterSet<T>& encoder_stats() { return encoder_stats_; }
  const ParameterSet<T>& encoder_stats() const { return encoder_stats_; }

  ParameterSet<T> all_params() const {
    ParameterSet<T> all;
    all.append(encoder_params_);
    all.append(encoder_stats_);
    all.append(decoder_params_);
    all.append(dz_params_);
    all.append(dimg_params_);
    return all;
  }

  /// images [B, 3, S, S] -> features [B, n]
  Var<T> encode(const Var<T>& images) const {
    const auto pre = encoder_preactivation(images);
    return ops::tanh(ops::standardize_columns(pre, encoder_stats_[0].value(), encoder_stats_[1].value(),
                                              static_cast<T>(config_.norm_eps)));
  }

  struct TrainingEncoding {
    Var<T> features;
    Tensor<T> batch_mean, batch_var;
  };

  /// Training-mode encoding: standardizes with the batch's own statistics,
  /// which are returned for update_encoder_stats().
  TrainingEncoding encode_training(const Var<T>& images) const {
    const auto pre = encoder_preactivation(images);
    if (pre.shape()[0] < 2) throw std::invalid_argument("training-mode encoding needs a batch of at least 2");
    auto [mean, var] = ops::column_moments(pre.value());
    return {ops::tanh(ops::batch_standardize(pre, static_cast<T>(config_.norm_eps))), std::move(mean),
            std::move(var)};
  }

  void update_encoder_stats(const Tensor<T>& batch_mean, const Tensor<T>& batch_var) {
    const T m = static_cast<T>(config_.norm_momentum);
    auto& rm = encoder_stats_[0].value();
    auto& rv = encoder_stats_[1].value();
    if (batch_mean.shape() != rm.shape() || batch_var.shape() != rv.shape())
      throw ShapeError("encoder statistics have the wrong shape");
    for (std::size_t i = 0; i < rm.size(); ++i) {
      rm[i] = (T{1} - m) * rm[i] + m * batch_mean[i];
      rv[i] = (T{1} - m) * rv[i] + m * batch_var[i];
    }
  }

  void set_encoder_stats(const Tensor<T>& mean, const Tensor<T>& var) {
    if (mean.shape() != encoder_stats_[0].value().shape() || var.shape() != encoder_stats_[1].value().shape())
      throw ShapeError("encoder statistics have the wrong shape");
    encoder_stats_[0].value() = mean;
    encoder_stats_[1].value() = var;
  }

  /// Dense output of the encoder before standardization and tanh.
  Var<T> encoder_preactivation(const Var<T>& images) const {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != config_.image_side || s[3] != config_.image_side)
      throw ShapeError("encoder expects [B,3," + std::to_string(config_.image_side) + "," +
                       std::to_string(config_.image_side) + "], got " + shape_string(s));
    Var<T> x = images;
    for (const auto& conv : encoder_convs_) x = ops::relu(conv(x));
    x = ops::reshape(x, {s[0], x.value().size() / s[0]});
    return encoder_fc_(x);
  }

  /// (features [B, n], labels [B, 20]) -> images [B, 3, S, S]
  Var<T> decode(const Var<T>& features, const Var<T>& labels) const {
    check_features(features, "decoder");
    check_labels(labels, features.shape()[0], "decoder");
    const std::size_t batch = features.shape()[0], side = config_.bottleneck_side();
    Var<T> x = ops::relu(decoder_fc_(ops::concat<T>({features, labels}, 1)));
    x = ops::reshape(x, {batch, config_.encoder_widths.back(), side, side});
    for (std::size_t i = 0; i < decoder_deconvs_.size(); ++i) {
      x = decoder_deconvs_[i](x);
      x = i + 1 < decoder_deconvs_.size() ? ops::relu(x) : ops::tanh(x);
    }
    return x;
  }

  /// features [B, n] -> probability [B, 1] that the input was drawn from the prior
  Var<T> feature_discriminator(const Var<T>& features) const {
    check_features(features, "feature discriminator");
    Var<T> x = features;
    for (const auto& fc : dz_hidden_) x = ops::leaky_relu(fc(x), static_cast<T>(config_.leaky_slope));
    return ops::sigmoid(dz_out_(x));
  }

  /// (images [B, 3, S, S], labels [B, 20]) -> probability [B, 1] that the pair is real
  Var<T> image_discriminator(const Var<T>& images, const Var<T>& labels) const {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != 3 || s[2] != config_.image_side || s[3] != config_.image_side)
      throw ShapeError("image discriminator got " + shape_string(s));
    check_labels(labels, s[0], "image discriminator");
    Var<T> x = ops::concat<T>({images, ops::broadcast_spatial(labels, s[2], s[3])}, 1);
    for (const auto& conv : dimg_convs_) x = ops::leaky_relu(conv(x), static_cast<T>(config_.leaky_slope));
    x = ops::reshape(x, {s[0], x.value().size() / s[0]});
    return ops::sigmoid(dimg_fc_(x));
  }

 private:
  void check_features(const Var<T>& f, const char* who) const {
    if (f.value().rank() != 2 || f.shape()[1] != config_.feature_dim)
      throw ShapeError(std::string(who) + " expects features [B," + std::to_string(config_.feature_dim) + "], got " +
                       shape_string(f.shape()));
  }
  void check_labels(const Var<T>& l, std::size_t batch, const char* who) const {
    if (l.value().rank() != 2 || l.shape()[0] != batch || l.shape()[1] != kLabelDim)
      throw ShapeError(std::string(who) + " expects labels [" + std::to_string(batch) + ",20], got " +
                       shape_string(l.shape()));
  }

  void build_encoder(SeededRng rng) {
    std::size_t in = 3;
    const std::size_t k = config_.kernel, pad = k / 2;
    for (std::size_t i = 0; i < config_.encoder_widths.size(); ++i) {
      const std::size_t out = config_.encoder_widths[i];
      encoder_convs_.emplace_back(encoder_params_, "encoder.conv" + std::to_string(i), in, out, k, 2, pad, rng);
      in = out;
    }
    const std::size_t side = config_.bottleneck_side();
    encoder_fc_ = DenseLayer<T>(encoder_params_, "encoder.fc", in * side * side, config_.feature_dim, rng);
    encoder_stats_.add("encoder.norm.running_mean", Tensor<T>({config_.feature_dim}, T{0})).set_trainable(false);
    encoder_stats_.add("encoder.norm.running_var", Tensor<T>({config_.feature_dim}, T{1})).set_trainable(false);
  }

  void build_decoder(SeededRng rng) {
    const std::size_t side = config_.bottleneck_side(), k = config_.kernel, pad = k / 2;
    const auto& w = config_.encoder_widths;
    decoder_fc_ = DenseLayer<T>(decoder_params_, "decoder.fc", config_.feature_dim + kLabelDim, w.back() * side * side,
                                rng);
    for (std::size_t i = w.size(); i-- > 0;) {
      const std::size_t in = w[i], out = i == 0 ? 3 : w[i - 1];
      decoder_deconvs_.emplace_back(decoder_params_, "decoder.deconv" + std::to_string(w.size() - 1 - i), in, out, k,
                                    2, pad, 1, rng);
    }
  }

  void build_dz(SeededRng rng) {
    std::size_t in = config_.feature_dim;
    for (std::size_t i = 0; i < config_.dz_widths.size(); ++i) {
      dz_hidden_.emplace_back(dz_params_, "dz.fc" + std::to_string(i), in, config_.dz_widths[i], rng);
      in = config_.dz_widths[i];
    }
    dz_out_ = DenseLayer<T>(dz_params_, "dz.out", in, 1, rng);
  }

  void build_dimg(SeededRng rng) {
    std::size_t in = 3 + kLabelDim;
    const std::size_t k = config_.kernel, pad = k / 2;
    for (std::size_t i = 0; i < config_.dimg_widths.size(); ++i) {
      dimg_convs_.emplace_back(dimg_params_, "dimg.conv" + std::to_string(i), in, config_.dimg_widths[i], k, 2, pad,
                               rng);
      in = config_.dimg_widths[i];
    }
    const std::size_t side = config_.image_side >> config_.dimg_widths.size();
    dimg_fc_ = DenseLayer<T>(dimg_params_, "dimg.fc", in * side * side, 1, rng);
  }

  CaaeConfig config_;
  ParameterSet<T> encoder_params_, encoder_stats_, decoder_params_, dz_params_, dimg_params_;
  std::vector<Conv2dLayer<T>> encoder_convs_;
  DenseLayer<T> encoder_fc_;
  DenseLayer<T> decoder_fc_;
  std::vector<ConvTranspose2dLayer<T>> decoder_deconvs_;
  std::vector<DenseLayer<T>> dz_hidden_;
  DenseLayer<T> dz_out_;
  std::vector<Conv2dLayer<T>> dimg_convs_;
  DenseLayer<T> dimg_fc_;
};

/// Feature vector of one face; deterministic, inside [-1, 1]^n.
template <Real T>
Tensor<T> encode(const CaaeModel<T>& model, const FaceImage<T>& image) {
  if (image.pixels.shape() != Shape{model.image_side(), model.image_side(), 3})
    throw ShapeError("image size " + shape_string(image.pixels.shape()) + " does not match model side " +
                     std::to_string(model.image_side()));
  NoGradGuard guard;
  const FaceImage<T> one[] = {image};
  auto h = model.encode(Var<T>::constant(image_batch<T>(one)));
  return h.value().reshaped({model.feature_dim()});
}

/// Face for a feature vector under an age/gender label.
template <Real T>
FaceImage<T> decode(const CaaeModel<T>& model, const Tensor<T>& feature, const ConditionLabel& label) {
  if (feature.size() != model.feature_dim())
    throw ShapeError("feature length " + std::to_string(feature.size()) + " does not match model dimension " +
                     std::to_string(model.feature_dim()));
  NoGradGuard guard;
  const ConditionLabel one[] = {label};
  auto x = model.decode(Var<T>::constant(feature.reshaped({1, model.feature_dim()})),
                        Var<T>::constant(label_batch<T>(one)));
  return image_from_batch(x.value(), 0);
}

}  // namespace kinface::caae
