#pragma once

#include <utility>

#include "kinface/caae/model.hpp"

namespace kinface::caae {

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Mean squared pixel difference.
template <Real T>
Var<T> reconstruction_loss(const Var<T>& x, const Var<T>& x_hat) {
  return ops::mse(x, x_hat);
}

template <Real T>
T reconstruction_loss(const FaceImage<T>& x, const FaceImage<T>& x_hat) {
  NoGradGuard guard;
  return ops::mse(Var<T>::constant(x.pixels), Var<T>::constant(x_hat.pixels)).value().item();
}

/// `count` i.i.d. draws from the uniform prior on [-1, 1]^dim, as [count, dim].
template <Real T>
Tensor<T> sample_prior(std::size_t count, std::size_t dim, SeededRng& rng) {
  if (count == 0) throw std::invalid_argument("sample_prior: count must be positive");
  Tensor<T> z({count, dim});
  for (auto& v : z.data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return z;
}

template <Real T>
Tensor<T> constant_targets(std::size_t batch, T value) {
  return Tensor<T>({batch, 1}, value);
}

/**
 * Cross-entropy terms of one adversarial game between a generator-side
 * sample and a prior/real sample.
 *
 *   real_term      = -mean log D(real)
 *   fake_term      = -mean log(1 - D(fake))
 *   discriminator  = real_term + fake_term
 *   generator      = -mean log D(fake)   (non-saturating form)
 */
template <Real T>
struct AdversarialTerms {
  Var<T> real_term;
  Var<T> fake_term;
  Var<T> discriminator;
  Var<T> generator;
};

template <Real T>
AdversarialTerms<T> adversarial_terms(const Var<T>& d_real, const Var<T>& d_fake) {
  const T eps = static_cast<T>(kProbabilityEpsilon);
  AdversarialTerms<T> t;
  t.real_term = ops::binary_cross_entropy(d_real, constant_targets<T>(d_real.shape()[0], T{1}), eps);
  t.fake_term = ops::binary_cross_entropy(d_fake, constant_targets<T>(d_fake.shape()[0], T{0}), eps);
  t.discriminator = ops::add(t.real_term, t.fake_term);
  t.generator = ops::binary_cross_entropy(d_fake, constant_targets<T>(d_fake.shape()[0], T{1}), eps);
  return t;
}

/// D_z game: prior samples are real, encoder outputs are fake.
template <Real T>
AdversarialTerms<T> dz_losses(const CaaeModel<T>& model, const Var<T>& h_real_batch, const Var<T>& z_prior_batch) {
  if (h_real_batch.shape()[0] == 0 || z_prior_batch.shape()[0] == 0)
    throw std::invalid_argument("dz_losses: empty batch");
  return adversarial_terms(model.feature_discriminator(z_prior_batch), model.feature_discriminator(h_real_batch));
}

/// D_img game: (x, l) pairs are real, (G(E(x), l), l) are fake.
template <Real T>
AdversarialTerms<T> dimg_losses(const CaaeModel<T>& model, const Var<T>& x_batch, const Var<T>& x_generated,
                                const Var<T>& l_batch) {
  return adversarial_terms(model.image_discriminator(x_batch, l_batch),
                           model.image_discriminator(x_generated, l_batch));
}

/// Convenience form that runs the autoencoder itself.
template <Real T>
AdversarialTerms<T> dimg_losses(const CaaeModel<T>& model, const Var<T>& x_batch, const Var<T>& l_batch) {
  return dimg_losses(model, x_batch, model.decode(model.encode(x_batch), l_batch), l_batch);
}

}  // namespace kinface::caae
