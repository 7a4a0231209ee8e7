#pragma once

#include <cmath>
#include <string>

#include "kinface/numerics/ops.hpp"
#include "kinface/numerics/rng.hpp"

namespace kinface {

// Glorot-uniform: U[-s, s] with s = sqrt(6 / (fan_in + fan_out)).
template <Real T>
Tensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  Tensor<T> t(std::move(shape));
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-s, s));
  return t;
}

template <Real T>
struct DenseLayer {
  Parameter<T> weight;  // [in, out]
  Parameter<T> bias;    // [out]

  DenseLayer() = default;
  DenseLayer(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, SeededRng& rng)
      : weight(params.add(name + ".weight", glorot_uniform<T>({in, out}, in, out, rng))),
        bias(params.add(name + ".bias", Tensor<T>({out}))) {}

  std::size_t in_features() const { return weight.value().dim(0); }
  std::size_t out_features() const { return weight.value().dim(1); }

  Var<T> operator()(const Var<T>& x) const { return ops::dense(x, weight.var(), bias.var()); }
};

template <Real T>
struct Conv2dLayer {
  Parameter<T> weight;  // [out, in, k, k]
  Parameter<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
              std::size_t stride_, std::size_t pad_, SeededRng& rng)
      : weight(params.add(name + ".weight",
                          glorot_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, out * kernel * kernel, rng))),
        bias(params.add(name + ".bias", Tensor<T>({out}))),
        stride(stride_),
        pad(pad_) {}

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight.var(), bias.var(), stride, pad); }
};

template <Real T>
struct ConvTranspose2dLayer {
  Parameter<T> weight;  // [in, out, k, k]
  Parameter<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t output_pad = 0;

  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride_, std::size_t pad_, std::size_t output_pad_,
                       SeededRng& rng)
      : weight(params.add(name + ".weight",
                          glorot_uniform<T>({in, out, kernel, kernel}, in * kernel * kernel, out * kernel * kernel, rng))),
        bias(params.add(name + ".bias", Tensor<T>({out}))),
        stride(stride_),
        pad(pad_),
        output_pad(output_pad_) {}

  Var<T> operator()(const Var<T>& x) const {
    return ops::conv_transpose2d(x, weight.var(), bias.var(), stride, pad, output_pad);
  }
};

}  // namespace kinface
