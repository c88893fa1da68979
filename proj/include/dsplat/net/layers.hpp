// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "dsplat/autodiff/ops.hpp"

#include <random>
#include <string>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::net {

using ad::Tensor;

/// Ordered, named trainable tensors. Names are dotted paths ("encoder.0.weight")
/// and are the keys used in checkpoints.
class ParameterSet {
  public:
    Tensor &add(std::string name, Tensor value);

    std::size_t size() const { return mEntries.size(); }
    const std::string &name(std::size_t i) const { return mEntries[i].first; }
    Tensor &operator[](std::size_t i) { return mEntries[i].second; }
    const Tensor &operator[](std::size_t i) const { return mEntries[i].second; }

    const Tensor *find(const std::string &name) const;
    std::size_t scalarCount() const;

    const std::vector<std::pair<std::string, Tensor>> &entries() const { return mEntries; }

  private:
    std::vector<std::pair<std::string, Tensor>> mEntries;
};

/// 'same'-padded (odd kernel) convolution with bias.
struct Conv2d {
    Tensor weight; ///< [O, C, k, k]
    Tensor bias;   ///< [O]
    int stride = 1;

    Tensor operator()(const Tensor &x) const;
    int outChannels() const { return static_cast<int>(weight.dim(0)); }
};

enum class Init {
    He,     ///< uniform, variance 2 / fan_in (followed by ReLU)
    Linear, ///< uniform, variance 1 / fan_in
    Zero,
};

/// Registers `<prefix>.weight` and `<prefix>.bias` in `params`. `gain` scales
/// the initial weights.
Conv2d makeConv(ParameterSet &params,
                const std::string &prefix,
                int in,
                int out,
                int kernel,
                int stride,
                Init init,
                std::mt19937_64 &rng,
                double gain = 1.0);

/// Adam with bias correction. State is keyed by parameter position, so the
/// same ParameterSet must be passed to every step.
class Adam {
  public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps   = 1e-8;
    };

    Adam() = default;
    explicit Adam(Options options) : mOptions(options) {}

    /// grads[i] matches params[i] in shape. Updates values in place.
    void step(ParameterSet &params, const std::vector<Tensor> &grads, double lr);
    long steps() const { return mStep; }

  private:
    Options mOptions{};
    long mStep = 0;
    std::vector<std::vector<double>> mM, mV;
};

} // namespace dsplat::inline DSPLAT_ABI::net
