// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/net/layers.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace dsplat::inline DSPLAT_ABI::net {

Tensor &
ParameterSet::add(std::string name, Tensor value) {
    if (find(name)) {
        throw std::logic_error(fmt::format("parameter '{}' registered twice", name));
    }
    value.setRequiresGrad(true);
    mEntries.emplace_back(std::move(name), std::move(value));
    return mEntries.back().second;
}

const Tensor *
ParameterSet::find(const std::string &name) const {
    for (const auto &[n, t] : mEntries) {
        if (n == name) {
            return &t;
        }
    }
    return nullptr;
}

std::size_t
ParameterSet::scalarCount() const {
    std::size_t n = 0;
    for (const auto &e : mEntries) {
        n += static_cast<std::size_t>(e.second.numel());
    }
    return n;
}

Tensor
Conv2d::operator()(const Tensor &x) const {
    const int k = static_cast<int>(weight.dim(2));
    return ad::conv2d(x, weight, bias, {.stride = stride, .padding = k / 2});
}

Conv2d
makeConv(ParameterSet &params,
         const std::string &prefix,
         int in,
         int out,
         int kernel,
         int stride,
         Init init,
         std::mt19937_64 &rng,
         double gain) {
    const double fanIn = static_cast<double>(in) * kernel * kernel;
    double bound      = 0.0;
    switch (init) {
    case Init::He: bound = std::sqrt(6.0 / fanIn); break;
    case Init::Linear: bound = std::sqrt(3.0 / fanIn); break;
    case Init::Zero: bound = 0.0; break;
    }
    bound *= gain;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Real> w(static_cast<std::size_t>(out) * in * kernel * kernel);
    for (auto &v : w) {
        // Always draw so that the stream does not depend on the init kind.
        v = static_cast<Real>(bound * u(rng));
    }
    Conv2d c;
    c.stride = stride;
    c.weight = params.add(prefix + ".weight", Tensor({out, in, kernel, kernel}, std::move(w)));
    c.bias   = params.add(prefix + ".bias", Tensor::zeros({out}));
    return c;
}

void
Adam::step(ParameterSet &params, const std::vector<Tensor> &grads, double lr) {
    if (grads.size() != params.size()) {
        throw std::invalid_argument(fmt::format("adam: {} gradients for {} parameters", grads.size(), params.size()));
    }
    if (mM.empty()) {
        mM.resize(params.size());
        mV.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            mM[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
            mV[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
        }
    }
    ++mStep;
    const double b1 = mOptions.beta1, b2 = mOptions.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(mStep));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(mStep));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].mutableValues();
        auto g = grads[i].values();
        if (g.size() != p.size()) {
            throw std::invalid_argument(fmt::format("adam: gradient for '{}' has {} values, parameter has {}",
                                                    params.name(i), g.size(), p.size()));
        }
        auto &m = mM[i];
        auto &v = mV[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            m[j]            = b1 * m[j] + (1 - b1) * gj;
            v[j]            = b2 * v[j] + (1 - b2) * gj * gj;
            p[j] -= static_cast<Real>(lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + mOptions.eps));
        }
    }
}

} // namespace dsplat::inline DSPLAT_ABI::net
