// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/gradcheck.hpp"

#include "dsplat/autodiff/ops.hpp"
#include "dsplat/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dsplat::inline DSPLAT_ABI::ad {

Tensor
randomTensor(Shape shape, std::uint64_t seed, Real lo, Real hi, bool requiresGrad) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<Real> values(static_cast<std::size_t>(numel(shape)));
    for (Real &v : values) {
        v = static_cast<Real>(dist(rng));
    }
    return Tensor(std::move(shape), std::move(values), requiresGrad);
}

namespace {

double
probeObjective(const GradcheckFn &fn, const std::vector<Tensor> &inputs, const Tensor &probe) {
    TapeScope noTape(nullptr);
    const Tensor out = fn(inputs);
    if (out.shape() != probe.shape()) {
        throw ShapeError("gradcheck", out.shape(), probe.shape());
    }
    double acc      = 0;
    const auto ov   = out.values();
    const auto pv   = probe.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        acc += static_cast<double>(ov[i]) * static_cast<double>(pv[i]);
    }
    return acc;
}

} // namespace

GradcheckResult
gradcheck(const std::string &name,
          const GradcheckFn &fn,
          const std::vector<Tensor> &inputs,
          const GradcheckOptions &options) {
    std::vector<Tensor> params;
    params.reserve(inputs.size());
    for (const Tensor &t : inputs) {
        params.push_back(t.clone().setRequiresGrad(true));
    }

    Tape tape;
    Tensor probe;
    std::vector<Tensor> analytic;
    {
        TapeScope scope(tape);
        const Tensor out = fn(params);
        probe            = randomTensor(out.shape(), options.seed);
        const Tensor obj = sum(mul(out, probe));
        if (!obj.nodeOn(tape)) {
            // Output does not depend on any input: all gradients are zero.
            for (const Tensor &p : params) {
                analytic.push_back(Tensor::zeros(p.shape()));
            }
        } else {
            const GradientMap grads = tape.backward(obj);
            for (const Tensor &p : params) {
                analytic.push_back(grads.of(p));
            }
        }
    }

    GradcheckResult result;
    result.name = name;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto values = params[k].mutableValues();
        double num2 = 0;
        double ana2 = 0;
        double diff2 = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Real saved = values[i];
            values[i]        = static_cast<Real>(saved + options.step);
            const double fp  = probeObjective(fn, params, probe);
            values[i]        = static_cast<Real>(saved - options.step);
            const double fm  = probeObjective(fn, params, probe);
            values[i]        = saved;
            const double g   = (fp - fm) / (2 * options.step);
            const double a   = analytic[k].values()[i];
            num2 += g * g;
            ana2 += a * a;
            diff2 += (g - a) * (g - a);
        }
        const double scale = std::sqrt(std::max(num2, ana2));
        const double err   = scale < options.zeroThreshold ? std::sqrt(diff2) : std::sqrt(diff2) / scale;
        result.relErrors.push_back(err);
        result.maxRelError = std::max(result.maxRelError, err);
    }
    result.pass = result.maxRelError < options.tolerance;
    return result;
}

} // namespace dsplat::inline DSPLAT_ABI::ad
