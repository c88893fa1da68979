// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/tape.hpp"
#include "dsplat/splat/render.hpp"

#include <fmt/format.h>

namespace dsplat::inline DSPLAT_ABI::splat {

using ad::Index;
using ad::Tensor;

namespace {

void
copyRows(const Tensor &t, std::vector<Real> &dst) {
    const auto v = t.values();
    dst.assign(v.begin(), v.end());
}

} // namespace

GaussianScene
SceneTensors::values() const {
    const Index n = opacities.numel();
    const auto check = [n](const Tensor &t, Index rows, const char *name) {
        if (t.ndim() != 2 || t.dim(0) != rows || t.dim(1) != n) {
            throw ad::ShapeError("render", fmt::format("{} must be [{}, {}], got {}", name, rows, n, ad::toString(t.shape())));
        }
    };
    check(means, 3, "means");
    check(quats, 4, "quats");
    check(scales, 3, "scales");
    check(opacities, 1, "opacities");
    check(base, 3, "base");
    check(sh, 3 * shCount(shDegree), "sh");
    GaussianScene s;
    s.shDegree = shDegree;
    copyRows(means, s.means);
    copyRows(quats, s.quats);
    copyRows(scales, s.scales);
    copyRows(opacities, s.opacities);
    copyRows(base, s.base);
    copyRows(sh, s.sh);
    return s;
}

SceneTensors
SceneTensors::fromScene(const GaussianScene &scene, bool requiresGrad) {
    const auto n = static_cast<Index>(scene.size());
    SceneTensors t;
    t.shDegree  = scene.shDegree;
    t.means     = Tensor({3, n}, scene.means, requiresGrad);
    t.quats     = Tensor({4, n}, scene.quats, requiresGrad);
    t.scales    = Tensor({3, n}, scene.scales, requiresGrad);
    t.opacities = Tensor({1, n}, scene.opacities, requiresGrad);
    t.base      = Tensor({3, n}, scene.base, requiresGrad);
    t.sh        = Tensor({3 * shCount(scene.shDegree), n}, scene.sh, requiresGrad);
    return t;
}

Tensor
renderOp(const SceneTensors &scene, const geom::Camera &cam, const RenderSettings &settings) {
    auto values          = std::make_shared<GaussianScene>(scene.values());
    RenderResult result  = render(*values, cam, settings);
    const Index H = cam.height, W = cam.width;
    return ad::makeResult(
        "render", {&scene.means, &scene.quats, &scene.scales, &scene.opacities, &scene.base, &scene.sh}, {3, H, W},
        std::move(result.image), [values, cam, settings](std::span<const Real> g, const ad::GradSinks &sinks) {
            const GaussianScene grad = renderBackward(*values, cam, settings, g);
            const std::vector<Real> *fields[6] = {&grad.means, &grad.quats,  &grad.scales,
                                                  &grad.opacities, &grad.base, &grad.sh};
            for (std::size_t k = 0; k < 6; ++k) {
                if (!sinks.wants(k)) {
                    continue;
                }
                auto dst = sinks[k];
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    dst[i] += (*fields[k])[i];
                }
            }
        });
}

} // namespace dsplat::inline DSPLAT_ABI::splat
