// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/selfcheck/gradient_suite.hpp"

#include "dsplat/autodiff/gradcheck.hpp"
#include "dsplat/autodiff/ops.hpp"
#include "dsplat/autodiff/tape.hpp"
#include "dsplat/geometry/plane_sweep.hpp"
#include "dsplat/net/model.hpp"
#include "dsplat/splat/render.hpp"
#include "dsplat/train/loss.hpp"

#include <cmath>
#include <random>

static_assert(dsplat::kDoublePrecision, "the gradient suite must be compiled in 64-bit");

namespace dsplat::selfcheck {

using namespace dsplat::ad;

namespace {

class Runner {
  public:
    explicit Runner(const ProgressFn &fn) : mProgress(fn) {}

    void check(const std::string &group, const std::string &name, const GradcheckFn &fn,
               const std::vector<Tensor> &inputs, double tol = kOpTolerance, double step = 1e-5) {
        GradcheckOptions opts;
        opts.tolerance = tol;
        opts.step      = step;
        const GradcheckResult r = gradcheck(name, fn, inputs, opts);
        add({group, name, r.maxRelError, tol, r.pass});
    }

    void add(const CheckResult &r) {
        results.push_back(r);
        if (mProgress) {
            mProgress(r);
        }
    }

    std::vector<CheckResult> results;

  private:
    const ProgressFn &mProgress;
};

/// Entries alternate in sign with magnitude in [0.2, 1.5]: no kinks at 0.
Tensor
awayFromZero(Shape shape, std::uint64_t seed) {
    Tensor t = randomTensor(std::move(shape), seed, 0.2, 1.5);
    auto v   = t.mutableValues();
    for (std::size_t i = 0; i < v.size(); i += 2) {
        v[i] = -v[i];
    }
    return t;
}

geom::Camera
pinhole(int w, int h, double f) {
    geom::Camera cam;
    cam.fx = cam.fy = f;
    cam.cx          = (w - 1) / 2.0;
    cam.cy          = (h - 1) / 2.0;
    cam.width       = w;
    cam.height      = h;
    return cam;
}

geom::Camera
orbit(double angleDeg, int size, double focal) {
    const double a = angleDeg * 3.14159265358979323846 / 180.0;
    return geom::lookAt(Eigen::Vector3d(3 * std::sin(a), -0.2, 3 * std::cos(a)), Eigen::Vector3d::Zero(),
                        Eigen::Vector3d(0, -1, 0), focal, focal, (size - 1) / 2.0, (size - 1) / 2.0, size, size);
}

splat::GaussianScene
clusterScene(std::size_t n, std::uint64_t seed, int degree) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::normal_distribution<double> g(0, 1);
    splat::GaussianScene scene(n, degree);
    for (std::size_t i = 0; i < n; ++i) {
        splat::GaussianPrimitive p;
        p.center  = splat::Vec3(0.5 * (u(rng) - 0.5), 0.5 * (u(rng) - 0.5), 0.5 * (u(rng) - 0.5));
        p.quat    = splat::Vec4(g(rng), g(rng), g(rng), g(rng)).normalized();
        p.scale   = splat::Vec3(0.15 + 0.2 * u(rng), 0.15 + 0.2 * u(rng), 0.15 + 0.2 * u(rng));
        p.opacity = 0.3 + 0.5 * u(rng);
        p.base    = splat::Vec3(u(rng), u(rng), u(rng));
        p.sh.assign(static_cast<std::size_t>(splat::shCount(degree)), splat::Vec3::Zero());
        for (auto &c : p.sh) {
            c = splat::Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * 0.3;
        }
        scene.set(i, p);
    }
    return scene;
}

/// Rendering without hard thresholds: every primitive touches every pixel,
/// so small perturbations never switch a contribution on or off.
splat::RenderSettings
smoothSettings() {
    splat::RenderSettings s;
    s.cutoff     = 1e3;
    s.minWeight  = 0;
    s.background = {0.1, 0.2, 0.3};
    return s;
}

void
opChecks(Runner &run) {
    const Tensor a = randomTensor({2, 3}, 11), b = awayFromZero({2, 3}, 12);
    run.check("op", "add", [](const auto &in) { return add(in[0], in[1]); }, {a, b});
    run.check("op", "sub", [](const auto &in) { return sub(in[0], in[1]); }, {a, b});
    run.check("op", "mul", [](const auto &in) { return mul(in[0], in[1]); }, {a, b});
    run.check("op", "div", [](const auto &in) { return div(in[0], in[1]); }, {a, b});
    run.check("op", "add_broadcast", [](const auto &in) { return add(in[0], in[1]); }, {randomTensor({4, 2, 3}, 13), a});
    run.check("op", "mul_broadcast_scalar", [](const auto &in) { return mul(in[0], in[1]); }, {a, randomTensor({1}, 14)});
    run.check("op", "add_scalar", [](const auto &in) { return addScalar(in[0], 0.7); }, {a});
    run.check("op", "mul_scalar", [](const auto &in) { return mulScalar(in[0], -1.3); }, {a});
    run.check("op", "neg", [](const auto &in) { return neg(in[0]); }, {a});
    run.check("op", "exp", [](const auto &in) { return exp(in[0]); }, {a});
    run.check("op", "log", [](const auto &in) { return log(in[0]); }, {randomTensor({6}, 15, 0.3, 2)});
    run.check("op", "sqrt", [](const auto &in) { return sqrt(in[0]); }, {randomTensor({6}, 16, 0.3, 2)});
    run.check("op", "abs", [](const auto &in) { return abs(in[0]); }, {awayFromZero({6}, 17)});
    run.check("op", "relu", [](const auto &in) { return relu(in[0]); }, {awayFromZero({6}, 18)});
    run.check("op", "sigmoid", [](const auto &in) { return sigmoid(in[0]); }, {randomTensor({6}, 19, -4, 4)});
    run.check("op", "softplus", [](const auto &in) { return softplus(in[0]); }, {randomTensor({6}, 20, -4, 4)});
    run.check("op", "clip", [](const auto &in) { return clip(in[0], -0.5, 0.5); },
              {Tensor({6}, {-0.9, -0.3, 0.1, 0.45, 0.7, -0.05})});
    run.check("op", "matmul", [](const auto &in) { return matmul(in[0], in[1]); },
              {randomTensor({3, 4}, 21), randomTensor({4, 2}, 22)});
    run.check("op", "conv2d", [](const auto &in) { return conv2d(in[0], in[1], in[2], {1, 1}); },
              {randomTensor({2, 5, 4}, 23), randomTensor({3, 2, 3, 3}, 24), randomTensor({3}, 25)});
    run.check("op", "conv2d_stride2", [](const auto &in) { return conv2d(in[0], in[1], Tensor(), {2, 1}); },
              {randomTensor({2, 6, 5}, 26), randomTensor({2, 2, 3, 3}, 27)});
    run.check("op", "conv2d_1x1", [](const auto &in) { return conv2d(in[0], in[1], in[2], {1, 0}); },
              {randomTensor({3, 4, 4}, 28), randomTensor({2, 3, 1, 1}, 29), randomTensor({2}, 30)});
    run.check("op", "bilinear_sample", [](const auto &in) { return bilinearSample(in[0], in[1]); },
              {randomTensor({2, 3, 3}, 31), Tensor({2, 2, 2}, {0.3, 1.7, 2.6, -0.4, 1.2, 0.45, 2.35, 0.8})});
    run.check("op", "upsample_nearest", [](const auto &in) { return upsampleNearest(in[0], 2); }, {randomTensor({2, 2, 3}, 32)});
    const Tensor x = randomTensor({2, 3, 4}, 33);
    for (int axis = 0; axis < 3; ++axis) {
        const std::string sfx = "_axis" + std::to_string(axis);
        run.check("op", "softmax" + sfx, [axis](const auto &in) { return softmax(in[0], axis); }, {x});
        run.check("op", "sum" + sfx, [axis](const auto &in) { return sum(in[0], axis); }, {x});
        run.check("op", "mean" + sfx, [axis](const auto &in) { return mean(in[0], axis); }, {x});
        run.check("op", "max" + sfx, [axis](const auto &in) { return max(in[0], axis); }, {x});
    }
    run.check("op", "concat", [](const auto &in) { return concat({in[0], in[1]}, 1); },
              {randomTensor({2, 1, 3}, 34), randomTensor({2, 2, 3}, 35)});
    run.check("op", "slice", [](const auto &in) { return slice(in[0], 2, 1, 2); }, {x});
    run.check("op", "reshape", [](const auto &in) { return reshape(in[0], {6, 4}); }, {x});
    run.check("op", "sum", [](const auto &in) { return sum(in[0]); }, {x});
    run.check("op", "mean", [](const auto &in) { return mean(in[0]); }, {x});
}

void
rendererChecks(Runner &run) {
    const auto scene = clusterScene(6, 41, 1);
    const auto t     = splat::SceneTensors::fromScene(scene, false);
    const auto cam   = orbit(10, 16, 14);
    for (const bool smooth : {true, false}) {
        const splat::RenderSettings s = smooth ? smoothSettings() : splat::RenderSettings{};
        run.check("renderer", smooth ? "render_smooth" : "render_default",
                  [&, s](const std::vector<Tensor> &in) {
                      return splat::renderOp(splat::SceneTensors{1, in[0], in[1], in[2], in[3], in[4], in[5]}, cam, s);
                  },
                  {t.means, t.quats, t.scales, t.opacities, t.base, t.sh}, smooth ? kOpTolerance : kPipelineTolerance, 1e-6);
    }
}

void
geometryChecks(Runner &run) {
    const geom::Camera ref = pinhole(8, 8, 8);
    geom::Camera src       = ref;
    src.t                  = Eigen::Vector3d(-0.23, 0.04, 0.0);
    const auto planes      = geom::DepthPlanes::make(1.3, 6.1, 4, geom::PlaneSpacing::InverseDepth);
    run.check("geometry", "cost_volume",
              [&](const auto &in) { return mvs::buildCostVolume(in[0], {in[1]}, ref, {src}, planes).logits; },
              {randomTensor({3, 8, 8}, 51), randomTensor({3, 8, 8}, 52)});
    run.check("geometry", "disparity_from_volume",
              [&](const auto &in) { return mvs::disparityFromVolume(in[0], planes).disparity; },
              {randomTensor({4, 3, 3}, 53, -2, 2)});
}

void
netChecks(Runner &run) {
    std::mt19937_64 rng(61);
    net::ParameterSet params;
    net::CbcModule cbc = net::CbcModule::make(params, 5, 4, rng);
    const Tensor disparity = randomTensor({6, 6}, 62, 0.2, 0.9);
    const Tensor pdf       = softmax(randomTensor({4, 6, 6}, 63, -2, 2), 0);
    const net::BoundaryGate gate = net::boundaryGate(disparity, pdf);
    std::vector<Tensor> inputs{randomTensor({5, 6, 6}, 64)};
    for (std::size_t i = 0; i < params.size(); ++i) {
        // The last layer starts at zero; randomize it so every path is exercised.
        inputs.push_back(randomTensor(params[i].shape(), 65 + i, -0.5, 0.5));
    }
    run.check("net", "cbc_correct",
              [&](const std::vector<Tensor> &in) {
                  net::CbcModule m = cbc;
                  for (int l = 0; l < 3; ++l) {
                      m.layers[l].weight = in[static_cast<std::size_t>(1 + 2 * l)];
                      m.layers[l].bias   = in[static_cast<std::size_t>(2 + 2 * l)];
                  }
                  return m(in[0], gate);
              },
              inputs);
}

void
lossChecks(Runner &run) {
    const Tensor a = randomTensor({3, 8, 8}, 71, 0, 1), b = randomTensor({3, 8, 8}, 72, 0, 1);
    run.check("loss", "ssim", [](const auto &in) { return train::ssim(in[0], in[1]); }, {a, b});
    run.check("loss", "ssim_large", [](const auto &in) { return train::ssim(in[0], in[1]); },
              {randomTensor({1, 14, 13}, 73, 0, 1), randomTensor({1, 14, 13}, 74, 0, 1)});
    run.check("loss", "reconstruction", [&](const auto &in) { return train::reconstructionLoss(in[0], b, {}).total; }, {a});
}

/// Network -> renderer -> loss on a 2-view 16x16 instance with 4 planes. The
/// gradient w.r.t. every parameter tensor is compared with central differences
/// on a fixed subset of its coordinates. With the boundary gate disabled the
/// whole chain is covered; with it enabled, the parameters downstream of it.
void
pipelineCheck(Runner &run, net::GateMode gate) {
    constexpr int kSize = 16;
    net::NetConfig cfg;
    cfg.encoderChannels = {4, 6};
    cfg.matchChannels   = 4;
    cfg.planes          = 4;
    cfg.refineWidth     = 4;
    cfg.geometryWidth   = 4;
    cfg.appearanceWidth = 4;
    cfg.cbcWidth        = 4;
    net::Model model(cfg, 81);
    {
        // Give the zero-initialized correction a non-trivial output.
        std::mt19937_64 rng(82);
        std::uniform_real_distribution<double> u(-0.3, 0.3);
        for (std::size_t i = 0; i < model.parameters().size(); ++i) {
            if (model.parameters().name(i).starts_with("cbc.2")) {
                for (auto &v : model.parameters()[i].mutableValues()) {
                    v = u(rng);
                }
            }
        }
    }

    const splat::GaussianScene truth = clusterScene(8, 83, 0);
    const std::vector<geom::Camera> cams{orbit(-4, kSize, 16), orbit(6, kSize, 16), orbit(11, kSize, 16)};
    const auto settings = smoothSettings();
    std::vector<Tensor> images;
    for (const auto &c : cams) {
        auto r = splat::render(truth, c, settings);
        images.push_back(Tensor({3, kSize, kSize}, std::move(r.image)));
    }
    const auto planes = geom::DepthPlanes::make(1.5, 6.0, cfg.planes, geom::PlaneSpacing::InverseDepth);
    const std::vector<net::ViewInput> views{{images[0], cams[0]}, {images[1], cams[1]}};

    auto lossValue = [&]() {
        const net::Prediction p = model.predict(views, planes, {gate});
        Tensor total;
        for (const int target : {0, 2}) {
            const Tensor img = splat::renderOp(p.scene, cams[static_cast<std::size_t>(target)], settings);
            const Tensor l   = train::reconstructionLoss(img, images[static_cast<std::size_t>(target)], {}).total;
            total            = total.defined() ? add(total, l) : l;
        }
        return total;
    };

    std::vector<Tensor> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        const Tensor loss     = lossValue();
        const GradientMap map = backward(tape, loss);
        for (std::size_t i = 0; i < model.parameters().size(); ++i) {
            analytic.push_back(map.of(model.parameters()[i]));
        }
    }

    TapeScope noTape(nullptr);
    constexpr double h        = 1e-6;
    constexpr std::size_t kPerTensor = 6;
    double diff2 = 0, scale2 = 0;
    std::mt19937_64 rng(84);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        // B and C are detached by design: with the gate on, differences taken
        // upstream of the disparity would see a gate change the gradient ignores.
        const std::string &name = model.parameters().name(i);
        if (gate == net::GateMode::Computed && !(name.starts_with("geometry.") || name.starts_with("appearance.") ||
                                                 name.starts_with("cbc."))) {
            continue;
        }
        auto values = model.parameters()[i].mutableValues();
        std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
        for (std::size_t k = 0; k < std::min(kPerTensor, values.size()); ++k) {
            const std::size_t j = values.size() <= kPerTensor ? k : pick(rng);
            const Real saved    = values[j];
            values[j]           = saved + h;
            const double fp     = lossValue().item();
            values[j]           = saved - h;
            const double fm     = lossValue().item();
            values[j]           = saved;
            const double fd     = (fp - fm) / (2 * h);
            const double an     = analytic[i].values()[j];
            diff2 += (fd - an) * (fd - an);
            scale2 += std::max(fd * fd, an * an);
        }
    }
    const double err = std::sqrt(diff2 / std::max(scale2, 1e-300));
    run.add({"pipeline", gate == net::GateMode::Computed ? "net_render_loss_16x16_gated" : "net_render_loss_16x16", err, kPipelineTolerance, err < kPipelineTolerance});
}

} // namespace

std::vector<CheckResult>
runGradientSuite(const ProgressFn &onResult) {
    Runner run(onResult);
    opChecks(run);
    rendererChecks(run);
    geometryChecks(run);
    netChecks(run);
    lossChecks(run);
    pipelineCheck(run, net::GateMode::Disabled);
    pipelineCheck(run, net::GateMode::Computed);
    return run.results;
}

} // namespace dsplat::selfcheck
