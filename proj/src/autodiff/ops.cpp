// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/autodiff/ops.hpp"

#include <Eigen/Core>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsplat::inline DSPLAT_ABI::ad {

namespace {

int
normalizeAxis(std::string_view op, int axis, int ndim) {
    const int a = axis < 0 ? axis + ndim : axis;
    if (a < 0 || a >= ndim) {
        throw ShapeError(op, fmt::format("axis {} out of range for rank {}", axis, ndim));
    }
    return a;
}

// Splits a shape around `axis` into [outer, n, inner].
struct AxisSplit {
    Index outer = 1;
    Index n     = 1;
    Index inner = 1;
};

AxisSplit
splitAt(const Shape &shape, int axis) {
    AxisSplit s;
    for (int i = 0; i < axis; ++i) {
        s.outer *= shape[static_cast<std::size_t>(i)];
    }
    s.n = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
        s.inner *= shape[i];
    }
    return s;
}

bool
isSuffix(const Shape &small, const Shape &big) {
    if (small.size() > big.size()) {
        return false;
    }
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class Small { None, A, B };

struct BroadcastPlan {
    Shape shape;
    Small small = Small::None;
    Index inner = 1;
};

BroadcastPlan
planBroadcast(std::string_view op, const Shape &a, const Shape &b) {
    if (a == b) {
        return {a, Small::None, numel(a)};
    }
    const Index na = numel(a);
    const Index nb = numel(b);
    if (nb == 1 && (na != 1 || a.size() >= b.size())) {
        return {a, Small::B, 1};
    }
    if (na == 1) {
        return {b, Small::A, 1};
    }
    if (isSuffix(b, a)) {
        return {a, Small::B, nb};
    }
    if (isSuffix(a, b)) {
        return {b, Small::A, na};
    }
    throw ShapeError(op, a, b);
}

// f(a, b) -> value; da(a, b) -> d value / d a; db(a, b) -> d value / d b.
template <class F, class DA, class DB>
Tensor
binaryOp(std::string_view op, const Tensor &a, const Tensor &b, F f, DA da, DB db) {
    const BroadcastPlan plan = planBroadcast(op, a.shape(), b.shape());
    const Index n            = numel(plan.shape);
    const auto av            = a.values();
    const auto bv            = b.values();
    const Index inner        = plan.inner;
    const Small small        = plan.small;

    auto ia = [=](Index i) { return small == Small::A ? i % inner : i; };
    auto ib = [=](Index i) { return small == Small::B ? i % inner : i; };

    std::vector<Real> out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = f(av[static_cast<std::size_t>(ia(i))],
                                             bv[static_cast<std::size_t>(ib(i))]);
    }
    return makeResult(
        op, {&a, &b}, plan.shape, std::move(out),
        [a, b, n, ia, ib, da, db](std::span<const Real> g, const GradSinks &sinks) {
            const auto av = a.values();
            const auto bv = b.values();
            for (Index i = 0; i < n; ++i) {
                const Real x  = av[static_cast<std::size_t>(ia(i))];
                const Real y  = bv[static_cast<std::size_t>(ib(i))];
                const Real gi = g[static_cast<std::size_t>(i)];
                if (sinks.wants(0)) {
                    sinks[0][static_cast<std::size_t>(ia(i))] += gi * da(x, y);
                }
                if (sinks.wants(1)) {
                    sinks[1][static_cast<std::size_t>(ib(i))] += gi * db(x, y);
                }
            }
        });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <class F, class DF>
Tensor
unaryOp(std::string_view op, const Tensor &x, F f, DF df) {
    const auto xv = x.values();
    std::vector<Real> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = f(xv[i]);
    }
    std::vector<Real> saved = out;
    return makeResult(op, {&x}, x.shape(), std::move(out),
                      [x, saved = std::move(saved), df](std::span<const Real> g,
                                                        const GradSinks &sinks) {
                          const auto xv = x.values();
                          for (std::size_t i = 0; i < xv.size(); ++i) {
                              sinks[0][i] += g[i] * df(xv[i], saved[i]);
                          }
                      });
}

} // namespace

Tensor
add(const Tensor &a, const Tensor &b) {
    return binaryOp(
        "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
        [](Real, Real) { return Real(1); });
}

Tensor
sub(const Tensor &a, const Tensor &b) {
    return binaryOp(
        "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
        [](Real, Real) { return Real(-1); });
}

Tensor
mul(const Tensor &a, const Tensor &b) {
    return binaryOp(
        "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
        [](Real x, Real) { return x; });
}

Tensor
div(const Tensor &a, const Tensor &b) {
    return binaryOp(
        "div", a, b, [](Real x, Real y) { return x / y; }, [](Real, Real y) { return Real(1) / y; },
        [](Real x, Real y) { return -x / (y * y); });
}

Tensor
addScalar(const Tensor &x, Real c) {
    return unaryOp(
        "add_scalar", x, [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

Tensor
mulScalar(const Tensor &x, Real c) {
    return unaryOp(
        "mul_scalar", x, [c](Real v) { return v * c; }, [c](Real, Real) { return c; });
}

Tensor
neg(const Tensor &x) {
    return mulScalar(x, Real(-1));
}

Tensor
exp(const Tensor &x) {
    return unaryOp(
        "exp", x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Tensor
log(const Tensor &x) {
    return unaryOp(
        "log", x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

Tensor
sqrt(const Tensor &x) {
    return unaryOp(
        "sqrt", x, [](Real v) { return std::sqrt(v); },
        [](Real, Real y) { return Real(0.5) / y; });
}

Tensor
abs(const Tensor &x) {
    return unaryOp(
        "abs", x, [](Real v) { return std::abs(v); },
        [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor
relu(const Tensor &x) {
    return unaryOp(
        "relu", x, [](Real v) { return v > 0 ? v : Real(0); },
        [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

Tensor
sigmoid(const Tensor &x) {
    return unaryOp(
        "sigmoid", x,
        [](Real v) {
            if (v >= 0) {
                return Real(1) / (Real(1) + std::exp(-v));
            }
            const Real e = std::exp(v);
            return e / (Real(1) + e);
        },
        [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor
softplus(const Tensor &x) {
    return unaryOp(
        "softplus", x,
        [](Real v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](Real v, Real) {
            return v >= 0 ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
        });
}

Tensor
clip(const Tensor &x, Real lo, Real hi) {
    if (!(lo <= hi)) {
        throw ShapeError("clip", fmt::format("empty interval [{}, {}]", lo, hi));
    }
    return unaryOp(
        "clip", x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
        [lo, hi](Real v, Real) { return (v > lo && v < hi) ? Real(1) : Real(0); });
}

Tensor
matmul(const Tensor &a, const Tensor &b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul", a.shape(), b.shape());
    }
    const Index m = a.dim(0);
    const Index k = a.dim(1);
    const Index n = b.dim(1);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<Real> out(static_cast<std::size_t>(m * n), Real(0));
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < m; ++i) {
        Real *row = out.data() + i * n;
        for (Index p = 0; p < k; ++p) {
            const Real s    = av[static_cast<std::size_t>(i * k + p)];
            const Real *bro = bv.data() + p * n;
            for (Index j = 0; j < n; ++j) {
                row[j] += s * bro[j];
            }
        }
    }
    return makeResult("matmul", {&a, &b}, {m, n}, std::move(out),
                      [a, b, m, k, n](std::span<const Real> g, const GradSinks &sinks) {
                          const auto av = a.values();
                          const auto bv = b.values();
                          if (sinks.wants(0)) {
                              auto ga = sinks[0];
#pragma omp parallel for schedule(static)
                              for (Index i = 0; i < m; ++i) {
                                  for (Index p = 0; p < k; ++p) {
                                      Real acc        = 0;
                                      const Real *gro = g.data() + i * n;
                                      const Real *bro = bv.data() + p * n;
                                      for (Index j = 0; j < n; ++j) {
                                          acc += gro[j] * bro[j];
                                      }
                                      ga[static_cast<std::size_t>(i * k + p)] += acc;
                                  }
                              }
                          }
                          if (sinks.wants(1)) {
                              auto gb = sinks[1];
#pragma omp parallel for schedule(static)
                              for (Index p = 0; p < k; ++p) {
                                  Real *gbro = gb.data() + p * n;
                                  for (Index i = 0; i < m; ++i) {
                                      const Real s    = av[static_cast<std::size_t>(i * k + p)];
                                      const Real *gro = g.data() + i * n;
                                      for (Index j = 0; j < n; ++j) {
                                          gbro[j] += s * gro[j];
                                      }
                                  }
                              }
                          }
                      });
}

namespace {

// Range of output indices o for which o*stride + k - pad lies in [0, extent).
struct ValidRange {
    Index begin;
    Index end;
};

ValidRange
validOutputs(Index outExtent, Index inExtent, int stride, int pad, Index k) {
    // o*stride + k - pad >= 0  ->  o >= ceil((pad - k) / stride)
    Index lo = pad - k;
    Index b  = lo <= 0 ? 0 : (lo + stride - 1) / stride;
    // o*stride + k - pad <= inExtent - 1  ->  o <= floor((inExtent - 1 + pad - k) / stride)
    Index hi = inExtent - 1 + pad - k;
    Index e  = hi < 0 ? 0 : hi / stride + 1;
    return {std::min(b, outExtent), std::clamp(e, Index(0), outExtent)};
}

} // namespace

namespace {

struct ConvGeometry {
    Index C, H, W, O, KH, KW, OH, OW;
    int s, p;

    Index rows() const { return C * KH * KW; }
    Index cols() const { return OH * OW; }
    /// 1x1, stride 1, no padding: the input already is its own column matrix.
    bool identity() const { return KH == 1 && KW == 1 && s == 1 && p == 0; }
};

/// cols[(c*KH + ky)*KW + kx, oy*OW + ox] = x[c, oy*s + ky - p, ox*s + kx - p] (0 outside).
void
im2col(const ConvGeometry &g, const Real *x, Real *cols) {
    for (Index c = 0; c < g.C; ++c) {
        for (Index ky = 0; ky < g.KH; ++ky) {
            const ValidRange rows = validOutputs(g.OH, g.H, g.s, g.p, ky);
            for (Index kx = 0; kx < g.KW; ++kx) {
                const ValidRange cr = validOutputs(g.OW, g.W, g.s, g.p, kx);
                Real *dst           = cols + ((c * g.KH + ky) * g.KW + kx) * g.cols();
                std::fill(dst, dst + g.cols(), Real(0));
                for (Index oy = rows.begin; oy < rows.end; ++oy) {
                    const Real *srow = x + c * g.H * g.W + (oy * g.s + ky - g.p) * g.W + (kx - g.p);
                    Real *drow       = dst + oy * g.OW;
                    for (Index ox = cr.begin; ox < cr.end; ++ox) {
                        drow[ox] = srow[ox * g.s];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col; accumulates into dx.
void
col2im(const ConvGeometry &g, const Real *cols, Real *dx) {
    for (Index c = 0; c < g.C; ++c) {
        for (Index ky = 0; ky < g.KH; ++ky) {
            const ValidRange rows = validOutputs(g.OH, g.H, g.s, g.p, ky);
            for (Index kx = 0; kx < g.KW; ++kx) {
                const ValidRange cr = validOutputs(g.OW, g.W, g.s, g.p, kx);
                const Real *src     = cols + ((c * g.KH + ky) * g.KW + kx) * g.cols();
                for (Index oy = rows.begin; oy < rows.end; ++oy) {
                    Real *drow       = dx + c * g.H * g.W + (oy * g.s + ky - g.p) * g.W + (kx - g.p);
                    const Real *srow = src + oy * g.OW;
                    for (Index ox = cr.begin; ox < cr.end; ++ox) {
                        drow[ox * g.s] += srow[ox];
                    }
                }
            }
        }
    }
}

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMap  = Eigen::Map<const RowMatrix>;

} // namespace

Tensor
conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias, Conv2dOptions options) {
    if (x.ndim() != 3 || weight.ndim() != 4 || weight.dim(1) != x.dim(0)) {
        throw ShapeError("conv2d", x.shape(), weight.shape());
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != weight.dim(0))) {
        throw ShapeError("conv2d", weight.shape(), bias.shape());
    }
    if (options.stride < 1 || options.padding < 0) {
        throw ShapeError("conv2d", "stride must be >= 1 and padding >= 0");
    }
    ConvGeometry geo{};
    geo.C  = x.dim(0);
    geo.H  = x.dim(1);
    geo.W  = x.dim(2);
    geo.O  = weight.dim(0);
    geo.KH = weight.dim(2);
    geo.KW = weight.dim(3);
    geo.s  = options.stride;
    geo.p  = options.padding;
    geo.OH = (geo.H + 2 * geo.p - geo.KH) / geo.s + 1;
    geo.OW = (geo.W + 2 * geo.p - geo.KW) / geo.s + 1;
    if (geo.OH <= 0 || geo.OW <= 0) {
        throw ShapeError("conv2d", x.shape(), weight.shape());
    }

    // The column matrix is rebuilt in the backward pass rather than kept
    // alive on the tape.
    auto columns = [geo](const Tensor &input, std::vector<Real> &buffer) -> const Real * {
        if (geo.identity()) {
            return input.values().data();
        }
        buffer.resize(static_cast<std::size_t>(geo.rows() * geo.cols()));
        im2col(geo, input.values().data(), buffer.data());
        return buffer.data();
    };

    std::vector<Real> buffer;
    const ConstMap cols(columns(x, buffer), geo.rows(), geo.cols());
    const ConstMap w(weight.values().data(), geo.O, geo.rows());
    std::vector<Real> out(static_cast<std::size_t>(geo.O * geo.cols()));
    MatrixMap y(out.data(), geo.O, geo.cols());
    y.noalias() = w * cols;
    if (bias.defined()) {
        for (Index o = 0; o < geo.O; ++o) {
            y.row(o).array() += bias.values()[static_cast<std::size_t>(o)];
        }
    }

    std::vector<const Tensor *> inputs{&x, &weight};
    if (bias.defined()) {
        inputs.push_back(&bias);
    }
    return makeResult(
        "conv2d", inputs, {geo.O, geo.OH, geo.OW}, std::move(out),
        [x, weight, geo, columns](std::span<const Real> g, const GradSinks &sinks) {
            const ConstMap gy(g.data(), geo.O, geo.cols());
            if (sinks.wants(0)) {
                const ConstMap w(weight.values().data(), geo.O, geo.rows());
                if (geo.identity()) {
                    MatrixMap dx(sinks[0].data(), geo.rows(), geo.cols());
                    dx.noalias() += w.transpose() * gy;
                } else {
                    std::vector<Real> dcols(static_cast<std::size_t>(geo.rows() * geo.cols()));
                    MatrixMap dc(dcols.data(), geo.rows(), geo.cols());
                    dc.noalias() = w.transpose() * gy;
                    col2im(geo, dcols.data(), sinks[0].data());
                }
            }
            if (sinks.wants(1)) {
                std::vector<Real> buffer;
                const ConstMap cols(columns(x, buffer), geo.rows(), geo.cols());
                MatrixMap dw(sinks[1].data(), geo.O, geo.rows());
                dw.noalias() += gy * cols.transpose();
            }
            if (sinks.size() > 2 && sinks.wants(2)) {
                auto gb = sinks[2];
                for (Index o = 0; o < geo.O; ++o) {
                    Real acc           = 0;
                    const Real *gplane = g.data() + o * geo.cols();
                    for (Index i = 0; i < geo.cols(); ++i) {
                        acc += gplane[i];
                    }
                    gb[static_cast<std::size_t>(o)] += acc;
                }
            }
        });
}

Tensor
bilinearSample(const Tensor &x, const Tensor &coords) {
    if (x.ndim() != 3 || coords.ndim() != 3 || coords.dim(0) != 2) {
        throw ShapeError("bilinear_sample", x.shape(), coords.shape());
    }
    const Index C  = x.dim(0);
    const Index H  = x.dim(1);
    const Index W  = x.dim(2);
    const Index OH = coords.dim(1);
    const Index OW = coords.dim(2);
    const Index P  = OH * OW;

    struct Taps {
        Index idx[4];
        Real w[4];
        Real fx;
        Real fy;
        Index x0;
        Index y0;
    };
    auto taps = std::make_shared<std::vector<Taps>>(static_cast<std::size_t>(P));
    const auto cv = coords.values();
    for (Index i = 0; i < P; ++i) {
        const Real u   = cv[static_cast<std::size_t>(i)];
        const Real v   = cv[static_cast<std::size_t>(P + i)];
        const Real fu  = std::floor(u);
        const Real fv  = std::floor(v);
        Taps &t        = (*taps)[static_cast<std::size_t>(i)];
        t.x0           = static_cast<Index>(fu);
        t.y0           = static_cast<Index>(fv);
        t.fx           = u - fu;
        t.fy           = v - fv;
        const Index xs[4] = {t.x0, t.x0 + 1, t.x0, t.x0 + 1};
        const Index ys[4] = {t.y0, t.y0, t.y0 + 1, t.y0 + 1};
        const Real ws[4]  = {(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy), (1 - t.fx) * t.fy, t.fx * t.fy};
        for (int k = 0; k < 4; ++k) {
            const bool inside = xs[k] >= 0 && xs[k] < W && ys[k] >= 0 && ys[k] < H;
            t.idx[k]          = inside ? ys[k] * W + xs[k] : -1;
            t.w[k]            = ws[k];
        }
    }

    const auto xv = x.values();
    std::vector<Real> out(static_cast<std::size_t>(C * P), Real(0));
#pragma omp parallel for schedule(static)
    for (Index c = 0; c < C; ++c) {
        const Real *src = xv.data() + c * H * W;
        Real *dst       = out.data() + c * P;
        for (Index i = 0; i < P; ++i) {
            const Taps &t = (*taps)[static_cast<std::size_t>(i)];
            Real acc      = 0;
            for (int k = 0; k < 4; ++k) {
                if (t.idx[k] >= 0) {
                    acc += t.w[k] * src[t.idx[k]];
                }
            }
            dst[i] = acc;
        }
    }

    return makeResult(
        "bilinear_sample", {&x, &coords}, {C, OH, OW}, std::move(out),
        [x, taps, C, H, W, P](std::span<const Real> g, const GradSinks &sinks) {
            const auto xv = x.values();
            if (sinks.wants(0)) {
                auto gx = sinks[0];
#pragma omp parallel for schedule(static)
                for (Index c = 0; c < C; ++c) {
                    Real *dst        = gx.data() + c * H * W;
                    const Real *gsrc = g.data() + c * P;
                    for (Index i = 0; i < P; ++i) {
                        const Taps &t = (*taps)[static_cast<std::size_t>(i)];
                        for (int k = 0; k < 4; ++k) {
                            if (t.idx[k] >= 0) {
                                dst[t.idx[k]] += t.w[k] * gsrc[i];
                            }
                        }
                    }
                }
            }
            if (sinks.wants(1)) {
                auto gc = sinks[1];
                for (Index i = 0; i < P; ++i) {
                    const Taps &t = (*taps)[static_cast<std::size_t>(i)];
                    Real du       = 0;
                    Real dv       = 0;
                    for (Index c = 0; c < C; ++c) {
                        const Real *src = xv.data() + c * H * W;
                        auto val        = [&](int k) { return t.idx[k] >= 0 ? src[t.idx[k]] : Real(0); };
                        const Real gi   = g[static_cast<std::size_t>(c * P + i)];
                        du += gi * ((1 - t.fy) * (val(1) - val(0)) + t.fy * (val(3) - val(2)));
                        dv += gi * ((1 - t.fx) * (val(2) - val(0)) + t.fx * (val(3) - val(1)));
                    }
                    gc[static_cast<std::size_t>(i)] += du;
                    gc[static_cast<std::size_t>(P + i)] += dv;
                }
            }
        });
}

Tensor
upsampleNearest(const Tensor &x, int factor) {
    if (x.ndim() != 3 || factor < 1) {
        throw ShapeError("upsample_nearest", "expected [C,H,W] input and factor >= 1");
    }
    const Index C  = x.dim(0);
    const Index H  = x.dim(1);
    const Index W  = x.dim(2);
    const Index OH = H * factor;
    const Index OW = W * factor;
    const auto xv  = x.values();
    std::vector<Real> out(static_cast<std::size_t>(C * OH * OW));
    for (Index c = 0; c < C; ++c) {
        for (Index y = 0; y < OH; ++y) {
            for (Index xx = 0; xx < OW; ++xx) {
                out[static_cast<std::size_t>((c * OH + y) * OW + xx)] =
                    xv[static_cast<std::size_t>((c * H + y / factor) * W + xx / factor)];
            }
        }
    }
    return makeResult("upsample_nearest", {&x}, {C, OH, OW}, std::move(out),
                      [C, H, W, OH, OW, factor](std::span<const Real> g, const GradSinks &sinks) {
                          auto gx = sinks[0];
                          for (Index c = 0; c < C; ++c) {
                              for (Index y = 0; y < OH; ++y) {
                                  for (Index xx = 0; xx < OW; ++xx) {
                                      gx[static_cast<std::size_t>((c * H + y / factor) * W + xx / factor)] +=
                                          g[static_cast<std::size_t>((c * OH + y) * OW + xx)];
                                  }
                              }
                          }
                      });
}

Tensor
softmax(const Tensor &x, int axis) {
    const int a       = normalizeAxis("softmax", axis, x.ndim());
    const AxisSplit s = splitAt(x.shape(), a);
    const auto xv     = x.values();
    std::vector<Real> out(xv.size());
    for (Index o = 0; o < s.outer; ++o) {
        for (Index in = 0; in < s.inner; ++in) {
            const Index base = o * s.n * s.inner + in;
            Real mx          = -std::numeric_limits<Real>::infinity();
            for (Index k = 0; k < s.n; ++k) {
                mx = std::max(mx, xv[static_cast<std::size_t>(base + k * s.inner)]);
            }
            Real total = 0;
            for (Index k = 0; k < s.n; ++k) {
                const auto idx = static_cast<std::size_t>(base + k * s.inner);
                out[idx]       = std::exp(xv[idx] - mx);
                total += out[idx];
            }
            for (Index k = 0; k < s.n; ++k) {
                out[static_cast<std::size_t>(base + k * s.inner)] /= total;
            }
        }
    }
    auto saved = std::make_shared<std::vector<Real>>(out);
    return makeResult("softmax", {&x}, x.shape(), std::move(out),
                      [s, saved](std::span<const Real> g, const GradSinks &sinks) {
                          const auto &y = *saved;
                          auto gx       = sinks[0];
                          for (Index o = 0; o < s.outer; ++o) {
                              for (Index in = 0; in < s.inner; ++in) {
                                  const Index base = o * s.n * s.inner + in;
                                  Real dot         = 0;
                                  for (Index k = 0; k < s.n; ++k) {
                                      const auto idx = static_cast<std::size_t>(base + k * s.inner);
                                      dot += g[idx] * y[idx];
                                  }
                                  for (Index k = 0; k < s.n; ++k) {
                                      const auto idx = static_cast<std::size_t>(base + k * s.inner);
                                      gx[idx] += y[idx] * (g[idx] - dot);
                                  }
                              }
                          }
                      });
}

Tensor
concat(const std::vector<Tensor> &parts, int axis) {
    if (parts.empty()) {
        throw ShapeError("concat", "no operands");
    }
    const int a = normalizeAxis("concat", axis, parts.front().ndim());
    Shape shape = parts.front().shape();
    Index total = 0;
    for (const Tensor &t : parts) {
        Shape probe = t.shape();
        if (probe.size() != shape.size()) {
            throw ShapeError("concat", parts.front().shape(), t.shape());
        }
        probe[static_cast<std::size_t>(a)] = shape[static_cast<std::size_t>(a)];
        if (probe != shape) {
            throw ShapeError("concat", parts.front().shape(), t.shape());
        }
        total += t.dim(a);
    }
    shape[static_cast<std::size_t>(a)] = total;
    const AxisSplit outSplit           = splitAt(shape, a);

    std::vector<Real> out(static_cast<std::size_t>(numel(shape)));
    std::vector<Index> offsets;
    Index offset = 0;
    for (const Tensor &t : parts) {
        offsets.push_back(offset);
        const Index n  = t.dim(a);
        const auto tv  = t.values();
        for (Index o = 0; o < outSplit.outer; ++o) {
            std::copy_n(tv.data() + o * n * outSplit.inner,
                        n * outSplit.inner,
                        out.data() + (o * total + offset) * outSplit.inner);
        }
        offset += n;
    }
    std::vector<const Tensor *> inputs;
    std::vector<Index> sizes;
    for (const Tensor &t : parts) {
        inputs.push_back(&t);
        sizes.push_back(t.dim(a));
    }
    return makeResult("concat", inputs, shape, std::move(out),
                      [outSplit, offsets, sizes, total](std::span<const Real> g, const GradSinks &sinks) {
                          for (std::size_t p = 0; p < sizes.size(); ++p) {
                              if (!sinks.wants(p)) {
                                  continue;
                              }
                              auto gp       = sinks[p];
                              const Index n = sizes[p];
                              for (Index o = 0; o < outSplit.outer; ++o) {
                                  const Real *src = g.data() + (o * total + offsets[p]) * outSplit.inner;
                                  Real *dst       = gp.data() + o * n * outSplit.inner;
                                  for (Index i = 0; i < n * outSplit.inner; ++i) {
                                      dst[i] += src[i];
                                  }
                              }
                          }
                      });
}

Tensor
slice(const Tensor &x, int axis, Index start, Index length) {
    const int a       = normalizeAxis("slice", axis, x.ndim());
    const AxisSplit s = splitAt(x.shape(), a);
    if (start < 0 || length < 0 || start + length > s.n) {
        throw ShapeError("slice",
                         fmt::format("range [{}, {}) exceeds axis {} of {}",
                                     start,
                                     start + length,
                                     axis,
                                     toString(x.shape())));
    }
    Shape shape                        = x.shape();
    shape[static_cast<std::size_t>(a)] = length;
    const auto xv                      = x.values();
    std::vector<Real> out(static_cast<std::size_t>(numel(shape)));
    for (Index o = 0; o < s.outer; ++o) {
        std::copy_n(xv.data() + (o * s.n + start) * s.inner,
                    length * s.inner,
                    out.data() + o * length * s.inner);
    }
    return makeResult("slice", {&x}, shape, std::move(out),
                      [s, start, length](std::span<const Real> g, const GradSinks &sinks) {
                          auto gx = sinks[0];
                          for (Index o = 0; o < s.outer; ++o) {
                              const Real *src = g.data() + o * length * s.inner;
                              Real *dst       = gx.data() + (o * s.n + start) * s.inner;
                              for (Index i = 0; i < length * s.inner; ++i) {
                                  dst[i] += src[i];
                              }
                          }
                      });
}

Tensor
reshape(const Tensor &x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape", x.shape(), shape);
    }
    const auto xv = x.values();
    return makeResult("reshape", {&x}, std::move(shape), std::vector<Real>(xv.begin(), xv.end()),
                      [](std::span<const Real> g, const GradSinks &sinks) {
                          auto gx = sinks[0];
                          for (std::size_t i = 0; i < g.size(); ++i) {
                              gx[i] += g[i];
                          }
                      });
}

Tensor
sum(const Tensor &x) {
    Real total = 0;
    for (const Real v : x.values()) {
        total += v;
    }
    return makeResult("sum", {&x}, {}, {total}, [](std::span<const Real> g, const GradSinks &sinks) {
        for (Real &v : sinks[0]) {
            v += g[0];
        }
    });
}

Tensor
mean(const Tensor &x) {
    if (x.numel() == 0) {
        throw ShapeError("mean", "empty tensor");
    }
    const Real n = static_cast<Real>(x.numel());
    Real total   = 0;
    for (const Real v : x.values()) {
        total += v;
    }
    return makeResult("mean", {&x}, {}, {total / n}, [n](std::span<const Real> g, const GradSinks &sinks) {
        const Real gi = g[0] / n;
        for (Real &v : sinks[0]) {
            v += gi;
        }
    });
}

namespace {

Tensor
reduceAxis(std::string_view op, const Tensor &x, int axis, bool average) {
    const int a       = normalizeAxis(op, axis, x.ndim());
    const AxisSplit s = splitAt(x.shape(), a);
    Shape shape       = x.shape();
    shape.erase(shape.begin() + a);
    const auto xv     = x.values();
    const Real scale  = average ? Real(1) / static_cast<Real>(s.n) : Real(1);
    std::vector<Real> out(static_cast<std::size_t>(s.outer * s.inner), Real(0));
    for (Index o = 0; o < s.outer; ++o) {
        for (Index k = 0; k < s.n; ++k) {
            const Real *src = xv.data() + (o * s.n + k) * s.inner;
            Real *dst       = out.data() + o * s.inner;
            for (Index in = 0; in < s.inner; ++in) {
                dst[in] += src[in];
            }
        }
    }
    for (Real &v : out) {
        v *= scale;
    }
    return makeResult(op, {&x}, shape, std::move(out),
                      [s, scale](std::span<const Real> g, const GradSinks &sinks) {
                          auto gx = sinks[0];
                          for (Index o = 0; o < s.outer; ++o) {
                              for (Index k = 0; k < s.n; ++k) {
                                  Real *dst       = gx.data() + (o * s.n + k) * s.inner;
                                  const Real *src = g.data() + o * s.inner;
                                  for (Index in = 0; in < s.inner; ++in) {
                                      dst[in] += scale * src[in];
                                  }
                              }
                          }
                      });
}

} // namespace

Tensor
sum(const Tensor &x, int axis) {
    return reduceAxis("sum_axis", x, axis, false);
}

Tensor
mean(const Tensor &x, int axis) {
    return reduceAxis("mean_axis", x, axis, true);
}

Tensor
max(const Tensor &x, int axis) {
    const int a       = normalizeAxis("max_axis", axis, x.ndim());
    const AxisSplit s = splitAt(x.shape(), a);
    if (s.n == 0) {
        throw ShapeError("max_axis", "empty reduction axis");
    }
    Shape shape = x.shape();
    shape.erase(shape.begin() + a);
    const auto xv = x.values();
    std::vector<Real> out(static_cast<std::size_t>(s.outer * s.inner));
    auto argmax = std::make_shared<std::vector<Index>>(out.size());
    for (Index o = 0; o < s.outer; ++o) {
        for (Index in = 0; in < s.inner; ++in) {
            Index best = 0;
            Real bv    = xv[static_cast<std::size_t>(o * s.n * s.inner + in)];
            for (Index k = 1; k < s.n; ++k) {
                const Real v = xv[static_cast<std::size_t>((o * s.n + k) * s.inner + in)];
                if (v > bv) {
                    bv   = v;
                    best = k;
                }
            }
            out[static_cast<std::size_t>(o * s.inner + in)]      = bv;
            (*argmax)[static_cast<std::size_t>(o * s.inner + in)] = best;
        }
    }
    return makeResult("max_axis", {&x}, shape, std::move(out),
                      [s, argmax](std::span<const Real> g, const GradSinks &sinks) {
                          auto gx = sinks[0];
                          for (Index o = 0; o < s.outer; ++o) {
                              for (Index in = 0; in < s.inner; ++in) {
                                  const auto j = static_cast<std::size_t>(o * s.inner + in);
                                  gx[static_cast<std::size_t>((o * s.n + (*argmax)[j]) * s.inner + in)] += g[j];
                              }
                          }
                      });
}

} // namespace dsplat::inline DSPLAT_ABI::ad
