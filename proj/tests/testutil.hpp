#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "geometry/intrinsics.hpp"
#include "geometry/projection.hpp"

namespace prism::test {

inline Tensor random_tensor(std::vector<int> dims, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(dims));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Random smooth image in [0,1]: a dominant random linear ramp plus mild
/// low-frequency sinusoids per channel. Finite-difference probes through
/// the bilinear sampler cross interpolation knots, where the FD reference
/// picks up the slope jump; a ramp interpolates exactly, so keeping the
/// curvature term small keeps that noise far below the check tolerance
/// while still exercising every Jacobian entry against nonuniform slopes.
inline Tensor random_smooth_image(int channels, int h, int w, Rng& rng) {
    Tensor img({channels, h, w});
    // one ramp direction shared by all channels, so per-channel gradient
    // contributions add coherently instead of cancelling
    const double ang = rng.uniform(0.0, 6.283);
    const double mag = rng.uniform(0.2, 0.3);
    const double gx = mag * std::cos(ang), gy = mag * std::sin(ang);
    for (int c = 0; c < channels; ++c) {
        double a[2], fx[2], fy[2], ph[2];
        for (int m = 0; m < 2; ++m) {
            a[m] = rng.uniform(0.015, 0.035);
            fx[m] = rng.uniform(-0.75, 0.75);
            fy[m] = rng.uniform(-0.75, 0.75);
            ph[m] = rng.uniform(0.0, 6.283);
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = 0.5 + gx * (x - w / 2.0) / w + gy * (y - h / 2.0) / h;
                for (int m = 0; m < 2; ++m)
                    v += a[m] * std::sin(6.283 * (fx[m] * x / w + fy[m] * y / h) + ph[m]);
                img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
    }
    return img;
}

inline CameraIntrinsics toy_intrinsics(int size = 16) {
    CameraIntrinsics k;
    k.fx = k.fy = 0.9 * size;
    k.cx = k.cy = (size - 1) / 2.0;
    k.width = k.height = size;
    return k;
}

/// Loss builder: receives one Var per input tensor (all gradient-tracked)
/// and returns a scalar.
using LossFn = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Fixed weight map selecting pixels whose base-pose projection stays at
/// least `margin` pixels inside the frame. Finite-difference probes move
/// sampling coordinates by ~1e-3 px, so weighted losses never cross the
/// border clamp, whose one-sided derivative FD cannot measure.
inline Tensor interior_warp_weight(int channels, const Tensor& depth, const RigidMotion& pose,
                                   const CameraIntrinsics& k, double margin) {
    const auto base = project(backproject(depth, k), pose, k);
    Tensor weight({channels, k.height, k.width});
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const double u = (base.grid.at(0, y, x) + 1.0) * 0.5 * (k.width - 1);
            const double v = (base.grid.at(1, y, x) + 1.0) * 0.5 * (k.height - 1);
            const bool in = base.mask.at(0, y, x) > 0.5 && u > margin &&
                            u < k.width - 1 - margin && v > margin && v < k.height - 1 - margin;
            for (int c = 0; c < channels; ++c) weight.at(c, y, x) = in ? 1.0 : 0.0;
        }
    return weight;
}

struct GradCheckResult {
    double max_rel_error = 0.0; // max over inputs of ||fd - ad|| / max(||fd||, ||ad||)
    std::int64_t checked = 0;
};

/// Central finite differences vs. reverse-mode gradients. Per input tensor
/// the error is the l2-norm relative error of the whole gradient vector,
/// ||fd - ad|| / max(||fd||, ||ad||, 1e-8); the result is the max over
/// inputs. The vector norm is the meaningful comparison through the
/// bilinear sampler, whose FD reference is noisy at interpolation knots.
inline GradCheckResult gradient_check(std::vector<Tensor> inputs, const LossFn& loss,
                                      double step = 1e-4) {
    auto eval = [&](const std::vector<Tensor>& xs) {
        Graph g;
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const Tensor& t : xs) vars.push_back(g.leaf(t));
        return loss(g, vars).value()[0];
    };

    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Var> vars;
        for (const Tensor& t : inputs) vars.push_back(g.leaf(t));
        Var l = loss(g, vars);
        g.backward(l);
        for (Var v : vars) analytic.push_back(g.grad(v));
    }

    GradCheckResult res;
    for (size_t t = 0; t < inputs.size(); ++t) {
        double diff2 = 0.0, fd2 = 0.0, ad2 = 0.0;
        for (std::int64_t i = 0; i < inputs[t].numel(); ++i) {
            const double orig = inputs[t][i];
            inputs[t][i] = orig + step;
            const double fp = eval(inputs);
            inputs[t][i] = orig - step;
            const double fm = eval(inputs);
            inputs[t][i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double ad = analytic[t][i];
            diff2 += (fd - ad) * (fd - ad);
            fd2 += fd * fd;
            ad2 += ad * ad;
            ++res.checked;
        }
        const double rel =
            std::sqrt(diff2) / std::max({std::sqrt(fd2), std::sqrt(ad2), 1e-8});
        res.max_rel_error = std::max(res.max_rel_error, rel);
    }
    return res;
}

} // namespace prism::test
