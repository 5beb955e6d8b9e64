#include "losses/ssim.hpp"

#include "core/check.hpp"

namespace prism {

Var ssim(Graph& g, Var a, Var b) {
    PRISM_CHECK(a.value().same_dims(b.value()), "ssim: shape mismatch");
    PRISM_CHECK(a.value().rank() == 3, "ssim expects (C,H,W)");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;

    Var mu_a = g.box_filter3(a);
    Var mu_b = g.box_filter3(b);
    Var mu_ab = g.mul(mu_a, mu_b);
    Var mu_aa = g.mul(mu_a, mu_a);
    Var mu_bb = g.mul(mu_b, mu_b);
    Var sigma_a = g.sub(g.box_filter3(g.mul(a, a)), mu_aa);
    Var sigma_b = g.sub(g.box_filter3(g.mul(b, b)), mu_bb);
    Var sigma_ab = g.sub(g.box_filter3(g.mul(a, b)), mu_ab);

    Var num = g.mul(g.add_scalar(g.mul_scalar(mu_ab, 2.0), c1),
                    g.add_scalar(g.mul_scalar(sigma_ab, 2.0), c2));
    Var den = g.mul(g.add_scalar(g.add(mu_aa, mu_bb), c1),
                    g.add_scalar(g.add(sigma_a, sigma_b), c2));
    return g.div(num, den);
}

Var photometric_error(Graph& g, Var a, Var b, double alpha) {
    Var s = g.mean_channels(ssim(g, a, b));
    Var l1 = g.mean_channels(g.abs(g.sub(a, b)));
    Var dssim = g.mul_scalar(g.add_scalar(g.mul_scalar(s, -1.0), 1.0), alpha / 2.0);
    return g.add(dssim, g.mul_scalar(l1, 1.0 - alpha));
}

} // namespace prism
