#include "losses/losses.hpp"

#include <cmath>

#include "core/check.hpp"

namespace prism {

Var disparity_to_depth(Graph& g, Var disp, double min_depth, double max_depth) {
    PRISM_CHECK(min_depth > 0.0 && max_depth > min_depth, "invalid depth bounds");
    const double lo = 1.0 / max_depth, hi = 1.0 / min_depth;
    return g.reciprocal(g.add_scalar(g.mul_scalar(disp, hi - lo), lo));
}

Var min_reprojection(Graph& g, Var target, const std::vector<Var>& warped_sources,
                     double alpha) {
    PRISM_CHECK(!warped_sources.empty(), "min_reprojection needs at least one source view");
    Var acc = photometric_error(g, target, warped_sources[0], alpha);
    for (size_t i = 1; i < warped_sources.size(); ++i)
        acc = g.minimum(acc, photometric_error(g, target, warped_sources[i], alpha));
    return g.mean(acc);
}

namespace {

// exp(-mean_c |gradient|) weights of a constant image, computed outside the
// autodiff graph.
Tensor edge_weight_x(const Tensor& image) {
    const int c = image.channels(), h = image.height(), w = image.width();
    Tensor out({1, h, w - 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w - 1; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch)
                acc += std::fabs(image.at(ch, y, x + 1) - image.at(ch, y, x));
            out.at(0, y, x) = std::exp(-acc / c);
        }
    return out;
}

Tensor edge_weight_y(const Tensor& image) {
    const int c = image.channels(), h = image.height(), w = image.width();
    Tensor out({1, h - 1, w});
    for (int y = 0; y < h - 1; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch)
                acc += std::fabs(image.at(ch, y + 1, x) - image.at(ch, y, x));
            out.at(0, y, x) = std::exp(-acc / c);
        }
    return out;
}

} // namespace

Var smoothness(Graph& g, Var disp, const Tensor& image) {
    const Tensor& d = disp.value();
    PRISM_CHECK(d.rank() == 3 && d.channels() == 1, "smoothness expects (1,H,W) disparity");
    PRISM_CHECK(d.height() == image.height() && d.width() == image.width(),
                "smoothness: disparity and image dims differ");
    Var dn = g.div(disp, g.clamp_min(g.mean(disp), 1e-7));
    Var gx = g.mul(g.abs(g.grad_x(dn)), g.constant(edge_weight_x(image)));
    Var gy = g.mul(g.abs(g.grad_y(dn)), g.constant(edge_weight_y(image)));
    return g.add(g.mean(gx), g.mean(gy));
}

namespace {

void check_pyramid(const std::vector<Var>& disp_pyramid, const CameraIntrinsics& k, int scales) {
    PRISM_CHECK(static_cast<int>(disp_pyramid.size()) == scales,
                "expected " << scales << " disparity scales, got " << disp_pyramid.size());
    for (int s = 0; s < scales; ++s) {
        const Tensor& d = disp_pyramid[static_cast<size_t>(s)].value();
        PRISM_CHECK(d.rank() == 3 && d.channels() == 1 && d.height() == (k.height >> s) &&
                        d.width() == (k.width >> s),
                    "disparity scale " << s << " has wrong dims");
    }
}

} // namespace

StageLossResult stage2_loss(Graph& g, const ReprojectionInputs& in, const LossWeights& w,
                            const LossOptions& opt) {
    PRISM_CHECK(!in.sources.empty() && in.sources.size() == in.poses.size(),
                "stage2_loss: sources and poses must pair up");
    check_pyramid(in.disp_pyramid, in.intrinsics, opt.scales);
    const int h = in.intrinsics.height, wd = in.intrinsics.width;
    PRISM_CHECK(in.target.rank() == 3 && in.target.height() == h && in.target.width() == wd,
                "target frame does not match intrinsics");

    std::vector<Tensor> target_pyr = build_pyramid(in.target, opt.scales);
    Var target = g.constant(in.target);
    std::vector<Var> source_vars;
    for (const Tensor& s : in.sources) source_vars.push_back(g.constant(s));

    StageLossResult out;
    out.per_scale.resize(static_cast<size_t>(opt.scales));
    Var total;
    for (int s = 0; s < opt.scales; ++s) {
        Var disp = in.disp_pyramid[static_cast<size_t>(s)];
        Var disp_full = s == 0 ? disp : g.upsample_bilinear(disp, h, wd);
        Var depth = disparity_to_depth(g, disp_full, opt.min_depth, opt.max_depth);

        std::vector<Var> pe_maps;
        for (size_t src = 0; src < in.sources.size(); ++src) {
            auto wg = g.make_warp_grid(depth, in.poses[src], in.intrinsics);
            Var warped = g.grid_sample_border(source_vars[src], wg.grid);
            pe_maps.push_back(photometric_error(g, target, warped, w.alpha));
        }
        if (opt.automask) {
            for (Var sv : source_vars)
                pe_maps.push_back(photometric_error(g, target, sv, w.alpha));
        }
        Var pe_min = pe_maps[0];
        for (size_t i = 1; i < pe_maps.size(); ++i) pe_min = g.minimum(pe_min, pe_maps[i]);
        Var photo = g.mean(pe_min);
        Var smooth = smoothness(g, disp, target_pyr[static_cast<size_t>(s)]);

        out.per_scale[static_cast<size_t>(s)].photo = photo.value()[0];
        out.per_scale[static_cast<size_t>(s)].smooth = smooth.value()[0];

        const double smooth_w = opt.smooth_scale_decay ? w.smooth / (1 << s) : w.smooth;
        Var term = g.add(g.mul_scalar(photo, w.photo), g.mul_scalar(smooth, smooth_w));
        total = total.defined() ? g.add(total, term) : term;
    }
    out.total = total;
    return out;
}

EdgeLossResult edge_consistency_loss(Graph& g, const EdgeLossInputs& in, const LossOptions& opt) {
    check_pyramid(in.disp_pyramid, in.intrinsics, opt.scales);
    PRISM_CHECK(!in.edge_source_pyramids.empty() &&
                    in.edge_source_pyramids.size() == in.poses.size(),
                "edge loss: source pyramids and poses must pair up");
    PRISM_CHECK(static_cast<int>(in.edge_target_pyramid.size()) == opt.scales,
                "edge loss: target pyramid must cover all scales");

    EdgeLossResult out;
    out.per_scale.assign(static_cast<size_t>(opt.scales), 0.0);
    Var total;
    const double n_sources = static_cast<double>(in.poses.size());
    for (int s = 0; s < opt.scales; ++s) {
        const CameraIntrinsics ks = in.intrinsics.at_scale(s);
        const Tensor& et = in.edge_target_pyramid[static_cast<size_t>(s)];
        PRISM_CHECK(et.channels() == 1 && et.height() == ks.height && et.width() == ks.width,
                    "edge target pyramid level " << s << " has wrong dims");
        Var depth = disparity_to_depth(g, in.disp_pyramid[static_cast<size_t>(s)], opt.min_depth,
                                       opt.max_depth);
        Var target_edges = g.constant(et);
        for (size_t src = 0; src < in.poses.size(); ++src) {
            auto wg = g.make_warp_grid(depth, in.poses[src], ks);
            double n_valid = 0.0;
            for (std::int64_t i = 0; i < wg.mask.numel(); ++i) n_valid += wg.mask[i];
            if (n_valid == 0.0) {
                out.warnings.push_back("edge loss: no valid pixels at scale " +
                                       std::to_string(s) + ", source " + std::to_string(src) +
                                       "; contributing 0");
                continue;
            }
            Var warped =
                g.grid_sample_border(g.constant(in.edge_source_pyramids[src][static_cast<size_t>(s)]),
                                     wg.grid);
            Var dssim = g.add_scalar(g.mul_scalar(ssim(g, target_edges, warped), -1.0), 1.0);
            Var masked = g.mul(dssim, g.constant(wg.mask));
            Var term = g.mul_scalar(g.sum(masked), 1.0 / (n_valid * n_sources));
            out.per_scale[static_cast<size_t>(s)] += term.value()[0];
            total = total.defined() ? g.add(total, term) : term;
        }
    }
    if (!total.defined()) total = g.constant(Tensor::scalar(0.0));
    out.total = total;
    return out;
}

StageLossResult stage3_loss(Graph& g, const ReprojectionInputs& in, const EdgeLossInputs& edges,
                            const LossWeights& w, const LossOptions& opt) {
    StageLossResult result = stage2_loss(g, in, w, opt);
    if (w.edge == 0.0) return result; // bit-identical to stage 2 by construction
    EdgeLossResult e = edge_consistency_loss(g, edges, opt);
    for (int s = 0; s < opt.scales; ++s)
        result.per_scale[static_cast<size_t>(s)].edge = e.per_scale[static_cast<size_t>(s)];
    for (auto& warning : e.warnings) result.warnings.push_back(std::move(warning));
    result.total = g.add(result.total, g.mul_scalar(e.total, w.edge));
    return result;
}

Var supervised_depth_loss(Graph& g, Var pred_depth, const Tensor& gt_depth,
                          const Tensor& valid_mask) {
    const Tensor& p = pred_depth.value();
    PRISM_CHECK(p.same_dims(gt_depth) && p.same_dims(valid_mask),
                "supervised loss: shape mismatch");
    double n_valid = 0.0;
    for (std::int64_t i = 0; i < valid_mask.numel(); ++i) n_valid += valid_mask[i] > 0.5;
    PRISM_CHECK(n_valid > 0.0, "supervised loss: empty valid mask");
    Var diff = g.abs(g.sub(pred_depth, g.constant(gt_depth)));
    return g.mul_scalar(g.sum(g.mul(diff, g.constant(valid_mask))), 1.0 / n_valid);
}

} // namespace prism
