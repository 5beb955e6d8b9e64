#pragma once

#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "geometry/intrinsics.hpp"
#include "losses/ssim.hpp"

namespace prism {

struct LossWeights {
    double photo = 1.0;
    double smooth = 0.1;
    double edge = 1.0;
    double sup = 0.5;
    double alpha = 0.85;
};

struct LossOptions {
    int scales = 4;
    double min_depth = 0.1;
    double max_depth = 100.0;
    /// Monodepth2 convention divides the smoothness weight by 2^scale;
    /// switch off for the flat per-scale sum written in the training
    /// objective.
    bool smooth_scale_decay = true;
    /// Include un-warped source errors in the per-pixel minimum so static
    /// pixels stop producing gradients. Off by default.
    bool automask = false;
};

/// disp in (0,1) -> depth in [min_depth, max_depth]:
/// depth = 1 / (1/max + d * (1/min - 1/max)).
Var disparity_to_depth(Graph& g, Var disp, double min_depth, double max_depth);

/// Mean over pixels of the per-pixel minimum of pe(target, warped) across
/// source views. Rejects an empty source list.
Var min_reprojection(Graph& g, Var target, const std::vector<Var>& warped_sources,
                     double alpha = 0.85);

/// Edge-aware smoothness of mean-normalized disparity:
/// mean(|dx(d/mean d)| * exp(-|dx I|)) + mean(|dy ...|). The image enters
/// as a constant; gradients flow through the disparity only.
Var smoothness(Graph& g, Var disp, const Tensor& image);

/// Everything one target frame contributes to the reprojection objective.
/// Disparity pyramid runs fine-to-coarse (scale 0 is full resolution);
/// poses are 6-vector Vars (one per source, target-to-source).
struct ReprojectionInputs {
    std::vector<Var> disp_pyramid;
    Tensor target;                // (3,H,W)
    std::vector<Tensor> sources;  // (3,H,W) each
    std::vector<Var> poses;
    CameraIntrinsics intrinsics;  // full resolution
};

struct ScaleTerms {
    double photo = 0.0;
    double smooth = 0.0;
    double edge = 0.0;
};

struct StageLossResult {
    Var total;
    std::vector<ScaleTerms> per_scale;  // loss-term breakdown for logging
    double supervised = 0.0;
    std::vector<std::string> warnings;
};

/// Photometric reprojection + smoothness summed over the 4 scales. Coarse
/// disparities are bilinearly upsampled to full resolution before warping,
/// so every photometric term is evaluated at the input resolution.
StageLossResult stage2_loss(Graph& g, const ReprojectionInputs& in, const LossWeights& w,
                            const LossOptions& opt);

/// Structural consistency between the target edge map and source edge maps
/// warped with the predicted geometry, per scale:
///   sum_s (1/N_s) sum_x (1 - SSIM(E_t, E_warped)) over valid pixels,
/// averaged over source views. Warping happens at each scale's native
/// resolution with correspondingly scaled intrinsics. A scale with no valid
/// pixels contributes zero and records a warning.
struct EdgeLossInputs {
    std::vector<Var> disp_pyramid;
    std::vector<Tensor> edge_target_pyramid;               // [scale] (1,h,w)
    std::vector<std::vector<Tensor>> edge_source_pyramids; // [source][scale]
    std::vector<Var> poses;
    CameraIntrinsics intrinsics;
};

struct EdgeLossResult {
    Var total;
    std::vector<double> per_scale;
    std::vector<std::string> warnings;
};

EdgeLossResult edge_consistency_loss(Graph& g, const EdgeLossInputs& in, const LossOptions& opt);

/// Stage-3 objective: stage2 + lambda_edge * edge term. With lambda_edge == 0
/// the edge branch is skipped entirely, so the result is bit-identical to
/// the plain stage-2 loss.
StageLossResult stage3_loss(Graph& g, const ReprojectionInputs& in, const EdgeLossInputs& edges,
                            const LossWeights& w, const LossOptions& opt);

/// Mean L1 depth error over valid-mask pixels (mask is 1/0, constant).
Var supervised_depth_loss(Graph& g, Var pred_depth, const Tensor& gt_depth,
                          const Tensor& valid_mask);

} // namespace prism
