#pragma once

#include "core/autodiff.hpp"

namespace prism {

/// Per-pixel structural similarity with 3x3 mean pooling and reflection
/// padding, C1 = 0.01^2, C2 = 0.03^2. Inputs are (C,H,W) in [0,1]; the
/// result keeps the channel dimension. ssim(a, a) is exactly 1 everywhere
/// because both window statistics evaluate through identical expressions.
Var ssim(Graph& g, Var a, Var b);

/// Photometric error of Monodepth2 lineage:
///   pe(a, b) = (alpha/2) * (1 - SSIM(a, b)) + (1 - alpha) * |a - b|
/// with the SSIM and absolute difference averaged over channels, giving a
/// (1,H,W) per-pixel error map.
Var photometric_error(Graph& g, Var a, Var b, double alpha = 0.85);

} // namespace prism
