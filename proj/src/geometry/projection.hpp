#pragma once

#include "core/tensor.hpp"
#include "geometry/intrinsics.hpp"
#include "geometry/rigid_motion.hpp"

namespace prism {

/// Lift a (1,H,W) depth grid to camera-space points (3,H,W):
/// pixel (u,v) with depth Z maps to ((u-cx)/fx*Z, (v-cy)/fy*Z, Z).
Tensor backproject(const Tensor& depth, const CameraIntrinsics& k);

struct ProjectionResult {
    Tensor grid; // (2,H,W) normalized coordinates, x then y
    Tensor mask; // (1,H,W) 1.0 where point is in front of the camera and in frame
};

/// Rigidly move camera-space points and project them through the pinhole
/// model into normalized [-1,1] sampling coordinates. Points with depth
/// below 1e-7 after the motion are masked instead of rejected.
ProjectionResult project(const Tensor& points, const RigidMotion& motion,
                         const CameraIntrinsics& k);

struct WarpResult {
    Tensor image; // same dims as source
    Tensor mask;  // (1,H,W)
};

/// Synthesize the source image as seen from the target camera: backproject
/// the target depth, move by `motion` (target-to-source), project, and
/// bilinearly sample the source with border clamping.
WarpResult warp(const Tensor& source, const Tensor& depth_target, const RigidMotion& motion,
                const CameraIntrinsics& k);

/// Bilinear sampling with border clamping at normalized grid coords.
Tensor sample_grid(const Tensor& source, const Tensor& grid);

/// Pack a RigidMotion into the 6-vector layout the autodiff warp expects.
Tensor pose_to_tensor(const RigidMotion& m);
RigidMotion tensor_to_pose(const Tensor& t);

} // namespace prism
