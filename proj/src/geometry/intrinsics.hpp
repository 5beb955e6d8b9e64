#pragma once

#include <string>
#include <vector>

namespace prism {

/// Pinhole camera with optional radial-tangential distortion (k1,k2,p1,p2).
/// Distortion applies to the raw frames only; everything downstream of
/// preprocessing works with the undistorted model.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    std::vector<double> distortion; // k1,k2,p1,p2 (trailing zeros may be omitted)

    void validate() const;
    bool has_distortion() const;

    /// Intrinsics at pyramid level `scale`: fx,fy,cx,cy,width,height all
    /// divided by 2^scale. Requires width and height divisible by 2^scale.
    CameraIntrinsics at_scale(int scale) const;
};

/// Plain-text key=value intrinsics file (fx, fy, cx, cy, width, height,
/// k1, k2, p1, p2). Unknown keys are rejected; distortion keys are optional.
CameraIntrinsics read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const CameraIntrinsics& k);

} // namespace prism
