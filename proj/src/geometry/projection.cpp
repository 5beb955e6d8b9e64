#include "geometry/projection.hpp"

#include <cmath>

#include "core/autodiff.hpp"
#include "core/check.hpp"

namespace prism {

Tensor backproject(const Tensor& depth, const CameraIntrinsics& k) {
    PRISM_CHECK(depth.rank() == 3 && depth.channels() == 1, "depth must be (1,H,W)");
    PRISM_CHECK(depth.height() == k.height && depth.width() == k.width,
                "depth dims do not match intrinsics");
    PRISM_CHECK(depth.min_value() > 0.0, "backproject requires positive depth");
    Tensor pts({3, k.height, k.width});
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            const double z = depth.at(0, y, x);
            pts.at(0, y, x) = (x - k.cx) / k.fx * z;
            pts.at(1, y, x) = (y - k.cy) / k.fy * z;
            pts.at(2, y, x) = z;
        }
    }
    return pts;
}

ProjectionResult project(const Tensor& points, const RigidMotion& motion,
                         const CameraIntrinsics& k) {
    PRISM_CHECK(points.rank() == 3 && points.channels() == 3, "points must be (3,H,W)");
    PRISM_CHECK(points.height() == k.height && points.width() == k.width,
                "point grid does not match intrinsics");
    constexpr double kZEps = 1e-7;
    constexpr double kSnapTol = 1e-8;
    const int h = k.height, w = k.width;
    PRISM_CHECK(w >= 2 && h >= 2, "frame too small to project");
    const Eigen::Matrix3d r = motion.rotation_matrix();
    ProjectionResult out{Tensor({2, h, w}), Tensor({1, h, w})};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d p =
                r * Eigen::Vector3d(points.at(0, y, x), points.at(1, y, x), points.at(2, y, x)) +
                motion.translation;
            const double zc = std::max(p.z(), kZEps);
            double u = k.fx * p.x() / zc + k.cx;
            double v = k.fy * p.y() / zc + k.cy;
            if (std::fabs(u - std::nearbyint(u)) < kSnapTol) u = std::nearbyint(u);
            if (std::fabs(v - std::nearbyint(v)) < kSnapTol) v = std::nearbyint(v);
            const bool valid =
                p.z() > kZEps && u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1;
            out.grid.at(0, y, x) = 2.0 * u / (w - 1) - 1.0;
            out.grid.at(1, y, x) = 2.0 * v / (h - 1) - 1.0;
            out.mask.at(0, y, x) = valid ? 1.0 : 0.0;
        }
    }
    return out;
}

Tensor pose_to_tensor(const RigidMotion& m) {
    return Tensor::from({6}, {m.rotation.x(), m.rotation.y(), m.rotation.z(),
                              m.translation.x(), m.translation.y(), m.translation.z()});
}

RigidMotion tensor_to_pose(const Tensor& t) {
    PRISM_CHECK(t.numel() == 6, "pose tensor must have 6 values");
    RigidMotion m;
    m.rotation = Eigen::Vector3d(t[0], t[1], t[2]);
    m.translation = Eigen::Vector3d(t[3], t[4], t[5]);
    return m;
}

Tensor sample_grid(const Tensor& source, const Tensor& grid) {
    Graph g;
    return g.grid_sample_border(g.constant(source), g.constant(grid)).value();
}

WarpResult warp(const Tensor& source, const Tensor& depth_target, const RigidMotion& motion,
                const CameraIntrinsics& k) {
    PRISM_CHECK(source.rank() == 3, "source must be (C,H,W)");
    PRISM_CHECK(source.height() == k.height && source.width() == k.width,
                "source dims do not match intrinsics");
    // Route through the autodiff kernels so value and gradient paths can
    // never drift apart.
    Graph g;
    auto wg = g.make_warp_grid(g.constant(depth_target), g.constant(pose_to_tensor(motion)), k);
    Var warped = g.grid_sample_border(g.constant(source), wg.grid);
    return {warped.value(), std::move(wg.mask)};
}

} // namespace prism
