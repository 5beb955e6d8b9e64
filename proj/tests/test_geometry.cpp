#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>

#include "core/rng.hpp"
#include "geometry/projection.hpp"
#include "geometry/rigid_motion.hpp"
#include "testutil.hpp"

using namespace prism;
using test::random_tensor;
using test::toy_intrinsics;

namespace {
RigidMotion random_motion(Rng& rng, double rot_mag, double trans_mag) {
    RigidMotion m;
    for (int i = 0; i < 3; ++i) {
        m.rotation[i] = rng.uniform(-rot_mag, rot_mag);
        m.translation[i] = rng.uniform(-trans_mag, trans_mag);
    }
    return m;
}
} // namespace

TEST_CASE("backproject: principal-point ray and hand pinhole arithmetic") {
    CameraIntrinsics k;
    k.fx = k.fy = 100.0;
    k.cx = k.cy = 50.0;
    k.width = 151;
    k.height = 151;
    Tensor depth = Tensor::full({1, 151, 151}, 2.0);
    Tensor pts = backproject(depth, k);
    // principal point: ray straight ahead
    CHECK(pts.at(0, 50, 50) == 0.0);
    CHECK(pts.at(1, 50, 50) == 0.0);
    CHECK(pts.at(2, 50, 50) == 2.0);
    // pixel (150, 50), Z=2 -> (2, 0, 2)
    CHECK(pts.at(0, 50, 150) == doctest::Approx(2.0));
    CHECK(pts.at(1, 50, 150) == doctest::Approx(0.0));
    CHECK(pts.at(2, 50, 150) == doctest::Approx(2.0));
}

TEST_CASE("backproject: planes linear in pixel coordinates at uniform depth") {
    const auto k = toy_intrinsics(8);
    Tensor pts = backproject(Tensor::full({1, 8, 8}, 1.0), k);
    for (int x = 0; x + 2 < 8; ++x) {
        const double d1 = pts.at(0, 3, x + 1) - pts.at(0, 3, x);
        const double d2 = pts.at(0, 3, x + 2) - pts.at(0, 3, x + 1);
        CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
    }
}

TEST_CASE("backproject rejects mismatched dims") {
    const auto k = toy_intrinsics(8);
    CHECK_THROWS_AS(backproject(Tensor::full({1, 4, 8}, 1.0), k), std::invalid_argument);
}

TEST_CASE("project: identity motion reproduces the pixel grid") {
    const auto k = toy_intrinsics(12);
    Tensor depth = Tensor::full({1, 12, 12}, 2.5);
    auto pr = project(backproject(depth, k), RigidMotion::identity(), k);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            const double u = (pr.grid.at(0, y, x) + 1.0) * 0.5 * 11;
            const double v = (pr.grid.at(1, y, x) + 1.0) * 0.5 * 11;
            CHECK(u == doctest::Approx(x).epsilon(1e-12));
            CHECK(v == doctest::Approx(y).epsilon(1e-12));
            CHECK(pr.mask.at(0, y, x) == 1.0);
        }
}

TEST_CASE("project: points behind the camera are masked, not rejected") {
    const auto k = toy_intrinsics(4);
    Tensor pts({3, 4, 4});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            pts.at(0, y, x) = 0.1;
            pts.at(1, y, x) = 0.1;
            pts.at(2, y, x) = (y < 2) ? 1.0 : -1.0;
        }
    auto pr = project(pts, RigidMotion::identity(), k);
    CHECK(pr.mask.at(0, 0, 0) == 1.0);
    CHECK(pr.mask.at(0, 3, 0) == 0.0);
}

TEST_CASE("project: lateral translation of a fronto-parallel plane shifts pixels by fx*tx/Z") {
    const auto k = toy_intrinsics(16);
    const double z = 2.0, tx = 0.25;
    RigidMotion m;
    m.translation = Eigen::Vector3d(tx, 0, 0);
    auto pr = project(backproject(Tensor::full({1, 16, 16}, z), k), m, k);
    const double shift = k.fx * tx / z;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const double u = (pr.grid.at(0, y, x) + 1.0) * 0.5 * 15;
            CHECK(u == doctest::Approx(x + shift).epsilon(1e-9));
        }
}

TEST_CASE("intrinsics pyramid: project at scale s equals scale-0 coords divided by 2^s") {
    Rng rng(31);
    CameraIntrinsics k0;
    k0.fx = 60.0;
    k0.fy = 52.0;
    k0.cx = 31.3;
    k0.cy = 30.1;
    k0.width = k0.height = 64;
    for (int s : {1, 2, 3}) {
        const auto ks = k0.at_scale(s);
        const int f = 1 << s;
        RigidMotion m = random_motion(rng, 0.03, 0.1);
        Tensor depth_full = random_tensor({1, 64, 64}, rng, 1.5, 3.0);
        // compare the projected *pixel* coordinates of matching rays
        Tensor depth_s({1, ks.height, ks.width});
        for (int y = 0; y < ks.height; ++y)
            for (int x = 0; x < ks.width; ++x) depth_s.at(0, y, x) = depth_full.at(0, y * f, x * f);
        // scale-0 projection of the same physical points as the scale-s grid:
        // pixel (x*f, y*f) at scale 0 backprojects to the same ray only if the
        // principal point scales exactly, which at_scale guarantees (cx/f).
        auto pr_s = project(backproject(depth_s, ks), m, ks);
        Tensor pts0({3, ks.height, ks.width});
        for (int y = 0; y < ks.height; ++y)
            for (int x = 0; x < ks.width; ++x) {
                const double z = depth_s.at(0, y, x);
                pts0.at(0, y, x) = (x * f - k0.cx) / k0.fx * z;
                pts0.at(1, y, x) = (y * f - k0.cy) / k0.fy * z;
                pts0.at(2, y, x) = z;
            }
        // project manually with full-res K, then divide pixel coords by 2^s
        const Eigen::Matrix3d r = m.rotation_matrix();
        for (int y = 0; y < ks.height; ++y)
            for (int x = 0; x < ks.width; ++x) {
                const Eigen::Vector3d p =
                    r * Eigen::Vector3d(pts0.at(0, y, x), pts0.at(1, y, x), pts0.at(2, y, x)) +
                    m.translation;
                if (p.z() < 1e-3) continue;
                const double u0 = k0.fx * p.x() / p.z() + k0.cx;
                const double v0 = k0.fy * p.y() / p.z() + k0.cy;
                const double us = (pr_s.grid.at(0, y, x) + 1.0) * 0.5 * (ks.width - 1);
                const double vs = (pr_s.grid.at(1, y, x) + 1.0) * 0.5 * (ks.height - 1);
                // pixel-center convention: u_s = u_0 / f (ray-preserving scaling)
                CHECK(std::fabs(us - u0 / f) < 1e-6);
                CHECK(std::fabs(vs - v0 / f) < 1e-6);
            }
    }
}

TEST_CASE("warp: identity motion returns the source bit-exactly with full mask") {
    Rng rng(37);
    const auto k = toy_intrinsics(16);
    Tensor src = random_tensor({3, 16, 16}, rng);
    Tensor depth = random_tensor({1, 16, 16}, rng, 1.0, 4.0);
    auto res = warp(src, depth, RigidMotion::identity(), k);
    CHECK(res.image.bit_equal(src));
    CHECK(res.mask.min_value() == 1.0);
}

TEST_CASE("warp: lateral shift matches integer-shifted source in the interior") {
    const auto k = toy_intrinsics(16);
    Rng rng(41);
    Tensor src = random_tensor({3, 16, 16}, rng);
    const double z = 2.0;
    const int shift_px = 3;
    const double tx = shift_px * z / k.fx;
    RigidMotion m;
    m.translation = Eigen::Vector3d(tx, 0, 0);
    auto res = warp(src, Tensor::full({1, 16, 16}, z), m, k);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16 - shift_px; ++x)
                CHECK(res.image.at(c, y, x) ==
                      doctest::Approx(src.at(c, y, x + shift_px)).epsilon(1e-9));
}

TEST_CASE("warp validity mask shrinks monotonically with translation magnitude") {
    const auto k = toy_intrinsics(24);
    Tensor depth = Tensor::full({1, 24, 24}, 2.0);
    Tensor dummy = Tensor::full({3, 24, 24}, 0.5);
    int prev_valid = 24 * 24 + 1;
    for (double tx : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
        RigidMotion m;
        m.translation = Eigen::Vector3d(tx, 0, 0);
        auto res = warp(dummy, depth, m, k);
        int valid = 0;
        for (std::int64_t i = 0; i < res.mask.numel(); ++i) valid += res.mask[i] > 0.5;
        CHECK(valid <= prev_valid);
        prev_valid = valid;
    }
}

TEST_CASE("rigid motion: compose with inverse is identity to 1e-9") {
    Rng rng(43);
    for (int i = 0; i < 20; ++i) {
        RigidMotion m = random_motion(rng, 1.5, 2.0);
        RigidMotion e = compose(m, invert(m));
        CHECK(e.rotation.norm() < 1e-9);
        CHECK(e.translation.norm() < 1e-9);
    }
}

TEST_CASE("rotation matrices are orthonormal with unit determinant") {
    Rng rng(47);
    for (int i = 0; i < 20; ++i) {
        RigidMotion m = random_motion(rng, 3.0, 0.0);
        const Eigen::Matrix3d r = m.rotation_matrix();
        CHECK((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-9);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("invert of invert is the identity map on RigidMotion") {
    Rng rng(53);
    for (int i = 0; i < 20; ++i) {
        RigidMotion m = random_motion(rng, 2.0, 1.0);
        RigidMotion mm = invert(invert(m));
        CHECK((mm.rotation - m.rotation).norm() < 1e-9);
        CHECK((mm.translation - m.translation).norm() < 1e-9);
    }
}

TEST_CASE("two 90-degree z-rotations compose to a 180-degree z-rotation") {
    RigidMotion quarter;
    quarter.rotation = Eigen::Vector3d(0, 0, M_PI / 2);
    const RigidMotion half = compose(quarter, quarter);
    // oracle: product of the rotation matrices
    const Eigen::Matrix3d expected = so3_exp({0, 0, M_PI / 2}) * so3_exp({0, 0, M_PI / 2});
    CHECK((half.rotation_matrix() - expected).norm() < 1e-9);
    CHECK(std::fabs(half.rotation.norm() - M_PI) < 1e-9);
}

TEST_CASE("accumulate: N identities produce N+1 identical poses") {
    std::vector<RigidMotion> rel(5);
    Trajectory traj = accumulate(rel);
    REQUIRE(traj.size() == 6);
    for (const auto& p : traj.poses) {
        CHECK(p.rotation.norm() == 0.0);
        CHECK(p.translation.norm() == 0.0);
    }
}

TEST_CASE("accumulate: forward motion integrates camera position") {
    // T_{k->k+1} for a camera advancing +d along z maps z_k -> z_k - d.
    RigidMotion rel;
    rel.translation = Eigen::Vector3d(0, 0, -0.5);
    Trajectory traj = accumulate({rel, rel, rel});
    CHECK(traj.poses[3].translation.z() == doctest::Approx(1.5));
}

TEST_CASE("so3 right jacobian is consistent with the exponential map") {
    Rng rng(59);
    for (int i = 0; i < 10; ++i) {
        Eigen::Vector3d r(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        Eigen::Vector3d dr(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        dr *= 1e-6;
        const Eigen::Matrix3d lhs = so3_exp(r + dr);
        const Eigen::Matrix3d rhs = so3_exp(r) * so3_exp(so3_right_jacobian(r) * dr);
        CHECK((lhs - rhs).norm() < 1e-10);
    }
}

TEST_CASE("intrinsics scaling divides exactly and validates divisibility") {
    CameraIntrinsics k;
    k.fx = 128;
    k.fy = 96;
    k.cx = 63.5;
    k.cy = 63.5;
    k.width = k.height = 128;
    const auto k2 = k.at_scale(2);
    CHECK(k2.fx == 32.0);
    CHECK(k2.width == 32);
    CHECK(k2.cx == doctest::Approx(63.5 / 4));
    CameraIntrinsics odd = k;
    odd.width = 130;
    CHECK_THROWS_AS(odd.at_scale(2), std::invalid_argument);
}
