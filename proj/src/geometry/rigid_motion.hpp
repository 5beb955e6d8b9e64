#pragma once

#include <Eigen/Core>
#include <vector>

namespace prism {

/// Skew-symmetric matrix of v, so that so3_hat(a) * b == a.cross(b).
Eigen::Matrix3d so3_hat(const Eigen::Vector3d& v);

/// Rodrigues exponential: axis-angle vector -> rotation matrix.
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& r);

/// Logarithm: rotation matrix -> axis-angle vector (|r| in [0, pi]).
Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation);

/// Right Jacobian of SO(3): exp(r + dr) ~= exp(r) * exp(J_r(r) dr).
/// Used by the warp backward pass to get d(R(r) p)/dr = -R [p]x J_r(r).
Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& r);

/// 6-DoF rigid motion acting on points as y = R(rotation) x + translation.
/// Rotation is stored as an axis-angle 3-vector.
struct RigidMotion {
    Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidMotion identity() { return {}; }
    static RigidMotion from_matrix(const Eigen::Matrix3d& rotation,
                                   const Eigen::Vector3d& translation);

    Eigen::Matrix3d rotation_matrix() const { return so3_exp(rotation); }
    Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
};

/// Composition: compose(a, b) applies b first, then a.
RigidMotion compose(const RigidMotion& a, const RigidMotion& b);
RigidMotion invert(const RigidMotion& m);

/// Timestamped absolute poses (camera-to-world) for trajectory evaluation.
struct Trajectory {
    std::vector<double> timestamps;
    std::vector<RigidMotion> poses;

    size_t size() const { return poses.size(); }
    void validate() const; // sizes match, timestamps strictly increasing
};

/// Chain relative motions T_{k->k+1} (target-to-source convention) into
/// absolute camera-to-world poses starting at identity: for N relatives the
/// result holds N+1 poses with P_0 = I and P_{k+1} = P_k o invert(rel_k).
/// Timestamps default to 0..N when none are given.
Trajectory accumulate(const std::vector<RigidMotion>& relatives,
                      const std::vector<double>* timestamps = nullptr);

} // namespace prism
