#include "geometry/rigid_motion.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "core/check.hpp"

namespace prism {

Eigen::Matrix3d so3_hat(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& r) {
    const double theta2 = r.squaredNorm();
    const double theta = std::sqrt(theta2);
    double a, b; // R = I + a [r]x + b [r]x^2
    if (theta < 1e-6) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    const Eigen::Matrix3d k = so3_hat(r);
    return Eigen::Matrix3d::Identity() + a * k + b * (k * k);
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation) {
    // Eigen's AngleAxis conversion is robust across the theta ~ pi branch.
    const Eigen::AngleAxisd aa(rotation);
    return aa.angle() * aa.axis();
}

Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& r) {
    const double theta2 = r.squaredNorm();
    const double theta = std::sqrt(theta2);
    double c1, c2; // J_r = I - c1 [r]x + c2 [r]x^2
    if (theta < 1e-6) {
        c1 = 0.5 - theta2 / 24.0;
        c2 = 1.0 / 6.0 - theta2 / 120.0;
    } else {
        c1 = (1.0 - std::cos(theta)) / theta2;
        c2 = (theta - std::sin(theta)) / (theta2 * theta);
    }
    const Eigen::Matrix3d k = so3_hat(r);
    return Eigen::Matrix3d::Identity() - c1 * k + c2 * (k * k);
}

RigidMotion RigidMotion::from_matrix(const Eigen::Matrix3d& rotation,
                                     const Eigen::Vector3d& translation) {
    RigidMotion m;
    m.rotation = so3_log(rotation);
    m.translation = translation;
    return m;
}

Eigen::Vector3d RigidMotion::apply(const Eigen::Vector3d& p) const {
    return rotation_matrix() * p + translation;
}

RigidMotion compose(const RigidMotion& a, const RigidMotion& b) {
    const Eigen::Matrix3d ra = a.rotation_matrix();
    RigidMotion out;
    out.rotation = so3_log(ra * b.rotation_matrix());
    out.translation = ra * b.translation + a.translation;
    return out;
}

RigidMotion invert(const RigidMotion& m) {
    RigidMotion out;
    out.rotation = -m.rotation;
    out.translation = -(so3_exp(-m.rotation) * m.translation);
    return out;
}

void Trajectory::validate() const {
    PRISM_CHECK(timestamps.size() == poses.size(), "trajectory timestamp/pose count mismatch");
    for (size_t i = 1; i < timestamps.size(); ++i)
        PRISM_CHECK(timestamps[i] > timestamps[i - 1], "timestamps must be strictly increasing");
}

Trajectory accumulate(const std::vector<RigidMotion>& relatives,
                      const std::vector<double>* timestamps) {
    Trajectory traj;
    traj.poses.reserve(relatives.size() + 1);
    traj.poses.push_back(RigidMotion::identity());
    for (const RigidMotion& rel : relatives)
        traj.poses.push_back(compose(traj.poses.back(), invert(rel)));
    if (timestamps) {
        PRISM_CHECK(timestamps->size() == traj.poses.size(),
                    "accumulate: need one timestamp per pose (relatives + 1)");
        traj.timestamps = *timestamps;
    } else {
        traj.timestamps.resize(traj.poses.size());
        for (size_t i = 0; i < traj.timestamps.size(); ++i)
            traj.timestamps[i] = static_cast<double>(i);
    }
    traj.validate();
    return traj;
}

} // namespace prism
