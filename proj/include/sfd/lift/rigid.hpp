#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sfd/scene/geometry.hpp"

namespace sfd::lift {

using geo::Mat3;
using geo::Vec3;

struct DegenerateGeometry : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

// Least-squares rigid transform taking `reference` onto `points`
// (Kabsch with reflection correction).
inline RigidTransform rigid_merge(const std::vector<Vec3>& points, const std::vector<Vec3>& reference)
{
    if (points.size() != reference.size()) {
        throw std::invalid_argument("rigid_merge: point sets differ in size");
    }
    if (points.size() < 3) {
        throw DegenerateGeometry("rigid_merge needs at least 3 correspondences");
    }
    Vec3 cp = Vec3::Zero();
    Vec3 cr = Vec3::Zero();
    for (std::size_t k = 0; k < points.size(); ++k) {
        cp += points[k];
        cr += reference[k];
    }
    cp /= static_cast<double>(points.size());
    cr /= static_cast<double>(points.size());

    Mat3 h = Mat3::Zero();
    Mat3 spread = Mat3::Zero();
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Vec3 r = reference[k] - cr;
        h += r * (points[k] - cp).transpose();
        spread += r * r.transpose();
    }
    // Collinear (or coincident) references leave rotation about the line free.
    Eigen::SelfAdjointEigenSolver<Mat3> eig(spread);
    const auto ev = eig.eigenvalues();
    if (ev(1) <= 1e-12 * std::max(1.0, ev(2))) {
        throw DegenerateGeometry("rigid_merge: reference points are collinear");
    }

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    RigidTransform out;
    out.rotation = v * d * u.transpose();
    out.translation = cp - out.rotation * cr;
    return out;
}

} // namespace sfd::lift
