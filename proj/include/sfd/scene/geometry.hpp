#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace sfd::geo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct GeometryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Wrap to (-pi, pi].
inline double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) {
        a += two_pi;
    } else if (a > std::numbers::pi) {
        a -= two_pi;
    }
    return a;
}

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

// Intrinsic roll-pitch-yaw: R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Mat3 rpy_to_matrix(const Vec3& rpy) { return rot_z(rpy.z()) * rot_y(rpy.y()) * rot_x(rpy.x()); }

inline Vec3 matrix_to_rpy(const Mat3& r)
{
    const double sp = std::clamp(-r(2, 0), -1.0, 1.0);
    const double pitch = std::asin(sp);
    double roll = 0.0;
    double yaw = 0.0;
    if (std::abs(sp) < 1.0 - 1e-12) {
        roll = std::atan2(r(2, 1), r(2, 2));
        yaw = std::atan2(r(1, 0), r(0, 0));
    } else {
        // Gimbal lock: fold everything into yaw.
        yaw = std::atan2(-r(0, 1), r(1, 1));
    }
    return {wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)};
}

// Angle of the relative rotation between two orientations.
inline double rotation_distance(const Mat3& a, const Mat3& b)
{
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

struct Pose {
    Vec3 position = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();

    Vec3 apply(const Vec3& local) const { return rotation * local + position; }
    Vec3 to_local(const Vec3& world) const { return rotation.transpose() * (world - position); }
};

struct Pixel {
    double u = 0.0;
    double v = 0.0;
};

// Pinhole camera with camera-from-world extrinsics: x_cam = R * x_world + t.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 64;
    int height = 64;

    void validate() const
    {
        if (!(fx > 0.0) || !(fy > 0.0)) {
            throw GeometryError("camera focal lengths must be positive");
        }
        if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
            std::abs(rotation.determinant() - 1.0) > 1e-9) {
            throw GeometryError("camera rotation is not a proper rotation");
        }
        if (width <= 0 || height <= 0) {
            throw GeometryError("camera image size must be positive");
        }
    }

    Vec3 center() const { return -rotation.transpose() * translation; }

    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

    // Returns pixel and camera-frame depth.
    std::pair<Pixel, double> project(const Vec3& world) const
    {
        const Vec3 c = to_camera(world);
        return {Pixel{fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy}, c.z()};
    }

    Vec3 unproject(const Pixel& px, double depth) const
    {
        if (!(depth > 0.0)) {
            throw GeometryError("unproject: depth must be positive");
        }
        if (!std::isfinite(px.u) || !std::isfinite(px.v)) {
            throw GeometryError("unproject: pixel must be finite");
        }
        const Vec3 cam{depth * (px.u - cx) / fx, depth * (px.v - cy) / fy, depth};
        return rotation.transpose() * (cam - translation);
    }

    // World-space unit direction of the ray through a pixel.
    Vec3 ray_direction(const Pixel& px) const
    {
        const Vec3 cam{(px.u - cx) / fx, (px.v - cy) / fy, 1.0};
        return (rotation.transpose() * cam).normalized();
    }

    bool in_image(const Pixel& px) const { return px.u >= 0.0 && px.v >= 0.0 && px.u <= width && px.v <= height; }
};

// Camera at `eye` looking straight down (-z) onto the table. Image +u is world
// +x and image +v is world -y.
inline CameraModel top_down_camera(const Vec3& eye, double focal, int width, int height)
{
    CameraModel cam;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.rotation << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    cam.translation = -cam.rotation * eye;
    return cam;
}

// Oriented box given by a pose of its center and half extents.
struct OrientedBox {
    Pose pose;
    Vec3 half_extents = Vec3::Constant(0.01);

    bool contains(const Vec3& world, double tol = 0.0) const
    {
        const Vec3 l = pose.to_local(world);
        return (l.cwiseAbs() - half_extents).maxCoeff() <= tol;
    }

    // Axis-aligned bounding box in world coordinates (min, max).
    std::pair<Vec3, Vec3> world_aabb() const
    {
        const Vec3 ext = pose.rotation.cwiseAbs() * half_extents;
        return {pose.position - ext, pose.position + ext};
    }

    std::array<Vec3, 8> corners() const
    {
        std::array<Vec3, 8> out;
        for (int i = 0; i < 8; ++i) {
            const Vec3 l{(i & 1 ? 1 : -1) * half_extents.x(), (i & 2 ? 1 : -1) * half_extents.y(),
                         (i & 4 ? 1 : -1) * half_extents.z()};
            out[static_cast<std::size_t>(i)] = pose.apply(l);
        }
        return out;
    }

    // Slab test; returns the entry parameter along origin + s * dir, or a
    // negative value when the ray misses (or starts inside).
    double ray_entry(const Vec3& origin, const Vec3& dir) const
    {
        const Vec3 o = pose.to_local(origin);
        const Vec3 d = pose.rotation.transpose() * dir;
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            if (std::abs(d[k]) < 1e-15) {
                if (std::abs(o[k]) > half_extents[k]) {
                    return -1.0;
                }
                continue;
            }
            double a = (-half_extents[k] - o[k]) / d[k];
            double b = (half_extents[k] - o[k]) / d[k];
            if (a > b) {
                std::swap(a, b);
            }
            t0 = std::max(t0, a);
            t1 = std::min(t1, b);
        }
        if (t0 > t1 || t0 <= 0.0) {
            return -1.0;
        }
        return t0;
    }
};

// Gap between two axis-aligned boxes (0 when they touch or overlap).
inline double aabb_distance(const std::pair<Vec3, Vec3>& a, const std::pair<Vec3, Vec3>& b)
{
    Vec3 gap;
    for (int k = 0; k < 3; ++k) {
        gap[k] = std::max({0.0, a.first[k] - b.second[k], b.first[k] - a.second[k]});
    }
    return gap.norm();
}

// Closest distance between segments [p0, p1] and [q0, q1].
inline double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1)
{
    const Vec3 d1 = p1 - p0;
    const Vec3 d2 = q1 - q0;
    const Vec3 r = p0 - q0;
    const double a = d1.squaredNorm();
    const double e = d2.squaredNorm();
    const double f = d2.dot(r);
    double s = 0.0;
    double t = 0.0;
    if (a <= 1e-30 && e <= 1e-30) {
        return r.norm();
    }
    if (a <= 1e-30) {
        t = std::clamp(f / e, 0.0, 1.0);
    } else {
        const double c = d1.dot(r);
        if (e <= 1e-30) {
            s = std::clamp(-c / a, 0.0, 1.0);
        } else {
            const double b = d1.dot(d2);
            const double denom = a * e - b * b;
            s = denom > 1e-30 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
            t = (b * s + f) / e;
            if (t < 0.0) {
                t = 0.0;
                s = std::clamp(-c / a, 0.0, 1.0);
            } else if (t > 1.0) {
                t = 1.0;
                s = std::clamp((b - c) / a, 0.0, 1.0);
            }
        }
    }
    return ((p0 + s * d1) - (q0 + t * d2)).norm();
}

// Distance from a point to an oriented box surface (0 inside).
inline double point_box_distance(const Vec3& p, const OrientedBox& box)
{
    const Vec3 l = box.pose.to_local(p);
    return (l.cwiseAbs() - box.half_extents).cwiseMax(0.0).norm();
}

} // namespace sfd::geo
