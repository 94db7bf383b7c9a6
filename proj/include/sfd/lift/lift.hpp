#pragma once

// Flow tensor + depth -> world-frame 6-DOF trajectory.
//
// Visible samples are unprojected, each grid point's track is smoothed in
// time, every frame is rigidly registered against frame 0, and the resulting
// pose sequence is resampled to a fixed number of waypoints. Position is the
// moving centroid of the frame-0 grid; orientation is relative to frame 0.

#include <functional>
#include <optional>

#include "sfd/lift/rigid.hpp"
#include "sfd/lift/smooth.hpp"
#include "sfd/lift/trajectory.hpp"
#include "sfd/scene/flow.hpp"

namespace sfd::lift {

// Depth (camera z) of grid sample (i, j) at frame t seen at pixel px, or
// nothing when unknown.
using DepthSource = std::function<std::optional<double>(int t, int i, int j, const geo::Pixel& px)>;

struct DepthLookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact depth of the rigidly tracked query points.
inline DepthSource ground_truth_depth(const scene::EpisodeRecord& ep, const scene::QueryGrid& q)
{
    return [&ep, q](int t, int i, int j, const geo::Pixel&) -> std::optional<double> {
        return ep.camera.to_camera(q.world(ep, t, static_cast<std::size_t>(i * q.grid + j))).z();
    };
}

// Depth of the horizontal plane z = height along each pixel ray. Used for
// predicted flows, where only the first frame's geometry is known.
inline DepthSource plane_depth(const geo::CameraModel& cam, double height)
{
    return [cam, height](int, int, int, const geo::Pixel& px) -> std::optional<double> {
        const Vec3 o = cam.center();
        const Vec3 d = cam.ray_direction(px);
        if (std::abs(d.z()) < 1e-12) {
            return std::nullopt;
        }
        const double s = (height - o.z()) / d.z();
        if (s <= 0.0) {
            return std::nullopt;
        }
        return cam.to_camera(o + s * d).z();
    };
}

struct LiftConfig {
    int window = 5;
    int waypoints = 32;
    float visibility_threshold = 0.5f;
    TimingConfig timing;
};

// Per-frame poses before resampling.
inline std::vector<Waypoint> lift_poses(const scene::FlowTensor& flow, const geo::CameraModel& cam,
                                        const DepthSource& depth, const LiftConfig& cfg)
{
    const int frames = flow.frames;
    const int g = flow.grid;
    const auto n = static_cast<std::size_t>(g * g);
    if (frames < 2) {
        throw std::invalid_argument("lift: flow needs at least 2 frames");
    }

    const int window = std::min(cfg.window, frames % 2 == 1 ? frames : frames - 1);
    std::vector<std::vector<Vec3>> tracks(n, std::vector<Vec3>(static_cast<std::size_t>(frames)));
    std::vector<std::vector<bool>> vis(n, std::vector<bool>(static_cast<std::size_t>(frames), false));
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            const auto k = static_cast<std::size_t>(i * g + j);
            std::optional<double> held_depth;
            for (int t = 0; t < frames; ++t) {
                const geo::Pixel px{flow.at(0, t, i, j) * static_cast<double>(cam.width),
                                    flow.at(1, t, i, j) * static_cast<double>(cam.height)};
                const bool visible = flow.at(2, t, i, j) >= cfg.visibility_threshold;
                if (visible) {
                    const auto d = depth(t, i, j, px);
                    if (!d || !(*d > 0.0)) {
                        throw DepthLookupError("no depth for visible sample at frame " + std::to_string(t));
                    }
                    held_depth = d;
                }
                vis[k][static_cast<std::size_t>(t)] = visible;
                tracks[k][static_cast<std::size_t>(t)] =
                    held_depth ? cam.unproject(px, *held_depth) : Vec3(Vec3::Constant(std::nan("")));
            }
            tracks[k] = smooth(tracks[k], window, vis[k]);
        }
    }

    std::vector<std::size_t> anchors;
    for (std::size_t k = 0; k < n; ++k) {
        if (vis[k][0]) {
            anchors.push_back(k);
        }
    }
    if (anchors.size() < 3) {
        throw DegenerateGeometry("fewer than 3 grid points visible in the first frame");
    }
    Vec3 centroid = Vec3::Zero();
    for (auto k : anchors) {
        centroid += tracks[k][0];
    }
    centroid /= static_cast<double>(anchors.size());

    std::vector<Waypoint> poses;
    RigidTransform last;
    for (int t = 0; t < frames; ++t) {
        std::vector<Vec3> cur;
        std::vector<Vec3> ref;
        for (auto k : anchors) {
            if (vis[k][static_cast<std::size_t>(t)]) {
                cur.push_back(tracks[k][static_cast<std::size_t>(t)]);
                ref.push_back(tracks[k][0]);
            }
        }
        if (cur.size() >= 3) {
            try {
                last = rigid_merge(cur, ref);
            } catch (const DegenerateGeometry&) {
                if (t == 0) {
                    throw;
                }
            }
        } else if (t == 0) {
            throw DegenerateGeometry("frame 0 registration failed");
        }
        // Frames with too few visible points hold the previous pose.
        poses.push_back({last.apply(centroid), geo::matrix_to_rpy(last.rotation)});
    }
    return poses;
}

inline Trajectory3D lift_trajectory(const scene::FlowTensor& flow, const geo::CameraModel& cam,
                                    const DepthSource& depth, const LiftConfig& cfg = {}, int stream = 1)
{
    Trajectory3D tr;
    tr.stream = stream;
    tr.waypoints = resample(lift_poses(flow, cam, depth, cfg), cfg.waypoints, cfg.timing.rot_weight);
    tr.timestamps = nominal_timestamps(tr.waypoints, cfg.timing);
    return tr;
}

} // namespace sfd::lift
