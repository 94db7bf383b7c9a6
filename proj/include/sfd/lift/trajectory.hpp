#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfd/scene/geometry.hpp"

namespace sfd::lift {

using geo::Mat3;
using geo::Vec3;

struct Waypoint {
    Vec3 position = Vec3::Zero();
    Vec3 rpy = Vec3::Zero(); // relative to the object's frame-0 orientation

    Mat3 rotation() const { return geo::rpy_to_matrix(rpy); }
};

struct Trajectory3D {
    int stream = 1;
    std::vector<Waypoint> waypoints;
    std::vector<double> timestamps; // seconds, strictly increasing

    std::size_t size() const { return waypoints.size(); }
    double duration() const { return timestamps.empty() ? 0.0 : timestamps.back() - timestamps.front(); }
};

struct TimingConfig {
    double v_nominal = 0.2;     // m/s
    double w_nominal = 1.0;     // rad/s
    double min_step = 1e-3;     // s
    double rot_weight = 0.05;   // meters of path length per radian
};

// Per-axis angle interpolation along the shorter way.
inline Vec3 lerp_rpy(const Vec3& a, const Vec3& b, double s)
{
    Vec3 out;
    for (int k = 0; k < 3; ++k) {
        out[k] = geo::wrap_angle(a[k] + s * geo::wrap_angle(b[k] - a[k]));
    }
    return out;
}

inline double step_length(const Waypoint& a, const Waypoint& b, double rot_weight)
{
    return (b.position - a.position).norm() + rot_weight * geo::rotation_distance(a.rotation(), b.rotation());
}

inline std::vector<double> nominal_timestamps(const std::vector<Waypoint>& w, const TimingConfig& cfg)
{
    std::vector<double> t(w.size(), 0.0);
    for (std::size_t k = 1; k < w.size(); ++k) {
        const double dp = (w[k].position - w[k - 1].position).norm();
        const double dth = geo::rotation_distance(w[k - 1].rotation(), w[k].rotation());
        t[k] = t[k - 1] + std::max({dp / cfg.v_nominal, dth / cfg.w_nominal, cfg.min_step});
    }
    return t;
}

// Resamples a pose sequence to `count` waypoints evenly spaced in combined
// position + weighted rotation path length. Endpoints are kept exactly.
inline std::vector<Waypoint> resample(const std::vector<Waypoint>& poses, int count, double rot_weight)
{
    if (poses.empty() || count < 2) {
        throw std::invalid_argument("resample: need poses and at least 2 output waypoints");
    }
    std::vector<double> s(poses.size(), 0.0);
    for (std::size_t k = 1; k < poses.size(); ++k) {
        s[k] = s[k - 1] + step_length(poses[k - 1], poses[k], rot_weight);
    }
    std::vector<Waypoint> out(static_cast<std::size_t>(count));
    out.front() = poses.front();
    out.back() = poses.back();
    const double total = s.back();
    std::size_t seg = 0;
    for (int i = 1; i < count - 1; ++i) {
        if (total <= 0.0) {
            out[static_cast<std::size_t>(i)] = poses.front();
            continue;
        }
        const double target = total * i / (count - 1);
        while (seg + 2 < s.size() && s[seg + 1] < target) {
            ++seg;
        }
        const double len = s[seg + 1] - s[seg];
        const double a = len > 0.0 ? std::clamp((target - s[seg]) / len, 0.0, 1.0) : 0.0;
        auto& w = out[static_cast<std::size_t>(i)];
        w.position = poses[seg].position + a * (poses[seg + 1].position - poses[seg].position);
        w.rpy = lerp_rpy(poses[seg].rpy, poses[seg + 1].rpy, a);
    }
    return out;
}

inline nlohmann::json trajectory_to_json(const Trajectory3D& tr)
{
    nlohmann::json w = nlohmann::json::array();
    for (const auto& p : tr.waypoints) {
        w.push_back({p.position.x(), p.position.y(), p.position.z(), p.rpy.x(), p.rpy.y(), p.rpy.z()});
    }
    return {{"version", 1}, {"stream", tr.stream}, {"P", tr.waypoints.size()}, {"waypoints", w},
            {"timestamps", tr.timestamps}};
}

inline Trajectory3D trajectory_from_json(const nlohmann::json& j)
{
    if (j.at("version").get<int>() != 1) {
        throw std::invalid_argument("unsupported trajectory version");
    }
    Trajectory3D tr;
    tr.stream = j.at("stream").get<int>();
    for (const auto& w : j.at("waypoints")) {
        if (w.size() != 6) {
            throw std::invalid_argument("trajectory waypoint must have 6 entries");
        }
        tr.waypoints.push_back({{w[0].get<double>(), w[1].get<double>(), w[2].get<double>()},
                                {w[3].get<double>(), w[4].get<double>(), w[5].get<double>()}});
    }
    tr.timestamps = j.at("timestamps").get<std::vector<double>>();
    if (tr.waypoints.size() < 2 || tr.timestamps.size() != tr.waypoints.size() ||
        static_cast<std::size_t>(j.at("P").get<int>()) != tr.waypoints.size()) {
        throw std::invalid_argument("trajectory waypoint/timestamp counts disagree");
    }
    for (std::size_t k = 1; k < tr.timestamps.size(); ++k) {
        if (!(tr.timestamps[k] > tr.timestamps[k - 1])) {
            throw std::invalid_argument("trajectory timestamps must increase strictly");
        }
    }
    return tr;
}

inline void save_trajectories(const std::string& path, const std::vector<Trajectory3D>& trs)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : trs) {
        arr.push_back(trajectory_to_json(t));
    }
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    os << arr.dump(1) << '\n';
}

inline std::vector<Trajectory3D> load_trajectories(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open trajectory file " + path);
    }
    const auto j = nlohmann::json::parse(is);
    std::vector<Trajectory3D> out;
    if (j.is_array()) {
        for (const auto& t : j) {
            out.push_back(trajectory_from_json(t));
        }
    } else {
        out.push_back(trajectory_from_json(j));
    }
    return out;
}

} // namespace sfd::lift
