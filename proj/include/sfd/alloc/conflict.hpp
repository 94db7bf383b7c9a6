#pragma once

#include <array>
#include <limits>
#include <vector>

#include "sfd/alloc/segment.hpp"
#include "sfd/scene/episode.hpp"

namespace sfd::alloc {

using Assignment = std::array<int, 2>; // arm index for stream 1 and stream 2

struct ArmMotion {
    double speed = 0.2;      // m/s for approach and retreat
    double spacing = 0.02;   // densification step for swept paths, meters
};

inline int arm_of(const Segment& s, const Assignment& a) { return a[static_cast<std::size_t>(s.stream - 1)]; }

// Gripper path of a segment on its arm: home, then the waypoints, then home
// again for carrying segments; just home otherwise.
inline std::vector<Vec3> gripper_path(const Segment& s, int arm, const scene::WorkspaceLayout& layout)
{
    const Vec3& home = layout.arm_home[static_cast<std::size_t>(arm)];
    if (!s.carry) {
        return {home};
    }
    std::vector<Vec3> path{home};
    path.insert(path.end(), s.waypoints.begin(), s.waypoints.end());
    path.push_back(home);
    return path;
}

inline std::vector<Vec3> densify(const std::vector<Vec3>& path, double spacing)
{
    std::vector<Vec3> out;
    if (path.empty()) {
        return out;
    }
    out.push_back(path.front());
    for (std::size_t k = 1; k < path.size(); ++k) {
        const Vec3 d = path[k] - path[k - 1];
        const int n = std::max(1, static_cast<int>(std::ceil(d.norm() / spacing)));
        for (int i = 1; i <= n; ++i) {
            out.push_back(path[k - 1] + (static_cast<double>(i) / n) * d);
        }
    }
    return out;
}

inline double path_length(const std::vector<Vec3>& path)
{
    double len = 0.0;
    for (std::size_t k = 1; k < path.size(); ++k) {
        len += (path[k] - path[k - 1]).norm();
    }
    return len;
}

// Assigns global ids in the given order and adds approach and retreat time to
// carrying segments.
inline void finalize_segments(std::vector<Segment>& segments, const Assignment& assignment,
                              const scene::WorkspaceLayout& layout, const ArmMotion& motion = {})
{
    for (std::size_t k = 0; k < segments.size(); ++k) {
        auto& s = segments[k];
        s.id = static_cast<int>(k);
        s.duration = s.track_duration;
        if (s.carry) {
            const Vec3& home = layout.arm_home[static_cast<std::size_t>(arm_of(s, assignment))];
            const double reach = (s.waypoints.front() - home).norm() + (s.waypoints.back() - home).norm();
            s.duration = quantize_duration(s.track_duration + reach / motion.speed);
        }
    }
}

struct ConflictEdge {
    int a = 0;
    int b = 0;
    double distance = 0.0;
};

struct ConflictGraph {
    int nodes = 0;
    std::vector<ConflictEdge> edges; // a < b
    double d_safe = 0.1;

    bool conflicts(int a, int b) const
    {
        for (const auto& e : edges) {
            if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) {
                return true;
            }
        }
        return false;
    }
};

// Minimum distance between two arms' swept corridors: gripper polylines plus
// the straight base-to-gripper link at every densified point.
inline double corridor_distance(const std::vector<Vec3>& pa, const Vec3& base_a, const std::vector<Vec3>& pb,
                                const Vec3& base_b)
{
    double best = std::numeric_limits<double>::infinity();
    auto edges = [](const std::vector<Vec3>& p, std::size_t k) {
        return std::pair<Vec3, Vec3>{p[k], p[std::min(k + 1, p.size() - 1)]};
    };
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const auto [a0, a1] = edges(pa, i);
        for (std::size_t j = 0; j < pb.size(); ++j) {
            const auto [b0, b1] = edges(pb, j);
            best = std::min({best, geo::segment_distance(a0, a1, b0, b1),
                             geo::segment_distance(base_a, pa[i], b0, b1),
                             geo::segment_distance(a0, a1, base_b, pb[j]),
                             geo::segment_distance(base_a, pa[i], base_b, pb[j])});
        }
    }
    return best;
}

inline double segment_pair_distance(const Segment& a, const Segment& b, const Assignment& assignment,
                                    const scene::WorkspaceLayout& layout, const ArmMotion& motion = {})
{
    const int arm_a = arm_of(a, assignment);
    const int arm_b = arm_of(b, assignment);
    return corridor_distance(densify(gripper_path(a, arm_a, layout), motion.spacing),
                             layout.arm_base[static_cast<std::size_t>(arm_a)],
                             densify(gripper_path(b, arm_b, layout), motion.spacing),
                             layout.arm_base[static_cast<std::size_t>(arm_b)]);
}

// Edge between cross-stream segments closer than d_safe (strict).
inline ConflictGraph detect_conflicts(const std::vector<Segment>& segments, double d_safe, const Assignment& assignment,
                                      const scene::WorkspaceLayout& layout, const ArmMotion& motion = {})
{
    ConflictGraph g;
    g.nodes = static_cast<int>(segments.size());
    g.d_safe = d_safe;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        for (std::size_t j = i + 1; j < segments.size(); ++j) {
            if (segments[i].stream == segments[j].stream) {
                continue;
            }
            const double d = segment_pair_distance(segments[i], segments[j], assignment, layout, motion);
            if (d < d_safe) {
                g.edges.push_back({segments[i].id, segments[j].id, d});
            }
        }
    }
    return g;
}

struct Infeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stream-to-arm map minimizing the summed base-to-centroid distance with every
// waypoint in reach. Ties keep stream 1 on the left arm.
inline Assignment assign_arms(const std::array<const Trajectory3D*, 2>& trajs, const scene::WorkspaceLayout& layout)
{
    auto centroid = [](const Trajectory3D& t) {
        Vec3 c = Vec3::Zero();
        for (const auto& w : t.waypoints) {
            c += w.position;
        }
        return Vec3(c / static_cast<double>(std::max<std::size_t>(1, t.size())));
    };
    auto reachable = [&](const Trajectory3D& t, int arm) {
        const Vec3& base = layout.arm_base[static_cast<std::size_t>(arm)];
        return std::all_of(t.waypoints.begin(), t.waypoints.end(),
                           [&](const lift::Waypoint& w) { return (w.position - base).norm() <= layout.reach; });
    };
    const std::array<Assignment, 2> options{Assignment{0, 1}, Assignment{1, 0}};
    std::optional<Assignment> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& opt : options) {
        bool ok = true;
        double cost = 0.0;
        for (int s = 0; s < 2; ++s) {
            const auto& t = *trajs[static_cast<std::size_t>(s)];
            const int arm = opt[static_cast<std::size_t>(s)];
            ok = ok && reachable(t, arm);
            cost += (centroid(t) - layout.arm_base[static_cast<std::size_t>(arm)]).norm();
        }
        if (ok && cost < best_cost) {
            best = opt;
            best_cost = cost;
        }
    }
    if (!best) {
        throw Infeasible("no arm assignment keeps every waypoint within reach");
    }
    return *best;
}

} // namespace sfd::alloc
