#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfd/scene/episode.hpp"

namespace sfd::sim {

using geo::Mat3;
using geo::Vec3;

struct SimConfig {
    double dt = 0.02;
    double v_max = 0.5;      // m/s
    double w_max = 2.0;      // rad/s
    double reach = 0.9;
    double grasp_radius = 0.01;
    double d_collide = 0.02;
    double tilt_angle = 0.7853981633974483; // 45 degrees
};

// Evaluated in both argument orders so the result is exactly symmetric.
inline double min_seg_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2)
{
    return std::min(geo::segment_distance(p1, q1, p2, q2), geo::segment_distance(p2, q2, p1, q1));
}

// Separating-axis test on boxes grown by margin/2 each. Corners are treated as
// square, so this errs on the side of reporting contact.
inline bool boxes_within(const geo::OrientedBox& a, const geo::OrientedBox& b, double margin)
{
    const Mat3& ra = a.pose.rotation;
    const Mat3& rb = b.pose.rotation;
    const Vec3 ea = a.half_extents + Vec3::Constant(margin / 2.0);
    const Vec3 eb = b.half_extents + Vec3::Constant(margin / 2.0);
    const Vec3 d = b.pose.position - a.pose.position;
    auto separated = [&](const Vec3& axis) {
        const double n = axis.norm();
        if (n < 1e-9) {
            return false;
        }
        const Vec3 u = axis / n;
        const double pa = (ra.transpose() * u).cwiseAbs().dot(ea);
        const double pb = (rb.transpose() * u).cwiseAbs().dot(eb);
        return std::abs(d.dot(u)) > pa + pb;
    };
    for (int i = 0; i < 3; ++i) {
        if (separated(ra.col(i)) || separated(rb.col(i))) {
            return false;
        }
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (separated(ra.col(i).cross(rb.col(j)))) {
                return false;
            }
        }
    }
    return true;
}

// Slab clip of the segment against the box grown by margin on every side.
inline bool segment_within_box(const Vec3& p, const Vec3& q, const geo::OrientedBox& box, double margin)
{
    const Vec3 a = box.pose.to_local(p);
    const Vec3 b = box.pose.to_local(q);
    const Vec3 e = box.half_extents + Vec3::Constant(margin);
    double t0 = 0.0;
    double t1 = 1.0;
    for (int i = 0; i < 3; ++i) {
        const double dir = b[i] - a[i];
        if (std::abs(dir) < 1e-15) {
            if (std::abs(a[i]) > e[i]) {
                return false;
            }
            continue;
        }
        double lo = (-e[i] - a[i]) / dir;
        double hi = (e[i] - a[i]) / dir;
        if (lo > hi) {
            std::swap(lo, hi);
        }
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
        if (t0 > t1) {
            return false;
        }
    }
    return true;
}

struct ArmState {
    Vec3 base = Vec3::Zero();
    Vec3 gripper = Vec3::Zero();
    Mat3 orientation = Mat3::Identity();
    bool closed = false;
    int attached = -1; // object index
    double v_max = 0.5;
};

struct Event {
    long tick = 0;
    std::string type;
    nlohmann::json data;
};

enum class GripperAction { none, close, open };

struct ArmCommand {
    std::optional<Vec3> target;
    std::optional<Mat3> orientation;
    GripperAction action = GripperAction::none;
};

struct World {
    scene::TaskTemplate task = scene::TaskTemplate::packing;
    std::vector<scene::SceneObject> objects;
    std::vector<geo::Pose> poses;
    std::vector<int> parent; // container an object rests in, or -1
    std::vector<scene::Region> regions;
    std::array<int, 2> targets{0, 1};
    std::array<ArmState, 2> arms;
    long tick = 0;
    SimConfig cfg;
    std::vector<Event> events;

    // Contact and region state, so events fire on transitions only.
    std::set<std::string> touching;
    std::map<std::string, bool> inside;
    std::vector<bool> tilted;

    geo::OrientedBox box(int i) const
    {
        return {poses[static_cast<std::size_t>(i)], objects[static_cast<std::size_t>(i)].half_extents};
    }
    Vec3 grasp_point(int i) const
    {
        return poses[static_cast<std::size_t>(i)].apply(objects[static_cast<std::size_t>(i)].grasp_local());
    }
    double time() const { return static_cast<double>(tick) * cfg.dt; }
    const scene::Region& region(const std::string& name) const
    {
        for (const auto& r : regions) {
            if (r.name == name) {
                return r;
            }
        }
        throw std::out_of_range("world has no region '" + name + "'");
    }
    void log(std::string type, nlohmann::json data) { events.push_back({tick, std::move(type), std::move(data)}); }
};

namespace detail {

inline std::string region_key(int object, const std::string& region)
{
    return std::to_string(object) + "@" + region;
}

inline bool is_tilted(const World& w, int i)
{
    const double up = w.poses[static_cast<std::size_t>(i)].rotation(2, 2);
    return std::acos(std::clamp(up, -1.0, 1.0)) > w.cfg.tilt_angle;
}

// Object plus everything resting in it, transitively.
inline std::vector<int> group_of(const World& w, int root)
{
    std::vector<int> out{root};
    for (std::size_t k = 0; k < out.size(); ++k) {
        for (int i = 0; i < static_cast<int>(w.objects.size()); ++i) {
            if (w.parent[static_cast<std::size_t>(i)] == out[k]) {
                out.push_back(i);
            }
        }
    }
    return out;
}

inline bool descends_from(const World& w, int i, int root)
{
    for (int p = w.parent[static_cast<std::size_t>(i)]; p >= 0; p = w.parent[static_cast<std::size_t>(p)]) {
        if (p == root) {
            return true;
        }
    }
    return false;
}

// Rotates an object and its contents by dr about pivot_before, then carries
// the pivot to pivot_after.
inline void move_group(World& w, int root, const Mat3& dr, const Vec3& pivot_before, const Vec3& pivot_after)
{
    for (int i : group_of(w, root)) {
        auto& p = w.poses[static_cast<std::size_t>(i)];
        p.position = pivot_after + dr * (p.position - pivot_before);
        p.rotation = dr * p.rotation;
    }
}

// Container whose footprint holds the released object's center.
inline int container_below(const World& w, int i)
{
    const Vec3 c = w.poses[static_cast<std::size_t>(i)].position;
    int best = -1;
    double best_top = -1e9;
    for (int k = 0; k < static_cast<int>(w.objects.size()); ++k) {
        const auto& o = w.objects[static_cast<std::size_t>(k)];
        if (k == i || !o.container || descends_from(w, k, i)) {
            continue;
        }
        const Vec3 l = w.poses[static_cast<std::size_t>(k)].to_local(c);
        const Vec3& e = o.half_extents;
        if (std::abs(l.x()) <= e.x() && std::abs(l.y()) <= e.y() && l.z() >= -e.z() && l.z() <= e.z() + 0.1) {
            const double top = w.poses[static_cast<std::size_t>(k)].position.z() + e.z();
            if (top > best_top) {
                best_top = top;
                best = k;
            }
        }
    }
    return best;
}

inline void contact(World& w, std::set<std::string>& now, const std::string& key, nlohmann::json data)
{
    now.insert(key);
    if (!w.touching.contains(key)) {
        w.log("collision", std::move(data));
    }
}

inline void check_collisions(World& w)
{
    std::set<std::string> now;
    const double d = w.cfg.d_collide;
    const auto& a0 = w.arms[0];
    const auto& a1 = w.arms[1];
    const double links = min_seg_distance(a0.base, a0.gripper, a1.base, a1.gripper);
    if (links < d) {
        contact(w, now, "link0|link1", {{"a", "link0"}, {"b", "link1"}, {"distance", links}});
    }
    std::array<std::vector<int>, 2> carried;
    std::vector<bool> is_carried(w.objects.size(), false);
    for (int arm = 0; arm < 2; ++arm) {
        if (w.arms[static_cast<std::size_t>(arm)].attached >= 0) {
            carried[static_cast<std::size_t>(arm)] = group_of(w, w.arms[static_cast<std::size_t>(arm)].attached);
            for (int i : carried[static_cast<std::size_t>(arm)]) {
                is_carried[static_cast<std::size_t>(i)] = true;
            }
        }
    }
    auto obj = [](int i) { return "obj" + std::to_string(i); };
    for (int arm = 0; arm < 2; ++arm) {
        const auto& other = w.arms[static_cast<std::size_t>(1 - arm)];
        for (int i : carried[static_cast<std::size_t>(arm)]) {
            if (segment_within_box(other.base, other.gripper, w.box(i), d)) {
                const std::string link = "link" + std::to_string(1 - arm);
                contact(w, now, link + "|" + obj(i), {{"a", link}, {"b", obj(i)}});
            }
        }
    }
    for (int i : carried[0]) {
        for (int j : carried[1]) {
            if (boxes_within(w.box(i), w.box(j), d)) {
                contact(w, now, obj(i) + "|" + obj(j), {{"a", obj(i)}, {"b", obj(j)}});
            }
        }
    }
    for (int arm = 0; arm < 2; ++arm) {
        for (int i : carried[static_cast<std::size_t>(arm)]) {
            for (int k = 0; k < static_cast<int>(w.objects.size()); ++k) {
                const auto& o = w.objects[static_cast<std::size_t>(k)];
                if (is_carried[static_cast<std::size_t>(k)] || o.container || o.role == scene::ObjectRole::fixture) {
                    continue;
                }
                if (boxes_within(w.box(i), w.box(k), d)) {
                    const auto [lo, hi] = std::minmax(i, k);
                    contact(w, now, obj(lo) + "|" + obj(hi), {{"a", obj(lo)}, {"b", obj(hi)}});
                }
            }
        }
    }
    w.touching = std::move(now);
}

inline void update_regions(World& w, bool log)
{
    for (int t : w.targets) {
        for (const auto& r : w.regions) {
            const bool in = r.contains(w.poses[static_cast<std::size_t>(t)].position);
            const auto key = region_key(t, r.name);
            const auto it = w.inside.find(key);
            if (log && it != w.inside.end() && it->second != in) {
                w.log(in ? "region_enter" : "region_exit", {{"object", t}, {"region", r.name}});
            }
            w.inside[key] = in;
        }
    }
    w.tilted.resize(w.objects.size(), false);
    for (int i = 0; i < static_cast<int>(w.objects.size()); ++i) {
        const bool now = is_tilted(w, i);
        if (log && now != w.tilted[static_cast<std::size_t>(i)]) {
            w.log(now ? "tilt_start" : "tilt_end", {{"object", i}});
        }
        w.tilted[static_cast<std::size_t>(i)] = now;
    }
}

} // namespace detail

inline World make_world(const scene::EpisodeRecord& ep, const scene::WorkspaceLayout& layout = scene::default_layout(),
                        const SimConfig& cfg = {})
{
    World w;
    w.task = ep.task;
    w.objects = ep.objects;
    w.poses = ep.frames.at(0);
    w.parent.assign(w.objects.size(), -1);
    w.regions = ep.regions;
    w.targets = ep.targets;
    w.cfg = cfg;
    for (std::size_t a = 0; a < 2; ++a) {
        w.arms[a].base = layout.arm_base[a];
        w.arms[a].gripper = layout.arm_home[a];
        w.arms[a].v_max = cfg.v_max;
    }
    // Objects already resting in a container ride along with it.
    for (int i = 0; i < static_cast<int>(w.objects.size()); ++i) {
        if (!w.objects[static_cast<std::size_t>(i)].container) {
            w.parent[static_cast<std::size_t>(i)] = detail::container_below(w, i);
        }
    }
    detail::update_regions(w, false);
    return w;
}

// One tick: motion, then gripper actions, then contact and region bookkeeping.
inline void step(World& w, const std::array<ArmCommand, 2>& commands, double dt)
{
    if (!(dt > 0.0)) {
        throw std::invalid_argument("step needs dt > 0");
    }
    for (std::size_t a = 0; a < 2; ++a) {
        auto& arm = w.arms[a];
        const auto& cmd = commands[a];
        const geo::Pose grip_before{arm.gripper, arm.orientation};

        double rot_step = 0.0;
        Mat3 next_rot = arm.orientation;
        if (cmd.orientation) {
            const Eigen::AngleAxisd delta(arm.orientation.transpose() * *cmd.orientation);
            rot_step = std::min(delta.angle(), w.cfg.w_max * dt);
            next_rot = arm.orientation * Eigen::AngleAxisd(rot_step, delta.axis()).toRotationMatrix();
        }
        // Rotation swings an attached object about the gripper; whatever that
        // costs comes out of the translation budget.
        double swing = 0.0;
        if (arm.attached >= 0) {
            for (int i : detail::group_of(w, arm.attached)) {
                const Vec3 r = w.poses[static_cast<std::size_t>(i)].position - arm.gripper;
                swing = std::max(swing, ((next_rot * arm.orientation.transpose() - Mat3::Identity()) * r).norm());
            }
        }
        Vec3 next = arm.gripper;
        if (cmd.target) {
            const Vec3 delta = *cmd.target - arm.gripper;
            const double budget = std::max(0.0, arm.v_max * dt - swing);
            const double len = delta.norm();
            next = len <= budget ? *cmd.target : Vec3(arm.gripper + delta * (budget / len));
        }
        const Vec3 from_base = next - arm.base;
        if (from_base.norm() > w.cfg.reach) {
            next = arm.base + from_base * (w.cfg.reach / from_base.norm());
        }
        arm.gripper = next;
        arm.orientation = next_rot;
        if (arm.attached >= 0) {
            const Mat3 dr = arm.orientation * grip_before.rotation.transpose();
            detail::move_group(w, arm.attached, dr, grip_before.position, arm.gripper);
        }
    }
    ++w.tick;

    for (std::size_t a = 0; a < 2; ++a) {
        auto& arm = w.arms[a];
        switch (commands[a].action) {
        case GripperAction::none:
            break;
        case GripperAction::close: {
            arm.closed = true;
            int best = -1;
            double best_d = w.cfg.grasp_radius;
            for (int i = 0; i < static_cast<int>(w.objects.size()); ++i) {
                const auto& o = w.objects[static_cast<std::size_t>(i)];
                const bool held = w.arms[0].attached == i || w.arms[1].attached == i;
                const double d = (w.grasp_point(i) - arm.gripper).norm();
                if (o.graspable && !held && d <= best_d) {
                    best = i;
                    best_d = d;
                }
            }
            if (best >= 0) {
                arm.attached = best;
                w.parent[static_cast<std::size_t>(best)] = -1;
                w.log("grasp", {{"arm", a}, {"object", best}});
            }
            break;
        }
        case GripperAction::open:
            arm.closed = false;
            if (arm.attached >= 0) {
                const int i = arm.attached;
                arm.attached = -1;
                w.parent[static_cast<std::size_t>(i)] = detail::container_below(w, i);
                w.log("release", {{"arm", a}, {"object", i}, {"container", w.parent[static_cast<std::size_t>(i)]}});
            }
            break;
        }
    }
    detail::check_collisions(w);
    detail::update_regions(w, true);
}

inline nlohmann::json event_to_json(const Event& e) { return {{"tick", e.tick}, {"type", e.type}, {"data", e.data}}; }

inline void write_event_log(std::ostream& os, const std::vector<Event>& events)
{
    for (const auto& e : events) {
        os << event_to_json(e).dump() << '\n';
    }
}

} // namespace sfd::sim
