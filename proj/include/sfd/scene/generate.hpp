#pragma once

// Scripted bimanual demonstrations on a synthetic tabletop.
//
// Stream 1 always manipulates an object on the left half of the table and
// stream 2 one on the right half; fixtures (box, pot, drawer, work spot) sit at
// fixed places so a policy conditioned on the initial layout can predict where
// objects end up.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sfd/core/rng.hpp"
#include "sfd/scene/episode.hpp"

namespace sfd::scene {

struct PlacementError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenerateOptions {
    int frames = 32;
    double frame_dt = 0.25;
    int max_attempts = 1000;
    double path_noise = 0.004; // amplitude of the smooth lateral wobble, meters
    double clearance = 0.03;   // minimum gap between non-container objects
};

inline const std::vector<std::string>& color_words()
{
    static const std::vector<std::string> c = {"red", "green", "blue", "yellow", "purple", "orange", "white", "black"};
    return c;
}

inline const std::vector<std::string>& item_labels()
{
    static const std::vector<std::string> l = {"cube", "ball", "block"};
    return l;
}

inline const std::vector<std::string>& object_labels()
{
    static const std::vector<std::string> l = {"cube", "ball", "block", "can", "cup", "lid", "drawer", "pot", "box"};
    return l;
}

inline Vec3 label_half_extents(const std::string& label)
{
    if (label == "can") {
        return {0.025, 0.025, 0.05};
    }
    if (label == "cup") {
        return {0.03, 0.03, 0.035};
    }
    if (label == "lid") {
        return {0.06, 0.06, 0.008};
    }
    if (label == "drawer") {
        return {0.08, 0.06, 0.03};
    }
    if (label == "block") {
        return {0.03, 0.02, 0.02};
    }
    return {0.025, 0.025, 0.025};
}

namespace detail {

struct Motion {
    int object = 0;
    int f0 = 0;
    int f1 = 0;
    std::optional<Vec3> grasp_to;    // world grasp point at the end
    std::optional<Mat3> rotation_to; // world orientation at the end
};

inline double ease(double s) { return 0.5 * (1.0 - std::cos(std::numbers::pi * std::clamp(s, 0.0, 1.0))); }

inline geo::Pose pose_from_grasp(const SceneObject& obj, const Vec3& grasp, const Mat3& rot)
{
    return geo::Pose{grasp - rot * obj.grasp_local(), rot};
}

// Evaluates scripted motions into per-frame poses.
inline std::vector<std::vector<geo::Pose>> play_script(const std::vector<SceneObject>& objects,
                                                       std::vector<Motion> motions, int frames, double noise,
                                                       Rng& rng)
{
    std::stable_sort(motions.begin(), motions.end(), [](const Motion& a, const Motion& b) { return a.f0 < b.f0; });
    const auto n = objects.size();
    std::vector<Vec3> grasp(n);
    std::vector<Mat3> rot(n);
    for (std::size_t i = 0; i < n; ++i) {
        rot[i] = geo::rot_z(objects[i].yaw);
        grasp[i] = objects[i].position + rot[i] * objects[i].grasp_local();
    }

    struct Active {
        Motion m;
        Vec3 g0;
        Eigen::Quaterniond q0, q1;
        Vec3 g1;
        Vec3 lateral;
    };
    std::vector<std::optional<Active>> active(n);
    std::size_t next = 0;

    std::vector<std::vector<geo::Pose>> out(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
        while (next < motions.size() && motions[next].f0 <= t) {
            const auto& m = motions[next];
            const auto o = static_cast<std::size_t>(m.object);
            Active a{m, grasp[o], Eigen::Quaterniond(rot[o]), Eigen::Quaterniond(m.rotation_to.value_or(rot[o])),
                     m.grasp_to.value_or(grasp[o]), Vec3::Zero()};
            const Vec3 d = a.g1 - a.g0;
            const Vec3 horiz{d.x(), d.y(), 0.0};
            if (horiz.norm() > 1e-6) {
                a.lateral = Vec3{-horiz.y(), horiz.x(), 0.0}.normalized() * (noise * rng.normal());
            }
            active[o] = a;
            ++next;
        }
        auto& row = out[static_cast<std::size_t>(t)];
        row.resize(n);
        for (std::size_t o = 0; o < n; ++o) {
            if (active[o]) {
                const auto& a = *active[o];
                const double s = a.m.f1 > a.m.f0 ? static_cast<double>(t - a.m.f0) / (a.m.f1 - a.m.f0) : 1.0;
                const double e = ease(s);
                grasp[o] = a.g0 + e * (a.g1 - a.g0) + std::sin(std::numbers::pi * e) * a.lateral;
                rot[o] = a.q0.slerp(e, a.q1).normalized().toRotationMatrix();
                if (t >= a.m.f1) {
                    grasp[o] = a.g1;
                    rot[o] = a.q1.toRotationMatrix();
                    active[o].reset();
                }
            }
            row[o] = pose_from_grasp(objects[o], grasp[o], rot[o]);
        }
    }
    return out;
}

inline Vec3 grasp_at(const SceneObject& obj, const Vec3& center_xy, double yaw, double z_center)
{
    const Vec3 c{center_xy.x(), center_xy.y(), z_center};
    return c + geo::rot_z(yaw) * obj.grasp_local();
}

struct Builder {
    TaskTemplate task;
    Rng& rng;
    const GenerateOptions& opts;
    std::vector<SceneObject> objects;
    std::vector<Motion> motions;
    std::vector<Region> regions;
    std::vector<PrecedenceRule> precedence;
    std::array<int, 2> targets{0, 1};
    std::array<int, 2> segments{1, 1};
    std::string instruction;
    // Boxes that other objects must stay clear of at placement time
    // (destinations, resting spots).
    std::vector<std::pair<Vec3, Vec3>> reserved;

    std::string random_color() { return color_words()[rng.below(color_words().size())]; }

    SceneObject make(const std::string& label, const std::string& color, ObjectRole role)
    {
        SceneObject o;
        o.label = label;
        o.color = color;
        o.half_extents = label_half_extents(label);
        o.role = role;
        o.graspable = role != ObjectRole::fixture;
        return o;
    }

    void place_on_table(SceneObject& o, double xlo, double xhi, double ylo, double yhi, double yaw_range = 0.6)
    {
        o.position = Vec3{rng.uniform(xlo, xhi), rng.uniform(ylo, yhi), o.half_extents.z()};
        o.yaw = rng.uniform(-yaw_range, yaw_range);
    }

    int add(SceneObject o)
    {
        objects.push_back(std::move(o));
        return static_cast<int>(objects.size()) - 1;
    }

    void reserve_box(const Vec3& center, const Vec3& half)
    {
        reserved.emplace_back(center - half, center + half);
    }

    bool clear_of_others(const SceneObject& o, std::size_t upto) const
    {
        const auto box = geo::OrientedBox{geo::Pose{o.position, geo::rot_z(o.yaw)}, o.half_extents}.world_aabb();
        for (std::size_t i = 0; i < upto; ++i) {
            const auto& p = objects[i];
            const auto other = geo::OrientedBox{geo::Pose{p.position, geo::rot_z(p.yaw)}, p.half_extents}.world_aabb();
            if (geo::aabb_distance(box, other) < opts.clearance) {
                return false;
            }
        }
        for (const auto& r : reserved) {
            if (geo::aabb_distance(box, r) < opts.clearance) {
                return false;
            }
        }
        return true;
    }

    // Distinct (color, label) pair that no object uses yet.
    std::pair<std::string, std::string> fresh_pair(const std::vector<std::string>& labels)
    {
        for (int k = 0; k < 200; ++k) {
            auto label = labels[rng.below(labels.size())];
            auto color = random_color();
            const bool used = std::any_of(objects.begin(), objects.end(),
                                          [&](const SceneObject& o) { return o.label == label && o.color == color; });
            if (!used) {
                return {color, label};
            }
        }
        throw PlacementError("vocabulary exhausted");
    }
};

} // namespace detail

// Builds one scripted episode. Deterministic per (task, seed).
inline EpisodeRecord generate_episode(TaskTemplate task, std::uint64_t seed, const GenerateOptions& opts = {})
{
    const auto& layout = default_layout();
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
        Rng rng(seed ^ (0x5851F42D4C957F2Dull * static_cast<std::uint64_t>(attempt + 1)));
        detail::Builder b{task, rng, opts, {}, {}, {}, {}, {0, 1}, {1, 1}, {}, {}};
        const double left_lo = -0.42, left_hi = -0.18, y_lo = 0.22, y_hi = 0.56;
        bool ok = true;

        auto place_target = [&](SceneObject& o, bool left, double xlo, double xhi) {
            if (left) {
                b.place_on_table(o, xlo, xhi, y_lo, y_hi);
            } else {
                b.place_on_table(o, -xhi, -xlo, y_lo, y_hi);
            }
            ok = ok && b.clear_of_others(o, b.objects.size());
        };

        switch (task) {
        case TaskTemplate::packing: {
            auto box = b.make("box", "brown", ObjectRole::fixture);
            box.half_extents = {0.12, 0.07, 0.005};
            box.position = {0.0, 0.42, 0.005};
            box.container = true;
            b.add(box);
            const auto [c1, l1] = b.fresh_pair(item_labels());
            auto o1 = b.make(l1, c1, ObjectRole::target);
            place_target(o1, true, left_lo, left_hi);
            const int i1 = b.add(o1);
            const auto [c2, l2] = b.fresh_pair(item_labels());
            auto o2 = b.make(l2, c2, ObjectRole::target);
            place_target(o2, false, left_lo, left_hi);
            const int i2 = b.add(o2);
            b.targets = {i1, i2};
            const auto& t1 = b.objects[static_cast<std::size_t>(i1)];
            const auto& t2 = b.objects[static_cast<std::size_t>(i2)];
            b.motions.push_back({i1, 2, 14, detail::grasp_at(t1, {-0.06, 0.42, 0}, t1.yaw, t1.half_extents.z()), {}});
            b.motions.push_back({i2, 4, 16, detail::grasp_at(t2, {0.06, 0.42, 0}, t2.yaw, t2.half_extents.z()), {}});
            b.regions.push_back({"box", {-0.12, 0.35, 0.0}, {0.12, 0.49, 0.15}});
            b.instruction = "pack the " + c1 + " " + l1 + " and the " + c2 + " " + l2 + " into the box";
            break;
        }
        case TaskTemplate::put_into_pot: {
            auto pot = b.make("pot", "gray", ObjectRole::fixture);
            pot.half_extents = {0.07, 0.07, 0.05};
            pot.position = {0.0, 0.42, 0.05};
            pot.container = true;
            b.add(pot);
            const auto lid_color = b.random_color();
            auto lid = b.make("lid", lid_color, ObjectRole::target);
            lid.position = {0.0, 0.42, 0.1 + lid.half_extents.z()};
            lid.yaw = rng.uniform(-0.3, 0.3);
            const int il = b.add(lid);
            // The lid rests on a stand as tall as the pot, so it travels level.
            auto stand = b.make("stand", "gray", ObjectRole::fixture);
            stand.half_extents = pot.half_extents;
            stand.position = {-0.3, 0.28, 0.05};
            b.add(stand);
            const Vec3 aside = stand.position;
            const auto [c2, l2] = b.fresh_pair(item_labels());
            auto item = b.make(l2, c2, ObjectRole::target);
            place_target(item, false, left_lo, left_hi);
            const int ii = b.add(item);
            b.targets = {il, ii};
            b.segments = {2, 1};
            const auto& lo = b.objects[static_cast<std::size_t>(il)];
            const auto& it = b.objects[static_cast<std::size_t>(ii)];
            const Vec3 lid_home = lo.position + geo::rot_z(lo.yaw) * lo.grasp_local();
            b.motions.push_back({il, 1, 9, detail::grasp_at(lo, aside, lo.yaw, lo.position.z()), {}});
            b.motions.push_back({ii, 11, 20, detail::grasp_at(it, {0.0, 0.42, 0}, it.yaw, 0.03), {}});
            b.motions.push_back({il, 22, 30, lid_home, {}});
            b.regions.push_back({"pot", {-0.07, 0.35, 0.0}, {0.07, 0.49, 0.095}});
            b.regions.push_back({"pot_top", {-0.03, 0.39, 0.095}, {0.03, 0.45, 0.14}});
            b.precedence.push_back({"lid_off_before_item_in", {1, 0}, {2, 0}});
            b.precedence.push_back({"item_in_before_lid_on", {2, 0}, {1, 1}});
            b.instruction = "take the " + lid_color + " lid off, put the " + c2 + " " + l2 +
                            " into the pot, then put the lid back";
            break;
        }
        case TaskTemplate::pouring: {
            const Vec3 work{-0.06, 0.42, 0.0};
            const auto [c1, l1] = b.fresh_pair({"cup"});
            auto cup = b.make(l1, c1, ObjectRole::target);
            place_target(cup, true, -0.42, -0.30);
            const int ic = b.add(cup);
            b.reserve_box(Vec3{work.x(), work.y(), 0.035}, Vec3{0.04, 0.04, 0.035});
            const auto [c2, l2] = b.fresh_pair({"can"});
            auto can = b.make(l2, c2, ObjectRole::target);
            place_target(can, false, -0.30, -0.18);
            const int ia = b.add(can);
            const Vec3 pour_grasp{work.x() + 0.14, work.y(), 0.16};
            b.reserve_box(Vec3{pour_grasp.x() + 0.05, pour_grasp.y(), 0.1}, Vec3{0.06, 0.03, 0.06});
            b.targets = {ic, ia};
            b.segments = {2, 3};
            const auto& cu = b.objects[static_cast<std::size_t>(ic)];
            const auto& ca = b.objects[static_cast<std::size_t>(ia)];
            const Vec3 cup_home = cu.position + geo::rot_z(cu.yaw) * cu.grasp_local();
            const Vec3 can_home = ca.position + geo::rot_z(ca.yaw) * ca.grasp_local();
            const Mat3 can_rot = geo::rot_z(ca.yaw);
            b.motions.push_back({ic, 1, 9, detail::grasp_at(cu, work, cu.yaw, cu.half_extents.z()), {}});
            // Three-frame holds around and at the top of the tilt keep the legs
            // apart under temporal smoothing, so the full pour angle survives.
            b.motions.push_back({ia, 3, 10, pour_grasp, {}});
            b.motions.push_back({ia, 13, 16, {}, geo::rot_y(-1.3) * can_rot});
            b.motions.push_back({ia, 19, 22, {}, can_rot});
            b.motions.push_back({ia, 25, 30, can_home, {}});
            b.motions.push_back({ic, 23, 30, cup_home, {}});
            b.regions.push_back({"work", {work.x() - 0.03, work.y() - 0.03, 0.0}, {work.x() + 0.03, work.y() + 0.03, 0.15}});
            b.precedence.push_back({"container_placed_before_pour", {1, 0}, {2, 1}});
            b.precedence.push_back({"pour_before_container_return", {2, 1}, {1, 1}});
            b.instruction = "move the " + c1 + " cup to the middle and pour the " + c2 + " can into it";
            break;
        }
        case TaskTemplate::drawer_place: {
            const auto drawer_color = b.random_color();
            auto drawer = b.make("drawer", drawer_color, ObjectRole::target);
            drawer.position = {-0.12, 0.5, drawer.half_extents.z()};
            drawer.yaw = 0.0;
            drawer.container = true;
            const int id = b.add(drawer);
            const Vec3 open_center{-0.12, 0.36, drawer.half_extents.z()};
            b.reserve_box(open_center, drawer.half_extents + Vec3::Constant(0.005));
            const auto [c2, l2] = b.fresh_pair(item_labels());
            auto item = b.make(l2, c2, ObjectRole::target);
            place_target(item, false, left_lo, left_hi);
            const int ii = b.add(item);
            b.targets = {id, ii};
            b.segments = {2, 1};
            const auto& dr = b.objects[static_cast<std::size_t>(id)];
            const auto& it = b.objects[static_cast<std::size_t>(ii)];
            const Vec3 closed_grasp = dr.position + dr.grasp_local();
            b.motions.push_back({id, 1, 8, open_center + dr.grasp_local(), {}});
            b.motions.push_back({ii, 10, 19, detail::grasp_at(it, {open_center.x() + 0.035, open_center.y(), 0}, it.yaw, it.half_extents.z()), {}});
            b.motions.push_back({id, 21, 29, closed_grasp, {}});
            b.regions.push_back({"drawer_open", open_center - Vec3::Constant(0.02), open_center + Vec3::Constant(0.02)});
            b.precedence.push_back({"open_before_place", {1, 0}, {2, 0}});
            b.precedence.push_back({"place_before_close", {2, 0}, {1, 1}});
            b.instruction = "open the " + drawer_color + " drawer, place the " + c2 + " " + l2 + " inside, and close it";
            break;
        }
        }
        if (!ok) {
            continue;
        }

        // Distractors.
        const int n_distractors = 2 + static_cast<int>(rng.below(2));
        for (int k = 0; k < n_distractors && ok; ++k) {
            bool placed = false;
            for (int tries = 0; tries < 50 && !placed; ++tries) {
                const auto [c, l] = b.fresh_pair({"cube", "ball", "block", "can", "cup"});
                auto d = b.make(l, c, ObjectRole::distractor);
                b.place_on_table(d, -0.44, 0.44, 0.2, 0.58, 3.0);
                if (b.clear_of_others(d, b.objects.size())) {
                    b.add(d);
                    placed = true;
                }
            }
            ok = placed;
        }
        if (!ok) {
            continue;
        }

        EpisodeRecord ep;
        ep.task = task;
        ep.seed = seed;
        ep.instruction = b.instruction;
        ep.camera = geo::top_down_camera(layout.camera_eye, layout.focal, layout.image_size, layout.image_size);
        ep.objects = b.objects;
        ep.targets = b.targets;
        ep.segments_per_stream = b.segments;
        ep.regions = b.regions;
        ep.precedence = b.precedence;
        ep.frame_dt = opts.frame_dt;
        ep.frames = detail::play_script(ep.objects, b.motions, opts.frames, opts.path_noise, rng);
        for (const auto& m : b.motions) {
            const int arm = m.object == ep.targets[0] ? 0 : 1;
            ep.gripper_events.push_back({arm, true, m.f0});
            ep.gripper_events.push_back({arm, false, m.f1});
        }

        // Swept clearance between moving objects and everything else that can
        // collide. Fixtures and containers are exempt.
        auto exempt = [](const SceneObject& o) { return o.container || o.role == ObjectRole::fixture; };
        for (int t = 0; t < ep.num_frames() && ok; ++t) {
            for (std::size_t i = 0; i < ep.objects.size() && ok; ++i) {
                if (exempt(ep.objects[i])) {
                    continue;
                }
                const bool moving_i = t > 0 && !ep.frames[static_cast<std::size_t>(t)][i].position.isApprox(
                                                   ep.frames[static_cast<std::size_t>(t - 1)][i].position, 0.0);
                for (std::size_t j = 0; j < ep.objects.size() && ok; ++j) {
                    if (j == i || exempt(ep.objects[j])) {
                        continue;
                    }
                    const bool moving_j = t > 0 && !ep.frames[static_cast<std::size_t>(t)][j].position.isApprox(
                                                       ep.frames[static_cast<std::size_t>(t - 1)][j].position, 0.0);
                    if (!moving_i && !moving_j) {
                        continue;
                    }
                    const auto gap = geo::aabb_distance(ep.box_at(t, static_cast<int>(i)).world_aabb(),
                                                        ep.box_at(t, static_cast<int>(j)).world_aabb());
                    ok = gap >= opts.clearance;
                }
            }
        }
        if (ok) {
            return ep;
        }
    }
    throw PlacementError("could not place objects for " + to_string(task) + " after " +
                         std::to_string(opts.max_attempts) + " attempts");
}

} // namespace sfd::scene
