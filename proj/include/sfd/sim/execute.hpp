#pragma once

#include <functional>
#include <stdexcept>

#include <Eigen/Geometry>

#include "sfd/alloc/conflict.hpp"
#include "sfd/alloc/schedule.hpp"
#include "sfd/sim/world.hpp"

namespace sfd::sim {

struct ExecutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Keyframe {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
};

struct TimedAction {
    double t = 0.0;
    GripperAction action = GripperAction::none;
};

// Time-parameterized reference for one arm over one segment.
struct ArmPlan {
    std::vector<Keyframe> keys;
    std::vector<TimedAction> actions;

    double end() const { return keys.empty() ? 0.0 : keys.back().t; }

    Keyframe sample(double t) const
    {
        if (t <= keys.front().t) {
            return keys.front();
        }
        for (std::size_t k = 1; k < keys.size(); ++k) {
            if (t <= keys[k].t) {
                const auto& a = keys[k - 1];
                const auto& b = keys[k];
                const double s = b.t > a.t ? (t - a.t) / (b.t - a.t) : 1.0;
                const Eigen::Quaterniond qa(a.rotation);
                const Eigen::Quaterniond qb(b.rotation);
                return {t, a.position + s * (b.position - a.position), qa.slerp(s, qb).toRotationMatrix()};
            }
        }
        return keys.back();
    }
};

// Approach from home, close on the first waypoint when the segment carries,
// follow the waypoints on the demonstration's clock, open, and go home again.
inline ArmPlan plan_segment(const alloc::Segment& seg, const lift::Trajectory3D& tr, const ArmState& arm,
                            const Vec3& home, double speed)
{
    const int last = std::min(seg.end, static_cast<int>(tr.size()) - 1);
    if (seg.start < 0 || seg.start > last) {
        throw ExecutionError("segment " + std::to_string(seg.id) + " does not fit its trajectory");
    }
    ArmPlan plan;
    auto wp = [&](int k) { return tr.waypoints[static_cast<std::size_t>(k)]; };
    plan.keys.push_back({0.0, arm.gripper, arm.orientation});
    double t = (wp(seg.start).position - arm.gripper).norm() / speed;
    plan.keys.push_back({t, wp(seg.start).position, wp(seg.start).rotation()});
    if (seg.carry) {
        plan.actions.push_back({t, GripperAction::close});
    }
    const double t0 = tr.timestamps[static_cast<std::size_t>(seg.start)];
    for (int k = seg.start + 1; k <= last; ++k) {
        plan.keys.push_back({t + tr.timestamps[static_cast<std::size_t>(k)] - t0, wp(k).position, wp(k).rotation()});
    }
    t = plan.keys.back().t;
    if (seg.carry) {
        plan.actions.push_back({t, GripperAction::open});
    }
    plan.keys.push_back({t + (home - wp(last).position).norm() / speed, home, wp(last).rotation()});
    return plan;
}

struct ExecutionResult {
    long ticks = 0;
    double duration = 0.0; // seconds of simulated time
};

using TickObserver = std::function<void(const World&)>;

namespace detail {

struct Runner {
    const ArmPlan* plan = nullptr;
    double clock = 0.0;
    std::size_t next_action = 0;
    Keyframe goal;

    bool done(const ArmState& arm) const
    {
        return !plan || (next_action == plan->actions.size() && clock >= plan->end() &&
                         (arm.gripper - goal.position).norm() < 1e-12);
    }
};

inline bool at(const ArmState& arm, const Keyframe& k)
{
    return (arm.gripper - k.position).norm() < 1e-12 && geo::rotation_distance(arm.orientation, k.rotation) < 1e-6;
}

} // namespace detail

// Runs plans side by side until every arm has finished. Gripper actions wait
// for the arm to sit exactly on the planned pose.
inline long run_plans(World& w, const std::array<const ArmPlan*, 2>& plans, const TickObserver& observe = {},
                      long max_ticks = 1000000)
{
    std::array<detail::Runner, 2> run;
    for (std::size_t a = 0; a < 2; ++a) {
        run[a].plan = plans[a];
        if (plans[a]) {
            run[a].goal = plans[a]->keys.front();
        }
    }
    long ticks = 0;
    while (!(run[0].done(w.arms[0]) && run[1].done(w.arms[1]))) {
        if (++ticks > max_ticks) {
            throw ExecutionError("plan did not finish within the tick budget");
        }
        std::array<ArmCommand, 2> cmd;
        for (std::size_t a = 0; a < 2; ++a) {
            auto& r = run[a];
            if (!r.plan) {
                continue;
            }
            double next = r.clock + w.cfg.dt;
            if (r.next_action < r.plan->actions.size()) {
                const auto& act = r.plan->actions[r.next_action];
                if (act.t <= next) {
                    next = act.t;
                    const auto k = r.plan->sample(act.t);
                    if (detail::at(w.arms[a], k)) {
                        cmd[a].action = act.action;
                        ++r.next_action;
                    }
                }
            }
            r.clock = std::max(r.clock, next);
            r.goal = r.plan->sample(r.clock);
            cmd[a].target = r.goal.position;
            cmd[a].orientation = r.goal.rotation;
        }
        step(w, cmd, w.cfg.dt);
        if (observe) {
            observe(w);
        }
    }
    return ticks;
}

// trajectories[s] belongs to stream s + 1.
inline ExecutionResult execute_schedule(World& w, const alloc::Schedule& schedule,
                                        const std::vector<alloc::Segment>& segments,
                                        const std::array<const lift::Trajectory3D*, 2>& trajectories,
                                        const alloc::Assignment& assignment,
                                        const scene::WorkspaceLayout& layout = scene::default_layout(),
                                        const alloc::ArmMotion& motion = {}, const TickObserver& observe = {})
{
    auto find = [&](int id) -> const alloc::Segment& {
        for (const auto& s : segments) {
            if (s.id == id) {
                return s;
            }
        }
        throw ExecutionError("schedule references unknown segment " + std::to_string(id));
    };
    ExecutionResult res;
    for (std::size_t k = 0; k < schedule.slots.size(); ++k) {
        std::array<ArmPlan, 2> plans;
        std::array<const ArmPlan*, 2> active{nullptr, nullptr};
        nlohmann::json ids = nlohmann::json::array();
        for (std::size_t a = 0; a < 2; ++a) {
            const int id = schedule.slots[k][a];
            if (id == alloc::kIdle) {
                continue;
            }
            const auto& seg = find(id);
            if (alloc::arm_of(seg, assignment) != static_cast<int>(a)) {
                throw ExecutionError("segment " + std::to_string(id) + " placed on the wrong arm");
            }
            const auto* tr = trajectories.at(static_cast<std::size_t>(seg.stream - 1));
            if (!tr) {
                throw ExecutionError("missing trajectory for stream " + std::to_string(seg.stream));
            }
            plans[a] = plan_segment(seg, *tr, w.arms[a], layout.arm_home[a], motion.speed);
            active[a] = &plans[a];
            ids.push_back(id);
        }
        w.log("slot_start", {{"slot", k}, {"segments", ids}});
        res.ticks += run_plans(w, active, observe);
        w.log("slot_end", {{"slot", k}});
    }
    res.duration = static_cast<double>(res.ticks) * w.cfg.dt;
    return res;
}

} // namespace sfd::sim
