#pragma once

// Lift -> allocate -> execute -> evaluate for one episode, given the two
// object flows. Shared by the command-line tool and the test suites.

#include <optional>

#include "sfd/alloc/overlay.hpp"
#include "sfd/alloc/plan.hpp"
#include "sfd/alloc/vlm.hpp"
#include "sfd/lift/lift.hpp"
#include "sfd/scene/flow.hpp"
#include "sfd/sim/execute.hpp"
#include "sfd/sim/goal.hpp"

namespace sfd::pipeline {

enum class Mode { full, no_allocation, no_siamese };

inline std::string to_string(Mode m)
{
    switch (m) {
    case Mode::full:
        return "full";
    case Mode::no_allocation:
        return "no_allocation";
    case Mode::no_siamese:
        return "no_siamese";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s)
{
    for (Mode m : {Mode::full, Mode::no_allocation, Mode::no_siamese}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown mode '" + s + "'");
}

struct AllocParams {
    double d_safe = 0.1;
    int m_max = 6;
    alloc::VlmConfig vlm;
};

using TrajectoryPair = std::array<lift::Trajectory3D, 2>;

// Depth for predicted flows: the frame-0 top-face plane of each target.
inline TrajectoryPair lift_pair(const scene::EpisodeRecord& ep, const scene::FlowPair& flows, bool oracle_depth,
                                const lift::LiftConfig& cfg = {})
{
    const auto boxes = scene::ground_instruction(ep, ep.instruction);
    TrajectoryPair out;
    for (int s = 0; s < 2; ++s) {
        const auto& flow = flows[static_cast<std::size_t>(s)];
        lift::DepthSource depth;
        if (oracle_depth) {
            depth = lift::ground_truth_depth(ep, scene::make_query_grid(ep, boxes[static_cast<std::size_t>(s)], flow.grid));
        } else {
            const int obj = ep.targets[static_cast<std::size_t>(s)];
            const auto& o = ep.objects[static_cast<std::size_t>(obj)];
            const double top = ep.frames[0][static_cast<std::size_t>(obj)].position.z() + o.half_extents.z();
            depth = lift::plane_depth(ep.camera, top);
        }
        out[static_cast<std::size_t>(s)] = lift::lift_trajectory(flow, ep.camera, depth, cfg, s + 1);
    }
    return out;
}

inline scene::FlowPair oracle_flows(const scene::EpisodeRecord& ep, int grid = 8)
{
    const auto boxes = scene::ground_instruction(ep, ep.instruction);
    return {scene::track_grid(ep, scene::make_query_grid(ep, boxes[0], grid)),
            scene::track_grid(ep, scene::make_query_grid(ep, boxes[1], grid))};
}

struct Allocation {
    alloc::Assignment assignment{0, 1};
    std::vector<alloc::Segment> segments;
    alloc::Problem problem;
    alloc::Schedule schedule;
    std::string allocator = "bnb";
    std::optional<std::string> fallback; // set when a remote allocator was tried and rejected
};

// With simultaneous = true each stream becomes one segment and both run in a
// single slot, bypassing conflicts and precedence.
inline Allocation allocate(const scene::EpisodeRecord& ep, const TrajectoryPair& tr, const AllocParams& params,
                           bool simultaneous, const scene::WorkspaceLayout& layout = scene::default_layout())
{
    Allocation a;
    a.assignment = alloc::assign_arms({&tr[0], &tr[1]}, layout);
    alloc::SegmentConfig seg_cfg;
    seg_cfg.max_auto_segments = params.m_max;
    for (const auto& t : tr) {
        auto s = simultaneous ? alloc::segment_trajectory(t, 1, seg_cfg) : alloc::segment_trajectory(t, {}, seg_cfg);
        a.segments.insert(a.segments.end(), s.begin(), s.end());
    }
    alloc::finalize_segments(a.segments, a.assignment, layout);
    if (simultaneous) {
        alloc::Slot slot{alloc::kIdle, alloc::kIdle};
        for (const auto& s : a.segments) {
            slot[static_cast<std::size_t>(alloc::arm_of(s, a.assignment))] = s.id;
            a.problem.jobs.push_back({s.id, alloc::arm_of(s, a.assignment), s.duration});
        }
        a.schedule.slots.push_back(slot);
        a.allocator = "none";
        return a;
    }
    const auto graph = alloc::detect_conflicts(a.segments, params.d_safe, a.assignment, layout);
    a.problem = alloc::make_problem(a.segments, graph, alloc::build_precedence(a.segments, ep.precedence), a.assignment);
    if (params.vlm.endpoint.empty()) {
        a.schedule = alloc::schedule_bnb(a.problem);
        return a;
    }
    const auto svg = alloc::render_overlay(alloc::overlay_scene(ep), a.segments, a.assignment);
    const auto out = alloc::vlm_allocate(
        params.vlm, alloc::vlm_request(ep.instruction, svg, a.segments, a.assignment, a.problem), a.problem);
    a.schedule = out.schedule;
    a.allocator = out.accepted ? "vlm" : "bnb";
    if (!out.accepted) {
        a.fallback = out.reason;
    }
    return a;
}

struct EpisodeOutcome {
    scene::TaskTemplate task = scene::TaskTemplate::packing;
    std::uint64_t seed = 0;
    bool success = false;
    std::vector<std::string> reasons;
    int collisions = 0;
    double makespan = 0.0; // scheduled, seconds
    double sim_time = 0.0; // executed, seconds
    int slots = 0;
    std::string allocator;
    std::optional<std::string> fallback;
    std::vector<sim::Event> events;
};

inline EpisodeOutcome execute(const scene::EpisodeRecord& ep, const TrajectoryPair& tr, const Allocation& a,
                              const sim::SimConfig& sim_cfg = {})
{
    auto world = sim::make_world(ep, scene::default_layout(), sim_cfg);
    const auto res = sim::execute_schedule(world, a.schedule, a.segments, {&tr[0], &tr[1]}, a.assignment);
    const auto ev = sim::evaluate_task(world, world.events, sim::make_goal(ep));
    EpisodeOutcome o;
    o.task = ep.task;
    o.seed = ep.seed;
    o.success = ev.success;
    o.reasons = ev.reasons;
    for (const auto& e : world.events) {
        o.collisions += e.type == "collision" ? 1 : 0;
    }
    o.makespan = alloc::makespan(a.problem, a.schedule);
    o.sim_time = res.duration;
    o.slots = static_cast<int>(a.schedule.slots.size());
    o.allocator = a.allocator;
    o.fallback = a.fallback;
    o.events = std::move(world.events);
    return o;
}

inline EpisodeOutcome run_episode(const scene::EpisodeRecord& ep, const TrajectoryPair& tr, Mode mode,
                                  const AllocParams& params = {}, const sim::SimConfig& sim_cfg = {})
{
    return execute(ep, tr, allocate(ep, tr, params, mode == Mode::no_allocation), sim_cfg);
}

} // namespace sfd::pipeline
