#pragma once

// JSON form of an Allocation, so `allocate` and `execute` can run separately.

#include <fstream>

#include "sfd/pipeline/episode_run.hpp"
#include "sfd/scene/episode_io.hpp"

namespace sfd::pipeline {

inline constexpr int kPlanVersion = 1;

inline nlohmann::json segment_to_json(const alloc::Segment& s)
{
    using scene::detail::vec_json;
    nlohmann::json wp = nlohmann::json::array();
    nlohmann::json rpy = nlohmann::json::array();
    for (const auto& p : s.waypoints) {
        wp.push_back(vec_json(p));
    }
    for (const auto& r : s.rpy) {
        rpy.push_back(vec_json(r));
    }
    return {{"id", s.id},       {"stream", s.stream},
            {"index", s.index}, {"start", s.start},
            {"end", s.end},     {"track_duration", s.track_duration},
            {"duration", s.duration}, {"carry", s.carry},
            {"waypoints", wp},  {"rpy", rpy}};
}

inline alloc::Segment segment_from_json(const nlohmann::json& j)
{
    alloc::Segment s;
    s.id = j.at("id").get<int>();
    s.stream = j.at("stream").get<int>();
    s.index = j.at("index").get<int>();
    s.start = j.at("start").get<int>();
    s.end = j.at("end").get<int>();
    s.track_duration = j.at("track_duration").get<double>();
    s.duration = j.at("duration").get<double>();
    s.carry = j.at("carry").get<bool>();
    for (const auto& p : j.at("waypoints")) {
        s.waypoints.push_back(scene::detail::json_vec(p));
    }
    for (const auto& r : j.at("rpy")) {
        s.rpy.push_back(scene::detail::json_vec(r));
    }
    if (s.stream != 1 && s.stream != 2) {
        throw std::invalid_argument("segment stream must be 1 or 2");
    }
    return s;
}

inline nlohmann::json plan_to_json(const Allocation& a)
{
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : a.segments) {
        segs.push_back(segment_to_json(s));
    }
    nlohmann::json jobs = nlohmann::json::array();
    for (const auto& j : a.problem.jobs) {
        jobs.push_back({{"id", j.id}, {"arm", j.arm}, {"duration", j.duration}});
    }
    nlohmann::json pairs_c = nlohmann::json::array();
    for (const auto& [x, y] : a.problem.conflicts) {
        pairs_c.push_back({x, y});
    }
    nlohmann::json pairs_p = nlohmann::json::array();
    for (const auto& [x, y] : a.problem.precedence) {
        pairs_p.push_back({x, y});
    }
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& s : a.schedule.slots) {
        slots.push_back({s[0], s[1]});
    }
    return {{"version", kPlanVersion},
            {"assignment", {a.assignment[0], a.assignment[1]}},
            {"allocator", a.allocator},
            {"fallback", a.fallback ? nlohmann::json(*a.fallback) : nlohmann::json()},
            {"makespan", alloc::makespan(a.problem, a.schedule)},
            {"segments", segs},
            {"jobs", jobs},
            {"conflicts", pairs_c},
            {"precedence", pairs_p},
            {"slots", slots}};
}

inline Allocation plan_from_json(const nlohmann::json& j)
{
    if (j.at("version").get<int>() != kPlanVersion) {
        throw std::invalid_argument("unsupported plan version " + std::to_string(j.at("version").get<int>()));
    }
    Allocation a;
    a.assignment = j.at("assignment").get<alloc::Assignment>();
    a.allocator = j.at("allocator").get<std::string>();
    if (!j.at("fallback").is_null()) {
        a.fallback = j.at("fallback").get<std::string>();
    }
    for (const auto& s : j.at("segments")) {
        a.segments.push_back(segment_from_json(s));
    }
    for (const auto& x : j.at("jobs")) {
        a.problem.jobs.push_back({x.at("id").get<int>(), x.at("arm").get<int>(), x.at("duration").get<double>()});
    }
    a.problem.conflicts = j.at("conflicts").get<std::vector<std::pair<int, int>>>();
    a.problem.precedence = j.at("precedence").get<std::vector<std::pair<int, int>>>();
    for (const auto& s : j.at("slots")) {
        a.schedule.slots.push_back(s.get<alloc::Slot>());
    }
    return a;
}

inline void save_plan(const std::string& path, const Allocation& a)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    os << plan_to_json(a).dump(1) << '\n';
}

inline Allocation load_plan(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open plan file " + path);
    }
    return plan_from_json(nlohmann::json::parse(is));
}

} // namespace sfd::pipeline
