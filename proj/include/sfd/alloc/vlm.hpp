#pragma once

// Optional remote allocator. The request carries the overlay, the segments
// and the constraints; the reply is a slot ordering. Anything that fails to
// parse or breaks a schedule invariant is replaced by the branch-and-bound
// schedule, and the reason is kept for the run report.

#include <cstdlib>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfd/alloc/conflict.hpp"
#include "sfd/alloc/schedule.hpp"
#include "sfd/alloc/validate.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a _res macro that
// collides with Eigen parameter names.
#include <httplib.h>

namespace sfd::alloc {

struct VlmConfig {
    std::string endpoint; // empty: rule-based allocation only
    double timeout_s = 30.0;
};

// SFD_VLM_ENDPOINT, when set, replaces the configured endpoint.
inline VlmConfig with_env_override(VlmConfig cfg)
{
    if (const char* env = std::getenv("SFD_VLM_ENDPOINT"); env && *env) {
        cfg.endpoint = env;
    }
    return cfg;
}

struct VlmOutcome {
    Schedule schedule;
    bool accepted = false;  // true when the remote schedule was used as is
    std::string reason;     // why it was not
};

inline nlohmann::json vlm_request(const std::string& instruction, const std::string& overlay_svg,
                                  const std::vector<Segment>& segments, const Assignment& assignment,
                                  const Problem& problem)
{
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : segments) {
        nlohmann::json poly = nlohmann::json::array();
        for (const auto& p : s.waypoints) {
            poly.push_back({p.x(), p.y(), p.z()});
        }
        segs.push_back({{"id", s.id},
                        {"stream", s.stream},
                        {"arm", arm_of(s, assignment)},
                        {"polyline", poly},
                        {"duration_s", s.duration},
                        {"carry", s.carry}});
    }
    nlohmann::json prec = nlohmann::json::array();
    for (const auto& [b, a] : problem.precedence) {
        prec.push_back({b, a});
    }
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& [a, b] : problem.conflicts) {
        conf.push_back({a, b});
    }
    return {{"version", 1},          {"instruction", instruction}, {"overlay_svg", overlay_svg},
            {"segments", segs},      {"precedence", prec},         {"conflicts", conf}};
}

// Throws std::runtime_error with a readable reason on malformed replies.
inline Schedule parse_vlm_response(const std::string& body, const Problem& problem)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("response is not valid JSON");
    }
    if (!j.is_object() || !j.contains("version") || j["version"] != 1) {
        throw std::runtime_error("response has missing or unsupported version");
    }
    if (!j.contains("slots") || !j["slots"].is_array()) {
        throw std::runtime_error("response has no slots array");
    }
    Schedule s;
    for (const auto& slot : j["slots"]) {
        if (!slot.is_array() || slot.empty() || slot.size() > 2) {
            throw std::runtime_error("each slot must list one or two segment ids");
        }
        Slot out{kIdle, kIdle};
        for (const auto& v : slot) {
            if (!v.is_number_integer()) {
                throw std::runtime_error("segment ids must be integers");
            }
            const int id = v.get<int>();
            if (id < 0 || id >= static_cast<int>(problem.jobs.size())) {
                throw std::runtime_error("unknown segment id " + std::to_string(id));
            }
            const int arm = problem.jobs[static_cast<std::size_t>(id)].arm;
            if (out[static_cast<std::size_t>(arm)] != kIdle) {
                throw std::runtime_error("slot puts two segments on one arm");
            }
            out[static_cast<std::size_t>(arm)] = id;
        }
        s.slots.push_back(out);
    }
    return s;
}

inline VlmOutcome vlm_allocate(const VlmConfig& cfg, const nlohmann::json& request, const Problem& problem)
{
    VlmOutcome out;
    auto fall_back = [&](std::string reason) {
        out.schedule = schedule_bnb(problem);
        out.accepted = false;
        out.reason = std::move(reason);
        return out;
    };
    if (cfg.endpoint.empty()) {
        return fall_back("no endpoint configured");
    }
    // Split "http://host:port/path".
    const auto scheme_end = cfg.endpoint.find("://");
    const auto path_start = cfg.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = cfg.endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : cfg.endpoint.substr(path_start);

    httplib::Client cli(origin);
    if (!cli.is_valid()) {
        return fall_back("invalid endpoint " + cfg.endpoint);
    }
    const auto sec = static_cast<time_t>(cfg.timeout_s);
    const auto usec = static_cast<time_t>((cfg.timeout_s - static_cast<double>(sec)) * 1e6);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    const auto res = cli.Post(path, request.dump(), "application/json");
    if (!res) {
        return fall_back("transport error: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        return fall_back("HTTP status " + std::to_string(res->status));
    }
    try {
        out.schedule = parse_vlm_response(res->body, problem);
    } catch (const std::exception& e) {
        return fall_back(e.what());
    }
    if (const auto errors = validate_schedule(problem, out.schedule); !errors.empty()) {
        return fall_back("invalid schedule: " + errors.front());
    }
    out.accepted = true;
    return out;
}

} // namespace sfd::alloc
