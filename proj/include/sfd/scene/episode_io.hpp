#pragma once

// One episode per JSON line.

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfd/scene/episode.hpp"

namespace sfd::scene {

using nlohmann::json;

namespace detail {

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const json& j)
{
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument("expected a 3-vector");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json mat_json(const Mat3& m)
{
    json rows = json::array();
    for (int r = 0; r < 3; ++r) {
        rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
    }
    return rows;
}

inline Mat3 json_mat(const json& j)
{
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument("expected a 3x3 matrix");
    }
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
        m.row(r) = json_vec(j[static_cast<std::size_t>(r)]).transpose();
    }
    return m;
}

inline std::string role_name(ObjectRole r)
{
    switch (r) {
    case ObjectRole::target:
        return "target";
    case ObjectRole::fixture:
        return "fixture";
    case ObjectRole::distractor:
        return "distractor";
    }
    return "distractor";
}

inline ObjectRole role_from(const std::string& s)
{
    if (s == "target") {
        return ObjectRole::target;
    }
    if (s == "fixture") {
        return ObjectRole::fixture;
    }
    if (s == "distractor") {
        return ObjectRole::distractor;
    }
    throw std::invalid_argument("unknown object role '" + s + "'");
}

} // namespace detail

inline json episode_to_json(const EpisodeRecord& ep)
{
    using namespace detail;
    json j;
    j["version"] = ep.version;
    j["task"] = to_string(ep.task);
    j["seed"] = ep.seed;
    j["instruction"] = ep.instruction;
    Mat3 k = Mat3::Identity();
    k(0, 0) = ep.camera.fx;
    k(1, 1) = ep.camera.fy;
    k(0, 2) = ep.camera.cx;
    k(1, 2) = ep.camera.cy;
    j["camera"] = {{"K", mat_json(k)},
                   {"R", mat_json(ep.camera.rotation)},
                   {"t", vec_json(ep.camera.translation)},
                   {"w", ep.camera.width},
                   {"h", ep.camera.height}};
    json objects = json::array();
    for (const auto& o : ep.objects) {
        objects.push_back({{"label", o.label},
                           {"color", o.color},
                           {"position", vec_json(o.position)},
                           {"yaw", o.yaw},
                           {"half_extents", vec_json(o.half_extents)},
                           {"graspable", o.graspable},
                           {"container", o.container},
                           {"role", role_name(o.role)}});
    }
    j["objects"] = objects;
    json frames = json::array();
    for (const auto& row : ep.frames) {
        json f = json::array();
        for (const auto& p : row) {
            f.push_back({{"p", vec_json(p.position)}, {"R", mat_json(p.rotation)}});
        }
        frames.push_back(f);
    }
    j["frames"] = frames;
    json events = json::array();
    for (const auto& e : ep.gripper_events) {
        events.push_back({{"arm", e.arm}, {"close", e.close}, {"frame", e.frame}});
    }
    j["gripper_events"] = events;
    json prec = json::array();
    for (const auto& r : ep.precedence) {
        prec.push_back({{"role", r.role},
                        {"before", {r.before.stream, r.before.index}},
                        {"after", {r.after.stream, r.after.index}}});
    }
    j["precedence"] = prec;
    j["targets"] = ep.targets;
    j["segments_per_stream"] = ep.segments_per_stream;
    json regions = json::array();
    for (const auto& r : ep.regions) {
        regions.push_back({{"name", r.name}, {"min", vec_json(r.min)}, {"max", vec_json(r.max)}});
    }
    j["regions"] = regions;
    json occ = json::array();
    for (const auto& o : ep.occlusions) {
        occ.push_back({{"object", o.object}, {"first", o.first}, {"last", o.last}});
    }
    j["occlusions"] = occ;
    j["frame_dt"] = ep.frame_dt;
    return j;
}

inline EpisodeRecord episode_from_json(const json& j)
{
    using namespace detail;
    EpisodeRecord ep;
    ep.version = j.at("version").get<int>();
    if (ep.version != 1) {
        throw std::invalid_argument("unsupported episode version " + std::to_string(ep.version));
    }
    ep.task = task_from_string(j.at("task").get<std::string>());
    ep.seed = j.value("seed", std::uint64_t{0});
    ep.instruction = j.at("instruction").get<std::string>();
    const auto& cam = j.at("camera");
    const Mat3 k = json_mat(cam.at("K"));
    ep.camera.fx = k(0, 0);
    ep.camera.fy = k(1, 1);
    ep.camera.cx = k(0, 2);
    ep.camera.cy = k(1, 2);
    ep.camera.rotation = json_mat(cam.at("R"));
    ep.camera.translation = json_vec(cam.at("t"));
    ep.camera.width = cam.at("w").get<int>();
    ep.camera.height = cam.at("h").get<int>();
    ep.camera.validate();
    for (const auto& o : j.at("objects")) {
        SceneObject s;
        s.label = o.at("label").get<std::string>();
        s.color = o.at("color").get<std::string>();
        s.position = json_vec(o.at("position"));
        s.yaw = o.at("yaw").get<double>();
        s.half_extents = json_vec(o.at("half_extents"));
        if ((s.half_extents.array() <= 0.0).any()) {
            throw std::invalid_argument("object half extents must be positive");
        }
        s.graspable = o.value("graspable", true);
        s.container = o.value("container", false);
        s.role = role_from(o.value("role", std::string("distractor")));
        ep.objects.push_back(std::move(s));
    }
    for (const auto& f : j.at("frames")) {
        std::vector<geo::Pose> row;
        for (const auto& p : f) {
            row.push_back({json_vec(p.at("p")), json_mat(p.at("R"))});
        }
        if (row.size() != ep.objects.size()) {
            throw std::invalid_argument("frame pose count does not match object count");
        }
        ep.frames.push_back(std::move(row));
    }
    if (ep.frames.size() < 2) {
        throw std::invalid_argument("episode needs at least two frames");
    }
    for (const auto& e : j.at("gripper_events")) {
        ep.gripper_events.push_back({e.at("arm").get<int>(), e.at("close").get<bool>(), e.at("frame").get<int>()});
    }
    for (const auto& r : j.at("precedence")) {
        const auto b = r.at("before");
        const auto a = r.at("after");
        ep.precedence.push_back({r.at("role").get<std::string>(), {b[0].get<int>(), b[1].get<int>()},
                                 {a[0].get<int>(), a[1].get<int>()}});
    }
    ep.targets = j.at("targets").get<std::array<int, 2>>();
    ep.segments_per_stream = j.value("segments_per_stream", std::array<int, 2>{1, 1});
    for (const auto& r : j.value("regions", json::array())) {
        ep.regions.push_back({r.at("name").get<std::string>(), json_vec(r.at("min")), json_vec(r.at("max"))});
    }
    for (const auto& o : j.value("occlusions", json::array())) {
        ep.occlusions.push_back({o.at("object").get<int>(), o.at("first").get<int>(), o.at("last").get<int>()});
    }
    ep.frame_dt = j.value("frame_dt", 0.25);
    return ep;
}

inline void write_episodes(const std::string& path, const std::vector<EpisodeRecord>& episodes)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    for (const auto& ep : episodes) {
        os << episode_to_json(ep).dump() << '\n';
    }
}

inline std::vector<EpisodeRecord> read_episodes(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open episode file " + path);
    }
    std::vector<EpisodeRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(episode_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace sfd::scene
