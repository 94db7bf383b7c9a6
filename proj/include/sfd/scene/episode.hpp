#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfd/scene/geometry.hpp"

namespace sfd::scene {

using geo::Mat3;
using geo::Vec3;

enum class TaskTemplate { put_into_pot, packing, pouring, drawer_place };

inline constexpr std::array<TaskTemplate, 4> kAllTasks = {TaskTemplate::put_into_pot, TaskTemplate::packing,
                                                          TaskTemplate::pouring, TaskTemplate::drawer_place};

inline std::string to_string(TaskTemplate t)
{
    switch (t) {
    case TaskTemplate::put_into_pot:
        return "put_into_pot";
    case TaskTemplate::packing:
        return "packing";
    case TaskTemplate::pouring:
        return "pouring";
    case TaskTemplate::drawer_place:
        return "drawer_place";
    }
    return "unknown";
}

inline TaskTemplate task_from_string(const std::string& s)
{
    for (auto t : kAllTasks) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw std::invalid_argument("unknown task template '" + s + "'");
}

enum class ObjectRole { target, fixture, distractor };

struct SceneObject {
    std::string label;
    std::string color;
    Vec3 position = Vec3::Zero(); // box center, meters
    double yaw = 0.0;
    Vec3 half_extents = Vec3::Constant(0.025);
    bool graspable = true;
    bool container = false; // released objects whose center lies over it ride along
    ObjectRole role = ObjectRole::distractor;

    // Grasp point in the object frame: center of the top face.
    Vec3 grasp_local() const { return {0.0, 0.0, half_extents.z()}; }
};

struct GripperEvent {
    int arm = 0; // 0 = left, 1 = right
    bool close = true;
    int frame = 0;
};

// Segment index within a stream (streams are 1 and 2).
struct SegmentRef {
    int stream = 1;
    int index = 0;
    bool operator==(const SegmentRef&) const = default;
};

struct PrecedenceRule {
    std::string role;
    SegmentRef before;
    SegmentRef after;
};

// Named axis-aligned region used by task goals.
struct Region {
    std::string name;
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    bool contains(const Vec3& p) const
    {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
};

// Frames [first, last] during which an object's tracks are flagged occluded.
struct Occlusion {
    int object = 0;
    int first = 0;
    int last = 0;
};

struct EpisodeRecord {
    int version = 1;
    TaskTemplate task = TaskTemplate::packing;
    std::uint64_t seed = 0;
    std::string instruction;
    geo::CameraModel camera;
    std::vector<SceneObject> objects;
    std::vector<std::vector<geo::Pose>> frames; // [frame][object]
    std::vector<GripperEvent> gripper_events;
    std::vector<PrecedenceRule> precedence;
    std::array<int, 2> targets{0, 1};             // object index of stream 1 and stream 2
    std::array<int, 2> segments_per_stream{1, 1}; // template-level segment counts
    std::vector<Region> regions;
    std::vector<Occlusion> occlusions;
    double frame_dt = 0.25;

    int num_frames() const { return static_cast<int>(frames.size()); }

    const Region& region(const std::string& name) const
    {
        for (const auto& r : regions) {
            if (r.name == name) {
                return r;
            }
        }
        throw std::out_of_range("episode has no region '" + name + "'");
    }

    geo::OrientedBox box_at(int frame, int object) const
    {
        return geo::OrientedBox{frames.at(static_cast<std::size_t>(frame)).at(static_cast<std::size_t>(object)),
                                objects.at(static_cast<std::size_t>(object)).half_extents};
    }

    bool occluded(int object, int frame) const
    {
        for (const auto& o : occlusions) {
            if (o.object == object && frame >= o.first && frame <= o.last) {
                return true;
            }
        }
        return false;
    }
};

// Fixed dual-arm workspace shared by the generator, allocator and simulator.
struct WorkspaceLayout {
    std::array<Vec3, 2> arm_base{Vec3{-0.5, 0.0, 0.2}, Vec3{0.5, 0.0, 0.2}};
    std::array<Vec3, 2> arm_home{Vec3{-0.4, 0.12, 0.25}, Vec3{0.4, 0.12, 0.25}};
    double reach = 0.9;
    Vec3 camera_eye{0.0, 0.375, 1.3};
    double focal = 64.0;
    int image_size = 64;
};

inline const WorkspaceLayout& default_layout()
{
    static const WorkspaceLayout layout;
    return layout;
}

} // namespace sfd::scene
