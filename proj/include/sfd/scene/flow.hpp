#pragma once

// Ground-truth point tracks of the two target objects.
//
// A G×G grid is laid over each frame-0 box; every query point is anchored on
// the surface its pixel ray hits and then moves rigidly with that object.
// Channels are (u / W, v / H, visibility). Invisible samples keep the last
// visible position so the tensor stays dense.

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include "sfd/core/binary_io.hpp"
#include "sfd/scene/grounding.hpp"
#include "sfd/scene/render.hpp"

namespace sfd::scene {

struct FlowTensor {
    int frames = 0;
    int grid = 0;
    std::vector<float> data; // [3][frames][grid][grid]

    FlowTensor() = default;
    FlowTensor(int t, int g) : frames(t), grid(g), data(static_cast<std::size_t>(3 * t * g * g), 0.0f) {}

    std::size_t index(int c, int t, int i, int j) const
    {
        return ((static_cast<std::size_t>(c) * frames + t) * grid + i) * grid + j;
    }
    float& at(int c, int t, int i, int j) { return data[index(c, t, i, j)]; }
    float at(int c, int t, int i, int j) const { return data[index(c, t, i, j)]; }
    std::size_t size() const { return data.size(); }
    bool operator==(const FlowTensor&) const = default;
};

using FlowPair = std::array<FlowTensor, 2>;

// Query points of one stream, stored in the object frame.
struct QueryGrid {
    int object = -1;
    int grid = 0;
    std::vector<Vec3> local; // row-major over (i = v, j = u)

    Vec3 world(const EpisodeRecord& ep, int frame, std::size_t k) const
    {
        return ep.frames.at(static_cast<std::size_t>(frame)).at(static_cast<std::size_t>(object)).apply(local[k]);
    }
};

inline geo::Pixel grid_pixel(const BBox& box, int grid, int i, int j)
{
    return {box.u_min + (j + 0.5) / grid * box.width(), box.v_min + (i + 0.5) / grid * box.height()};
}

inline QueryGrid make_query_grid(const EpisodeRecord& ep, const BBox& box, int grid)
{
    if (grid < 2) {
        throw std::invalid_argument("flow grid size must be at least 2");
    }
    if (!(box.width() > 0.0) || !(box.height() > 0.0)) {
        throw std::invalid_argument("degenerate bounding box");
    }
    const double cu = 0.5 * (box.u_min + box.u_max);
    const double cv = 0.5 * (box.v_min + box.v_max);
    const auto center_hit = cast_ray(ep, 0, {cu, cv});
    if (!center_hit || center_hit->object < 0) {
        throw std::invalid_argument("bounding box does not cover an object");
    }
    QueryGrid q;
    q.object = center_hit->object;
    q.grid = grid;
    const auto& pose = ep.frames.at(0).at(static_cast<std::size_t>(q.object));
    const auto& obj = ep.objects[static_cast<std::size_t>(q.object)];
    // Anchor on the plane of the object's top face.
    const Vec3 normal = pose.rotation.col(2);
    const Vec3 on_plane = pose.apply(obj.grasp_local());
    const Vec3 origin = ep.camera.center();
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            const Vec3 dir = ep.camera.ray_direction(grid_pixel(box, grid, i, j));
            const double denom = normal.dot(dir);
            if (std::abs(denom) < 1e-12) {
                throw geo::GeometryError("query ray parallel to the object's top face");
            }
            const double s = normal.dot(on_plane - origin) / denom;
            q.local.push_back(pose.to_local(origin + s * dir));
        }
    }
    return q;
}

inline FlowTensor track_grid(const EpisodeRecord& ep, const QueryGrid& q)
{
    const int frames = ep.num_frames();
    const int g = q.grid;
    FlowTensor f(frames, g);
    const auto w = static_cast<double>(ep.camera.width);
    const auto h = static_cast<double>(ep.camera.height);
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            const auto k = static_cast<std::size_t>(i * g + j);
            float last_u = 0.0f;
            float last_v = 0.0f;
            for (int t = 0; t < frames; ++t) {
                const auto [px, depth] = ep.camera.project(q.world(ep, t, k));
                const bool visible = depth > 0.0 && ep.camera.in_image(px) && !ep.occluded(q.object, t);
                if (visible || t == 0) {
                    last_u = static_cast<float>(px.u / w);
                    last_v = static_cast<float>(px.v / h);
                }
                f.at(0, t, i, j) = last_u;
                f.at(1, t, i, j) = last_v;
                f.at(2, t, i, j) = visible ? 1.0f : 0.0f;
            }
        }
    }
    return f;
}

inline FlowPair track_flows(const EpisodeRecord& ep, const BBox& o1, const BBox& o2, int grid)
{
    return {track_grid(ep, make_query_grid(ep, o1, grid)), track_grid(ep, make_query_grid(ep, o2, grid))};
}

// "SFDF": magic, u32 version, u32 stream count (2), u32 T, u32 G, f32 data
// stream-major.
inline constexpr std::uint32_t kFlowVersion = 1;

inline void write_flows(std::ostream& os, const FlowPair& flows)
{
    if (flows[0].frames != flows[1].frames || flows[0].grid != flows[1].grid) {
        throw io::FormatError("flow streams must share T and G");
    }
    os.write("SFDF", 4);
    io::put_le<std::uint32_t>(os, kFlowVersion);
    io::put_le<std::uint32_t>(os, 2);
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(flows[0].frames));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(flows[0].grid));
    for (const auto& f : flows) {
        for (float v : f.data) {
            io::put_f32(os, v);
        }
    }
    if (!os) {
        throw io::FormatError("flow write failed");
    }
}

inline FlowPair read_flows(std::istream& is)
{
    io::expect_magic(is, "SFDF");
    if (const auto v = io::get_le<std::uint32_t>(is); v != kFlowVersion) {
        throw io::FormatError("unsupported flow version " + std::to_string(v));
    }
    if (io::get_le<std::uint32_t>(is) != 2) {
        throw io::FormatError("flow file must hold two streams");
    }
    const auto t = io::get_le<std::uint32_t>(is);
    const auto g = io::get_le<std::uint32_t>(is);
    if (t < 2 || g < 2 || t > 4096 || g > 1024) {
        throw io::FormatError("implausible flow dimensions");
    }
    FlowPair out{FlowTensor(static_cast<int>(t), static_cast<int>(g)), FlowTensor(static_cast<int>(t), static_cast<int>(g))};
    for (auto& f : out) {
        for (auto& v : f.data) {
            v = io::get_f32(is);
        }
    }
    return out;
}

inline void save_flows(const std::string& path, const FlowPair& flows)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw io::FormatError("cannot open " + path + " for writing");
    }
    write_flows(os, flows);
}

inline FlowPair load_flows(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw io::FormatError("cannot open flow file " + path);
    }
    return read_flows(is);
}

} // namespace sfd::scene
