#pragma once

#include <limits>
#include <optional>

#include "sfd/scene/episode.hpp"

namespace sfd::scene {

struct RayHit {
    int object = -1; // -1 for the table plane
    double s = 0.0;  // distance along the unit ray
    Vec3 point = Vec3::Zero();
};

// Nearest surface along the ray through a pixel: object boxes and the table
// plane z = 0. Empty when nothing is hit.
inline std::optional<RayHit> cast_ray(const EpisodeRecord& ep, int frame, const geo::Pixel& px)
{
    const Vec3 origin = ep.camera.center();
    const Vec3 dir = ep.camera.ray_direction(px);
    std::optional<RayHit> best;
    for (int o = 0; o < static_cast<int>(ep.objects.size()); ++o) {
        const double s = ep.box_at(frame, o).ray_entry(origin, dir);
        if (s > 0.0 && (!best || s < best->s)) {
            best = RayHit{o, s, origin + s * dir};
        }
    }
    if (dir.z() < 0.0 && origin.z() > 0.0) {
        const double s = -origin.z() / dir.z();
        if (!best || s < best->s) {
            best = RayHit{-1, s, origin + s * dir};
        }
    }
    return best;
}

// Depth of the table plane along the optical axis; the value returned when a
// ray hits nothing.
inline double background_depth(const geo::CameraModel& cam)
{
    const Vec3 axis = cam.rotation.transpose() * Vec3::UnitZ();
    const Vec3 c = cam.center();
    if (axis.z() >= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -c.z() / axis.z();
}

// Camera-frame depth of the first surface seen through a pixel.
inline double render_depth(const EpisodeRecord& ep, int frame, const geo::Pixel& px)
{
    if (!ep.camera.in_image(px)) {
        throw geo::GeometryError("render_depth: pixel outside image");
    }
    const auto hit = cast_ray(ep, frame, px);
    if (!hit) {
        return background_depth(ep.camera);
    }
    return ep.camera.to_camera(hit->point).z();
}

} // namespace sfd::scene
