#pragma once

// Sub-trajectories drawn over the first frame, one color and number each.

#include <cstdio>
#include <string>
#include <vector>

#include "sfd/alloc/conflict.hpp"
#include "sfd/scene/grounding.hpp"

namespace sfd::alloc {

struct OverlayScene {
    geo::CameraModel camera;
    std::vector<scene::BBox> objects; // frame-0 footprints in pixels
    int scale = 8;                    // SVG units per pixel
};

inline OverlayScene overlay_scene(const scene::EpisodeRecord& ep)
{
    OverlayScene s;
    s.camera = ep.camera;
    for (int o = 0; o < static_cast<int>(ep.objects.size()); ++o) {
        s.objects.push_back(scene::project_top_face(ep, o));
    }
    return s;
}

inline const std::vector<std::string>& overlay_palette()
{
    static const std::vector<std::string> p = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4",
                                               "#f032e6", "#bfef45", "#469990", "#9a6324", "#800000", "#000075"};
    return p;
}

namespace detail {

inline std::string fmt2(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

inline std::string render_overlay(const OverlayScene& scene, const std::vector<Segment>& segments,
                                  const Assignment& assignment)
{
    using detail::fmt2;
    const double k = scene.scale;
    const int w = scene.camera.width * scene.scale;
    const int h = scene.camera.height * scene.scale;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h + 40) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h + 40) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
           "\" fill=\"#f4f1ea\"/>\n";
    for (const auto& b : scene.objects) {
        svg += "<rect x=\"" + fmt2(b.u_min * k) + "\" y=\"" + fmt2(b.v_min * k) + "\" width=\"" + fmt2(b.width() * k) +
               "\" height=\"" + fmt2(b.height() * k) + "\" fill=\"#c8c8c8\" stroke=\"#888\"/>\n";
    }
    const auto& palette = overlay_palette();
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        const auto& color = palette[i % palette.size()];
        std::string pts;
        for (const auto& p : s.waypoints) {
            const auto [px, d] = scene.camera.project(p);
            (void)d;
            pts += (pts.empty() ? "" : " ") + fmt2(px.u * k) + "," + fmt2(px.v * k);
        }
        svg += "<polyline class=\"segment\" data-id=\"" + std::to_string(s.id) + "\" points=\"" + pts +
               "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"4\"/>\n";
        const auto mid = s.waypoints.empty() ? Vec3::Zero().eval() : s.waypoints[s.waypoints.size() / 2];
        const auto [mp, md] = scene.camera.project(mid);
        (void)md;
        svg += "<text class=\"label\" x=\"" + fmt2(mp.u * k + 6) + "\" y=\"" + fmt2(mp.v * k - 6) +
               "\" font-size=\"20\" fill=\"" + color + "\">" + std::to_string(s.id) + "</text>\n";
    }
    svg += "<text x=\"8\" y=\"" + std::to_string(h + 26) + "\" font-size=\"16\">stream 1: arm " +
           std::string(assignment[0] == 0 ? "left" : "right") + ", stream 2: arm " +
           std::string(assignment[1] == 0 ? "left" : "right") + "</text>\n";
    svg += "</svg>\n";
    return svg;
}

} // namespace sfd::alloc
