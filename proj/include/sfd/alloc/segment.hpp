#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sfd/lift/trajectory.hpp"

namespace sfd::alloc {

using geo::Vec3;
using lift::Trajectory3D;

struct Segment {
    int id = 0;
    int stream = 1;
    int index = 0; // position within its stream
    int start = 0; // waypoint slice [start, end)
    int end = 0;
    double track_duration = 0.0; // seconds spent following the waypoints
    double duration = 0.0;       // seconds the arm is busy, including approach and retreat
    bool carry = false;
    std::vector<Vec3> waypoints; // slice positions plus the next slice's first point
    std::vector<Vec3> rpy;
};

struct SegmentConfig {
    double pause_speed = 0.01;   // m/s
    int pause_steps = 3;
    double turn_angle = std::numbers::pi / 3.0;
    double min_step = 1e-4;      // shorter steps carry no heading
    double carry_distance = 0.01;
    double carry_rotation = 0.05;
    int max_auto_segments = 6;
};

struct SegmentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Quantizes to 1/1024 s so sums of durations are exact in binary floating point.
inline double quantize_duration(double seconds) { return std::ceil(seconds * 1024.0) / 1024.0; }

struct Breakpoint {
    int index = 0; // waypoint at which a new segment starts
    double score = 0.0;
};

// Heading change at waypoint v, measured against the nearest neighbours at
// least min_step away so near-duplicate samples at a reversal still register.
inline double heading_change(const Trajectory3D& tr, int v, double min_step)
{
    const int p = static_cast<int>(tr.size());
    auto at = [&](int k) { return tr.waypoints[static_cast<std::size_t>(k)].position; };
    int a = v - 1;
    while (a >= 0 && (at(v) - at(a)).norm() < min_step) {
        --a;
    }
    int b = v + 1;
    while (b < p && (at(b) - at(v)).norm() < min_step) {
        ++b;
    }
    if (a < 0 || b >= p) {
        return 0.0;
    }
    const Vec3 h0 = at(v) - at(a);
    const Vec3 h1 = at(b) - at(v);
    return std::acos(std::clamp(h0.dot(h1) / (h0.norm() * h1.norm()), -1.0, 1.0));
}

// Candidate split points. A pause without rotation splits once at its middle;
// a run that only rotates splits at entry and exit. Turns sharper than the
// threshold split at the vertex. Pause scores (>= 2) always beat turn scores
// (<= 1).
inline std::vector<Breakpoint> detect_breakpoints(const Trajectory3D& tr, const SegmentConfig& cfg = {})
{
    const int p = static_cast<int>(tr.size());
    std::vector<Breakpoint> out;
    if (p < 3) {
        return out;
    }
    const int steps = p - 1;
    std::vector<double> dist(static_cast<std::size_t>(steps));
    std::vector<double> rot(static_cast<std::size_t>(steps));
    std::vector<bool> slow(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        const auto& a = tr.waypoints[static_cast<std::size_t>(k)];
        const auto& b = tr.waypoints[static_cast<std::size_t>(k + 1)];
        const double dt = tr.timestamps[static_cast<std::size_t>(k + 1)] - tr.timestamps[static_cast<std::size_t>(k)];
        dist[static_cast<std::size_t>(k)] = (b.position - a.position).norm();
        rot[static_cast<std::size_t>(k)] = geo::rotation_distance(a.rotation(), b.rotation());
        slow[static_cast<std::size_t>(k)] = dt > 0.0 && dist[static_cast<std::size_t>(k)] / dt < cfg.pause_speed;
    }

    std::vector<bool> in_pause(static_cast<std::size_t>(steps), false);
    for (int k = 0; k < steps;) {
        if (!slow[static_cast<std::size_t>(k)]) {
            ++k;
            continue;
        }
        int e = k;
        while (e < steps && slow[static_cast<std::size_t>(e)]) {
            ++e;
        }
        const int len = e - k; // steps k .. e-1
        if (len >= cfg.pause_steps) {
            double turned = 0.0;
            for (int m = k; m < e; ++m) {
                in_pause[static_cast<std::size_t>(m)] = true;
                turned += rot[static_cast<std::size_t>(m)];
            }
            const double score = 2.0 + len;
            if (turned > cfg.carry_rotation) {
                if (k > 0) {
                    out.push_back({k, score});
                }
                if (e < steps) {
                    out.push_back({e, score});
                }
            } else if (k > 0 && e < steps) {
                out.push_back({k + (len + 1) / 2, score});
            }
        }
        k = e;
    }

    for (int v = 1; v < steps; ++v) {
        const auto a = static_cast<std::size_t>(v - 1);
        const auto b = static_cast<std::size_t>(v);
        if (in_pause[a] || in_pause[b] || (v >= 2 && in_pause[a - 1]) || (v + 1 < steps && in_pause[b + 1])) {
            continue;
        }
        const double angle = heading_change(tr, v, cfg.min_step);
        if (angle > cfg.turn_angle) {
            out.push_back({v, angle / std::numbers::pi});
        }
    }

    // Neighbouring candidates describe one event; keep the stronger.
    std::sort(out.begin(), out.end(), [](const Breakpoint& x, const Breakpoint& y) { return x.index < y.index; });
    std::vector<Breakpoint> merged;
    for (const auto& b : out) {
        if (b.index <= 0 || b.index >= p) {
            continue;
        }
        if (!merged.empty() && b.index - merged.back().index <= 1) {
            if (b.score > merged.back().score) {
                merged.back() = b;
            }
            continue;
        }
        merged.push_back(b);
    }
    return merged;
}

// Splits a trajectory into contiguous slices. With an explicit count the
// strongest breakpoints win; weaker interior points fill in when too few were
// detected.
inline std::vector<Segment> segment_trajectory(const Trajectory3D& tr, std::optional<int> m = std::nullopt,
                                               const SegmentConfig& cfg = {})
{
    const int p = static_cast<int>(tr.size());
    if (p < 2 || tr.timestamps.size() != tr.waypoints.size()) {
        throw SegmentError("trajectory needs at least 2 waypoints with timestamps");
    }
    auto bps = detect_breakpoints(tr, cfg);
    int count = 0;
    if (m) {
        if (*m < 1 || *m > p - 1) {
            throw SegmentError("segment count must be within 1..P-1");
        }
        count = *m;
    } else {
        count = std::clamp(static_cast<int>(bps.size()) + 1, 1, cfg.max_auto_segments);
    }

    // Rank every interior index: detected breakpoints first, then by heading
    // change, then earliest.
    std::vector<Breakpoint> ranked = bps;
    for (int v = 1; v < p; ++v) {
        if (std::none_of(bps.begin(), bps.end(), [&](const Breakpoint& b) { return b.index == v; })) {
            const double turn = heading_change(tr, v, cfg.min_step);
            ranked.push_back({v, -1.0 + 0.1 * turn / std::numbers::pi});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Breakpoint& x, const Breakpoint& y) {
        return x.score != y.score ? x.score > y.score : x.index < y.index;
    });
    std::vector<int> cuts;
    for (int k = 0; k < count - 1; ++k) {
        cuts.push_back(ranked[static_cast<std::size_t>(k)].index);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.insert(cuts.begin(), 0);
    cuts.push_back(p);

    std::vector<Segment> out;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        Segment s;
        s.stream = tr.stream;
        s.index = static_cast<int>(k);
        s.start = cuts[k];
        s.end = cuts[k + 1];
        const int last = std::min(s.end, p - 1);
        s.track_duration = quantize_duration(tr.timestamps[static_cast<std::size_t>(last)] -
                                             tr.timestamps[static_cast<std::size_t>(s.start)]);
        s.duration = s.track_duration;
        const auto& w0 = tr.waypoints[static_cast<std::size_t>(s.start)];
        double moved = 0.0;
        double turned = 0.0;
        for (int i = s.start; i <= last; ++i) {
            const auto& w = tr.waypoints[static_cast<std::size_t>(i)];
            s.waypoints.push_back(w.position);
            s.rpy.push_back(w.rpy);
            moved = std::max(moved, (w.position - w0.position).norm());
            turned = std::max(turned, geo::rotation_distance(w0.rotation(), w.rotation()));
        }
        s.carry = moved > cfg.carry_distance || turned > cfg.carry_rotation;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace sfd::alloc
