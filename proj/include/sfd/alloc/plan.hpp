#pragma once

#include <vector>

#include "sfd/alloc/conflict.hpp"
#include "sfd/alloc/schedule.hpp"
#include "sfd/scene/episode.hpp"

namespace sfd::alloc {

inline int find_segment(const std::vector<Segment>& segments, const scene::SegmentRef& ref)
{
    for (const auto& s : segments) {
        if (s.stream == ref.stream && s.index == ref.index) {
            return s.id;
        }
    }
    throw std::invalid_argument("precedence names missing segment " + std::to_string(ref.stream) + "." +
                                std::to_string(ref.index));
}

// Within-stream order plus the task's cross-stream rules.
inline std::vector<std::pair<int, int>> build_precedence(const std::vector<Segment>& segments,
                                                         const std::vector<scene::PrecedenceRule>& rules)
{
    std::vector<std::pair<int, int>> out;
    for (const auto& a : segments) {
        for (const auto& b : segments) {
            if (a.stream == b.stream && b.index == a.index + 1) {
                out.emplace_back(a.id, b.id);
            }
        }
    }
    for (const auto& r : rules) {
        out.emplace_back(find_segment(segments, r.before), find_segment(segments, r.after));
    }
    return out;
}

inline Problem make_problem(const std::vector<Segment>& segments, const ConflictGraph& conflicts,
                            const std::vector<std::pair<int, int>>& precedence, const Assignment& assignment)
{
    Problem p;
    for (const auto& s : segments) {
        p.jobs.push_back({s.id, arm_of(s, assignment), s.duration});
    }
    for (const auto& e : conflicts.edges) {
        p.conflicts.emplace_back(e.a, e.b);
    }
    p.precedence = precedence;
    return p;
}

} // namespace sfd::alloc
