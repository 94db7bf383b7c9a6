#pragma once

// Exact lexicon grounding: every "<color> <label>" phrase in the instruction
// must name exactly one object of the scene. The first phrase is stream 1.

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sfd/scene/episode.hpp"
#include "sfd/scene/generate.hpp"

namespace sfd::scene {

struct GroundingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnknownNoun : GroundingError {
    using GroundingError::GroundingError;
};

struct AmbiguousGrounding : GroundingError {
    using GroundingError::GroundingError;
};

// Pixel-space box (u_min, v_min, u_max, v_max).
struct BBox {
    double u_min = 0.0;
    double v_min = 0.0;
    double u_max = 0.0;
    double v_max = 0.0;

    double width() const { return u_max - u_min; }
    double height() const { return v_max - v_min; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
    std::array<double, 4> as_array() const { return {u_min, v_min, u_max, v_max}; }
};

// Projected top face of an object at a frame.
inline BBox project_top_face(const EpisodeRecord& ep, int object, int frame = 0)
{
    const auto& obj = ep.objects.at(static_cast<std::size_t>(object));
    const auto& pose = ep.frames.at(static_cast<std::size_t>(frame)).at(static_cast<std::size_t>(object));
    BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    const Vec3& h = obj.half_extents;
    for (int i = 0; i < 4; ++i) {
        const Vec3 local{(i & 1 ? 1 : -1) * h.x(), (i & 2 ? 1 : -1) * h.y(), h.z()};
        const auto [px, depth] = ep.camera.project(pose.apply(local));
        (void)depth;
        b.u_min = std::min(b.u_min, px.u);
        b.v_min = std::min(b.v_min, px.v);
        b.u_max = std::max(b.u_max, px.u);
        b.v_max = std::max(b.v_max, px.v);
    }
    return b;
}

struct GroundingLexicon {
    std::set<std::string> colors;
    std::set<std::string> labels;
    std::set<std::string> function_words;

    static const GroundingLexicon& standard()
    {
        static const GroundingLexicon lex{
            {color_words().begin(), color_words().end()},
            {object_labels().begin(), object_labels().end()},
            {"a", "an", "the", "and", "then", "it", "into", "in", "inside", "onto", "on", "off", "to", "back",
             "middle", "pack", "take", "put", "move", "pour", "open", "place", "close", "pick", "up"}};
        return lex;
    }
};

inline std::vector<std::string> tokenize(const std::string& text)
{
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) {
        cleaned.push_back(std::isalpha(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : ' ');
    }
    std::istringstream is(cleaned);
    std::vector<std::string> words;
    for (std::string w; is >> w;) {
        words.push_back(w);
    }
    return words;
}

// (color, label) phrases in order of appearance.
inline std::vector<std::pair<std::string, std::string>> extract_phrases(const std::string& instruction,
                                                                        const GroundingLexicon& lex)
{
    const auto words = tokenize(instruction);
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto& w = words[i];
        if (lex.colors.contains(w)) {
            if (i + 1 >= words.size() || !lex.labels.contains(words[i + 1])) {
                throw UnknownNoun("'" + w + "' is not followed by a known object noun");
            }
            out.emplace_back(w, words[i + 1]);
            ++i;
        } else if (!lex.labels.contains(w) && !lex.function_words.contains(w)) {
            throw UnknownNoun("unknown word '" + w + "'");
        }
    }
    return out;
}

// Object indices named by the instruction, stream 1 first.
inline std::array<int, 2> ground_objects(const EpisodeRecord& ep, const std::string& instruction,
                                         const GroundingLexicon& lex = GroundingLexicon::standard())
{
    const auto phrases = extract_phrases(instruction, lex);
    if (phrases.size() != 2) {
        throw GroundingError("instruction must name exactly two objects, found " + std::to_string(phrases.size()));
    }
    std::array<int, 2> ids{-1, -1};
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& [color, label] = phrases[k];
        for (std::size_t o = 0; o < ep.objects.size(); ++o) {
            if (ep.objects[o].color == color && ep.objects[o].label == label) {
                if (ids[k] >= 0) {
                    throw AmbiguousGrounding("'" + color + " " + label + "' matches more than one object");
                }
                ids[k] = static_cast<int>(o);
            }
        }
        if (ids[k] < 0) {
            throw UnknownNoun("no " + color + " " + label + " in the scene");
        }
    }
    if (ids[0] == ids[1]) {
        throw AmbiguousGrounding("both phrases name the same object");
    }
    return ids;
}

inline std::array<BBox, 2> ground_instruction(const EpisodeRecord& ep, const std::string& instruction)
{
    const auto ids = ground_objects(ep, instruction);
    return {project_top_face(ep, ids[0]), project_top_face(ep, ids[1])};
}

} // namespace sfd::scene
