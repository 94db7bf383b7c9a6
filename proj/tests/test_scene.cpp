#include <gtest/gtest.h>

#include <sstream>

#include "sfd/core/rng.hpp"
#include "sfd/scene/episode_io.hpp"
#include "sfd/scene/flow.hpp"
#include "sfd/scene/generate.hpp"
#include "sfd/scene/grounding.hpp"
#include "sfd/scene/render.hpp"

using namespace sfd::scene;
using sfd::geo::Pixel;
using sfd::geo::Pose;

namespace {

const Vec3 kEye{0.0, 0.375, 1.3};

// Single cube on the table under a top-down camera, holding still.
EpisodeRecord one_cube_episode(int frames, const Vec3& center = {0.1, 0.4, 0.025})
{
    EpisodeRecord ep;
    ep.camera = sfd::geo::top_down_camera(kEye, 64.0, 64, 64);
    SceneObject cube;
    cube.label = "cube";
    cube.color = "red";
    cube.position = center;
    cube.half_extents = Vec3::Constant(0.025);
    ep.objects = {cube};
    ep.frames.assign(static_cast<std::size_t>(frames), {Pose{center, Mat3::Identity()}});
    ep.targets = {0, 0};
    return ep;
}

bool boxes_overlap(const std::pair<Vec3, Vec3>& a, const std::pair<Vec3, Vec3>& b, double tol)
{
    for (int k = 0; k < 3; ++k) {
        if (a.second[k] <= b.first[k] + tol || b.second[k] <= a.first[k] + tol) {
            return false;
        }
    }
    return true;
}

// Marches along the pixel ray in 1e-4 m steps and refines the first hit by
// bisection.
double ray_march_depth(const EpisodeRecord& ep, int frame, const Pixel& px)
{
    const Vec3 o = ep.camera.center();
    const Vec3 d = ep.camera.ray_direction(px);
    auto solid = [&](double s) {
        const Vec3 p = o + s * d;
        if (p.z() <= 0.0) {
            return true;
        }
        for (int k = 0; k < static_cast<int>(ep.objects.size()); ++k) {
            if (ep.box_at(frame, k).contains(p)) {
                return true;
            }
        }
        return false;
    };
    double s = 0.0;
    while (!solid(s + 1e-4)) {
        s += 1e-4;
        if (s > 10.0) {
            return std::numeric_limits<double>::infinity();
        }
    }
    double lo = s;
    double hi = s + 1e-4;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (solid(mid) ? hi : lo) = mid;
    }
    return ep.camera.to_camera(o + hi * d).z();
}

} // namespace

TEST(Generate, SameSeedGivesIdenticalEpisode)
{
    const auto a = generate_episode(TaskTemplate::packing, 7);
    const auto b = generate_episode(TaskTemplate::packing, 7);
    EXPECT_EQ(episode_to_json(a).dump(), episode_to_json(b).dump());
    const auto c = generate_episode(TaskTemplate::packing, 8);
    EXPECT_NE(episode_to_json(a).dump(), episode_to_json(c).dump());
}

TEST(Generate, PotTaskOrdersLidOffItemInLidOn)
{
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
        const auto ep = generate_episode(TaskTemplate::put_into_pot, seed);
        ASSERT_EQ(ep.precedence.size(), 2u);
        const auto& lid_off = ep.precedence[0];
        const auto& lid_on = ep.precedence[1];
        EXPECT_EQ(lid_off.before, (SegmentRef{1, 0}));
        EXPECT_EQ(lid_off.after, (SegmentRef{2, 0}));
        EXPECT_EQ(lid_on.before, (SegmentRef{2, 0}));
        EXPECT_EQ(lid_on.after, (SegmentRef{1, 1}));
        EXPECT_EQ(ep.objects[static_cast<std::size_t>(ep.targets[0])].label, "lid");
    }
}

TEST(Generate, NoInitialOverlapsAcrossSeeds)
{
    for (auto task : kAllTasks) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto ep = generate_episode(task, seed);
            for (int i = 0; i < static_cast<int>(ep.objects.size()); ++i) {
                for (int j = i + 1; j < static_cast<int>(ep.objects.size()); ++j) {
                    EXPECT_FALSE(boxes_overlap(ep.box_at(0, i).world_aabb(), ep.box_at(0, j).world_aabb(), 1e-9))
                        << to_string(task) << " seed " << seed << " objects " << i << "," << j;
                }
            }
        }
    }
}

TEST(Generate, EpisodesAreWellFormed)
{
    constexpr double v_max = 0.5;
    for (auto task : kAllTasks) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto ep = generate_episode(task, seed);
            ASSERT_GE(ep.num_frames(), 2);
            int distractors = 0;
            for (const auto& o : ep.objects) {
                distractors += o.role == ObjectRole::distractor;
                EXPECT_TRUE((o.half_extents.array() > 0.0).all());
            }
            EXPECT_GE(distractors, 2);
            for (int t = 1; t < ep.num_frames(); ++t) {
                for (std::size_t o = 0; o < ep.objects.size(); ++o) {
                    const double step = (ep.frames[static_cast<std::size_t>(t)][o].position -
                                         ep.frames[static_cast<std::size_t>(t - 1)][o].position)
                                            .norm();
                    EXPECT_LE(step, v_max * ep.frame_dt);
                }
            }
            // Only the two targets move.
            for (int o = 0; o < static_cast<int>(ep.objects.size()); ++o) {
                if (o == ep.targets[0] || o == ep.targets[1]) {
                    continue;
                }
                EXPECT_TRUE(ep.frames.back()[static_cast<std::size_t>(o)].position.isApprox(
                    ep.frames.front()[static_cast<std::size_t>(o)].position, 0.0));
            }
        }
    }
}

TEST(Generate, CrowdedWorkspaceFails)
{
    GenerateOptions opts;
    opts.clearance = 0.5;
    opts.max_attempts = 20;
    EXPECT_THROW(generate_episode(TaskTemplate::packing, 1, opts), PlacementError);
}

TEST(Grounding, GeneratedInstructionsGroundToTargets)
{
    for (auto task : kAllTasks) {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto ep = generate_episode(task, seed);
            const auto ids = ground_objects(ep, ep.instruction);
            EXPECT_EQ(ids[0], ep.targets[0]) << ep.instruction;
            EXPECT_EQ(ids[1], ep.targets[1]) << ep.instruction;
        }
    }
}

TEST(Grounding, BoxMatchesAnalyticTopFaceProjection)
{
    const auto ep = generate_episode(TaskTemplate::packing, 3);
    const auto boxes = ground_instruction(ep, ep.instruction);
    for (int k = 0; k < 2; ++k) {
        const auto& o = ep.objects[static_cast<std::size_t>(ep.targets[static_cast<std::size_t>(k)])];
        const double depth = kEye.z() - (o.position.z() + o.half_extents.z());
        const double ex = std::abs(std::cos(o.yaw)) * o.half_extents.x() + std::abs(std::sin(o.yaw)) * o.half_extents.y();
        const double ey = std::abs(std::sin(o.yaw)) * o.half_extents.x() + std::abs(std::cos(o.yaw)) * o.half_extents.y();
        const double uc = 64.0 * (o.position.x() - kEye.x()) / depth + 32.0;
        const double vc = -64.0 * (o.position.y() - kEye.y()) / depth + 32.0;
        const auto& b = boxes[static_cast<std::size_t>(k)];
        EXPECT_NEAR(b.u_min, uc - 64.0 * ex / depth, 1e-9);
        EXPECT_NEAR(b.u_max, uc + 64.0 * ex / depth, 1e-9);
        EXPECT_NEAR(b.v_min, vc - 64.0 * ey / depth, 1e-9);
        EXPECT_NEAR(b.v_max, vc + 64.0 * ey / depth, 1e-9);
    }
}

TEST(Grounding, Errors)
{
    auto ep = generate_episode(TaskTemplate::packing, 5);
    const auto& t1 = ep.objects[static_cast<std::size_t>(ep.targets[0])];
    const auto& t2 = ep.objects[static_cast<std::size_t>(ep.targets[1])];
    const std::string absent_color = t1.color == "black" ? "white" : "black";
    // Absent pair: pick a (color, label) no object has.
    std::string phrase;
    for (const auto& c : color_words()) {
        const bool present = std::any_of(ep.objects.begin(), ep.objects.end(),
                                         [&](const SceneObject& o) { return o.color == c && o.label == "ball"; });
        if (!present) {
            phrase = c + " ball";
            break;
        }
    }
    EXPECT_THROW(ground_instruction(ep, "pack the " + phrase + " and the " + t2.color + " " + t2.label + " into the box"),
                 UnknownNoun);
    EXPECT_THROW(ground_instruction(ep, "pack the red gizmo and the blue cube into the box"), UnknownNoun);
    EXPECT_THROW(ground_instruction(ep, "yeet the " + t1.color + " " + t1.label), UnknownNoun);
    EXPECT_THROW(ground_instruction(ep, "pack the " + t1.color + " " + t1.label + " into the box"), GroundingError);

    auto twin = ep.objects[static_cast<std::size_t>(ep.targets[0])];
    twin.position.x() += 0.2;
    ep.objects.push_back(twin);
    for (auto& row : ep.frames) {
        row.push_back(Pose{twin.position, sfd::geo::rot_z(twin.yaw)});
    }
    EXPECT_THROW(ground_instruction(ep, ep.instruction), AmbiguousGrounding);
    (void)absent_color;
}

TEST(Render, TopDownTableDepthIsCameraHeight)
{
    const auto ep = one_cube_episode(2);
    for (double u : {1.0, 10.5, 50.0, 63.0}) {
        EXPECT_NEAR(render_depth(ep, 0, {u, 2.0}), kEye.z(), 1e-12);
    }
}

TEST(Render, BoxTopDepthIsHeightMinusBoxHeight)
{
    const auto ep = one_cube_episode(2);
    const auto [px, d] = ep.camera.project(ep.objects[0].position);
    (void)d;
    EXPECT_NEAR(render_depth(ep, 0, px), kEye.z() - 0.05, 1e-12);
}

TEST(Render, OutsideImageThrows)
{
    const auto ep = one_cube_episode(2);
    EXPECT_THROW(render_depth(ep, 0, {-1.0, 3.0}), sfd::geo::GeometryError);
}

TEST(Render, MatchesRayMarchingOracle)
{
    const auto ep = generate_episode(TaskTemplate::put_into_pot, 11);
    sfd::Rng rng(2024);
    for (int k = 0; k < 1000; ++k) {
        const int frame = static_cast<int>(rng.below(static_cast<std::uint64_t>(ep.num_frames())));
        const Pixel px{rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0)};
        EXPECT_NEAR(render_depth(ep, frame, px), ray_march_depth(ep, frame, px), 1e-6)
            << "pixel " << px.u << "," << px.v << " frame " << frame;
    }
}

TEST(Flow, StaticObjectGivesConstantTracks)
{
    const auto ep = one_cube_episode(6);
    const auto box = project_top_face(ep, 0);
    const auto f = track_grid(ep, make_query_grid(ep, box, 4));
    for (int t = 1; t < f.frames; ++t) {
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < 4; ++i) {
                for (int j = 0; j < 4; ++j) {
                    EXPECT_EQ(f.at(c, t, i, j), f.at(c, 0, i, j));
                }
            }
        }
    }
}

TEST(Flow, TranslationShiftsGridByImageDisplacement)
{
    auto ep = one_cube_episode(5);
    const double dx = 0.01;
    for (int t = 0; t < 5; ++t) {
        ep.frames[static_cast<std::size_t>(t)][0].position.x() += dx * t;
    }
    const double depth = kEye.z() - 0.05;
    const double du = 64.0 * dx / depth; // image shift per frame, pixels
    const auto f = track_grid(ep, make_query_grid(ep, project_top_face(ep, 0), 3));
    for (int t = 1; t < 5; ++t) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                EXPECT_NEAR(f.at(0, t, i, j) - f.at(0, t - 1, i, j), du / 64.0, 1e-6);
                EXPECT_NEAR(f.at(1, t, i, j) - f.at(1, t - 1, i, j), 0.0, 1e-6);
            }
        }
    }
}

TEST(Flow, ScriptedOcclusionZeroesVisibilityExactly)
{
    auto ep = one_cube_episode(14);
    for (int t = 0; t < 14; ++t) {
        ep.frames[static_cast<std::size_t>(t)][0].position.y() += 0.004 * t;
    }
    ep.occlusions.push_back({0, 5, 9});
    const auto f = track_grid(ep, make_query_grid(ep, project_top_face(ep, 0), 4));
    for (int t = 0; t < 14; ++t) {
        const bool hidden = t >= 5 && t <= 9;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                EXPECT_EQ(f.at(2, t, i, j), hidden ? 0.0f : 1.0f) << "frame " << t;
                if (hidden) {
                    EXPECT_EQ(f.at(0, t, i, j), f.at(0, 4, i, j));
                    EXPECT_EQ(f.at(1, t, i, j), f.at(1, 4, i, j));
                }
            }
        }
    }
}

TEST(Flow, ShapeRangeAndReprojection)
{
    for (auto task : kAllTasks) {
        const auto ep = generate_episode(task, 4);
        const auto boxes = ground_instruction(ep, ep.instruction);
        for (int s = 0; s < 2; ++s) {
            const auto q = make_query_grid(ep, boxes[static_cast<std::size_t>(s)], 8);
            EXPECT_EQ(q.object, ep.targets[static_cast<std::size_t>(s)]);
            const auto f = track_grid(ep, q);
            ASSERT_EQ(f.size(), static_cast<std::size_t>(3 * ep.num_frames() * 64));
            for (int t = 0; t < f.frames; ++t) {
                for (int i = 0; i < 8; ++i) {
                    for (int j = 0; j < 8; ++j) {
                        const float vis = f.at(2, t, i, j);
                        ASSERT_TRUE(vis == 0.0f || vis == 1.0f);
                        if (vis == 1.0f) {
                            EXPECT_GE(f.at(0, t, i, j), 0.0f);
                            EXPECT_LE(f.at(0, t, i, j), 1.0f);
                            EXPECT_GE(f.at(1, t, i, j), 0.0f);
                            EXPECT_LE(f.at(1, t, i, j), 1.0f);
                            const Vec3 c = ep.camera.to_camera(q.world(ep, t, static_cast<std::size_t>(i * 8 + j)));
                            EXPECT_NEAR(f.at(0, t, i, j), (64.0 * c.x() / c.z() + 32.0) / 64.0, 1e-6);
                            EXPECT_NEAR(f.at(1, t, i, j), (64.0 * c.y() / c.z() + 32.0) / 64.0, 1e-6);
                        }
                    }
                }
            }
        }
    }
}

TEST(Flow, FrameZeroAnchorsSitOnTopFacePlaneUnderTheirPixels)
{
    const auto ep = generate_episode(TaskTemplate::pouring, 9);
    const auto boxes = ground_instruction(ep, ep.instruction);
    const auto q = make_query_grid(ep, boxes[1], 8);
    const auto& o = ep.objects[static_cast<std::size_t>(q.object)];
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            const auto k = static_cast<std::size_t>(i * 8 + j);
            EXPECT_NEAR(q.local[k].z(), o.half_extents.z(), 1e-12);
            const auto [px, d] = ep.camera.project(q.world(ep, 0, k));
            (void)d;
            EXPECT_NEAR(px.u, boxes[1].u_min + (j + 0.5) / 8.0 * boxes[1].width(), 1e-9);
            EXPECT_NEAR(px.v, boxes[1].v_min + (i + 0.5) / 8.0 * boxes[1].height(), 1e-9);
        }
    }
}

TEST(Flow, DegenerateBoxRejected)
{
    const auto ep = one_cube_episode(3);
    BBox b = project_top_face(ep, 0);
    b.u_max = b.u_min;
    EXPECT_THROW(make_query_grid(ep, b, 8), std::invalid_argument);
    EXPECT_THROW(make_query_grid(ep, project_top_face(ep, 0), 1), std::invalid_argument);
}

TEST(FlowFile, RoundTripIsBitExact)
{
    const auto ep = generate_episode(TaskTemplate::drawer_place, 2);
    const auto boxes = ground_instruction(ep, ep.instruction);
    const auto flows = track_flows(ep, boxes[0], boxes[1], 8);
    std::stringstream ss;
    write_flows(ss, flows);
    EXPECT_EQ(ss.str().size(), 20u + 2u * flows[0].size() * 4u);
    const auto back = read_flows(ss);
    EXPECT_EQ(back[0], flows[0]);
    EXPECT_EQ(back[1], flows[1]);

    std::stringstream bad("SFDX0000");
    EXPECT_THROW(read_flows(bad), sfd::io::FormatError);
    std::string truncated = ss.str().substr(0, 100);
    std::stringstream tr(truncated);
    EXPECT_THROW(read_flows(tr), sfd::io::FormatError);
}

TEST(EpisodeFile, JsonRoundTripPreservesEverything)
{
    const auto ep = generate_episode(TaskTemplate::pouring, 21);
    const auto back = episode_from_json(nlohmann::json::parse(episode_to_json(ep).dump()));
    EXPECT_EQ(episode_to_json(back).dump(), episode_to_json(ep).dump());
    EXPECT_EQ(back.frames[17][1].rotation, ep.frames[17][1].rotation);
}
