#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sfd/core/gradcheck.hpp"
#include "sfd/net/sample.hpp"
#include "sfd/scene/generate.hpp"
#include "support/model_fixtures.hpp"

using namespace sfd;
using namespace sfd::net;
using ad::Tape;
using namespace sfd::testing;

namespace {

using TD = Tensor<double>;

std::array<std::optional<TD>, 2> random_initial(const NetConfig& c, Rng& rng)
{
    return {TD::randn({1, c.latent}, rng), TD::randn({1, c.latent}, rng)};
}

std::string checkpoint_bytes(SfdNet<float>& net)
{
    std::ostringstream os;
    ad::write_checkpoint(os, to_checkpoint(net));
    return os.str();
}

} // namespace

// ---- noise schedule and forward process -----------------------------------

TEST(NoiseSchedule, LinearEndpointsAndMonotoneAlphaBar)
{
    const auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    EXPECT_EQ(s.steps(), 100);
    EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
    EXPECT_DOUBLE_EQ(s.beta(100), 0.02);
    EXPECT_EQ(s.alpha_bar(0), 1.0);
    double prod = 1.0;
    for (int t = 1; t <= 100; ++t) {
        prod *= 1.0 - s.beta(t);
        EXPECT_NEAR(s.alpha_bar(t), prod, 1e-15);
        EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
    EXPECT_EQ(s.sigma(1), 0.0);
    EXPECT_NEAR(s.sigma(2), std::sqrt(s.beta(2) * (1 - s.alpha_bar(1)) / (1 - s.alpha_bar(2))), 1e-15);
    EXPECT_THROW(s.beta(0), std::out_of_range);
    EXPECT_THROW(s.beta(101), std::out_of_range);
    EXPECT_THROW(NoiseSchedule({0.5, 1.0}), std::invalid_argument);
    EXPECT_THROW(NoiseSchedule::linear(0, 1e-4, 0.02), std::invalid_argument);
}

TEST(Diffuse, ZeroNoiseLimitReturnsInput)
{
    Rng rng(1);
    const auto z0 = TD::randn({3, 4}, rng);
    const auto eps = TD::randn({3, 4}, rng);
    EXPECT_EQ(diffuse_with(NoiseSchedule::linear(10, 0.01, 0.1), z0, 0, eps), z0);
}

TEST(Diffuse, QuarterAlphaBarScalesNoise)
{
    const NoiseSchedule s({0.75});
    ASSERT_DOUBLE_EQ(s.alpha_bar(1), 0.25);
    Rng rng(2);
    const TD z0({2, 3}, 0.0);
    Rng copy = rng;
    const auto d = diffuse_forward(s, z0, 1, rng);
    const auto eps = TD::randn({2, 3}, copy);
    EXPECT_EQ(d.eps, eps);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        EXPECT_NEAR(d.zt[i], 0.8660254037844386 * eps[i], 1e-15);
    }
}

TEST(Diffuse, RejectsStepOutsideSchedule)
{
    Rng rng(3);
    const auto s = NoiseSchedule::linear(10, 0.01, 0.1);
    EXPECT_THROW(diffuse_forward(s, TD({1, 2}, 0.0), 0, rng), std::out_of_range);
    EXPECT_THROW(diffuse_forward(s, TD({1, 2}, 0.0), 11, rng), std::out_of_range);
}

TEST(Diffuse, MonteCarloVarianceMatchesClosedForm)
{
    const auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    const double var0 = 2.25;
    for (int t : {1, 25, 50, 75, 100}) {
        Rng rng(100 + static_cast<std::uint64_t>(t));
        double sum = 0.0, sq = 0.0;
        long n = 0;
        for (int k = 0; k < 10000; ++k) {
            const auto z0 = TD::randn({4, 16}, rng, std::sqrt(var0));
            const auto d = diffuse_forward(s, z0, t, rng);
            for (double v : d.zt.data()) {
                sum += v;
                sq += v * v;
                ++n;
            }
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        const double expect = s.alpha_bar(t) * var0 + (1.0 - s.alpha_bar(t));
        EXPECT_NEAR(var / expect, 1.0, 0.03) << "t = " << t;
    }
}

TEST(Reverse, TrueNoiseGivesPosteriorMean)
{
    const auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    Rng rng(4);
    for (int t : {2, 10, 50, 100}) {
        const auto z0 = TD::randn({5, 4}, rng);
        const auto d = diffuse_forward(s, z0, t, rng);
        const auto mean = reverse_mean(s, d.zt, t, d.eps);
        // q(z_{t-1} | z_t, z_0) mean
        const double ab = s.alpha_bar(t), ab1 = s.alpha_bar(t - 1);
        const double c0 = std::sqrt(ab1) * s.beta(t) / (1 - ab);
        const double ct = std::sqrt(s.alpha(t)) * (1 - ab1) / (1 - ab);
        for (std::size_t i = 0; i < z0.size(); ++i) {
            EXPECT_NEAR(mean[i], c0 * z0[i] + ct * d.zt[i], 1e-5);
        }
    }
}

TEST(Reverse, LastStepIsNoiseFree)
{
    const auto s = NoiseSchedule::linear(10, 0.01, 0.1);
    Rng a(5), b(6);
    const auto zt = TD::randn({2, 2}, a);
    const auto eps = TD::randn({2, 2}, a);
    EXPECT_EQ(reverse_step(s, zt, 1, eps, a), reverse_mean(s, zt, 1, eps));
    EXPECT_EQ(reverse_step(s, zt, 1, eps, b), reverse_mean(s, zt, 1, eps));
    EXPECT_NE(reverse_step(s, zt, 5, eps, b), reverse_mean(s, zt, 5, eps));
}

// ---- instruction encoder ---------------------------------------------------

TEST(Text, TokenizeLowercasesAndStripsPunctuation)
{
    EXPECT_EQ(tokenize("Open the RED drawer, place it"),
              (std::vector<std::string>{"open", "the", "red", "drawer", "place", "it"}));
    EXPECT_TRUE(tokenize("  ,, ").empty());
}

TEST(Text, UnknownWordsMapToReservedId)
{
    const auto& v = Vocabulary::standard();
    EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);
    EXPECT_NE(v.id("pack"), Vocabulary::kUnk);
    EXPECT_EQ(v.encode("pack zebra"), (std::vector<int>{v.id("pack"), Vocabulary::kUnk}));
    EXPECT_EQ(v.encode(""), std::vector<int>{Vocabulary::kUnk});
}

TEST(Text, GeneratedInstructionsAreFullyKnown)
{
    const auto& v = Vocabulary::standard();
    for (auto task : scene::kAllTasks) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto ep = scene::generate_episode(task, seed);
            for (int id : v.encode(ep.instruction)) {
                EXPECT_NE(id, Vocabulary::kUnk) << ep.instruction;
            }
        }
    }
}

TEST(Text, EmbeddingGathersTableRows)
{
    Rng rng(7);
    TextEncoder<double> enc("t", 5, 3, rng);
    Tape<double> tape;
    ad::Binder<double> bind(tape);
    const auto out = enc.forward(bind, {4, 0, 4}).value();
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(out.at(0, c), enc.table.value.at(4, c));
        EXPECT_EQ(out.at(1, c), enc.table.value.at(0, c));
        EXPECT_EQ(out.at(2, c), enc.table.value.at(4, c));
    }
}

// ---- VAE ---------------------------------------------------------------------

TEST(Vae, ZeroWeightsGiveBiasAsMean)
{
    Rng rng(8);
    Vae<double> vae("v", 12, 5, 3, rng);
    for (auto* p : std::vector<ad::Parameter<double>*>{&vae.enc.weight, &vae.enc.bias, &vae.enc_mu.weight}) {
        p->value = TD(p->value.shape(), 0.0);
    }
    vae.enc_mu.bias.value = TD({1, 3}, std::vector<double>{0.5, -1.0, 2.0});
    const auto d = vae_encode(vae, TD({1, 12}, 0.0), rng);
    EXPECT_EQ(d.mu, vae.enc_mu.bias.value);

    Vae<double> fresh("v", 12, 5, 3, rng);
    fresh.enc.weight.value = TD({5, 12}, 0.0);
    fresh.enc_mu.weight.value = TD({3, 5}, 0.0);
    EXPECT_EQ(vae_encode(fresh, TD({1, 12}, 0.0), rng).mu, TD({1, 3}, 0.0));
}

TEST(Vae, LogVarianceIsClampedSoSampleEqualsMean)
{
    Rng rng(9);
    Vae<double> vae("v", 12, 5, 3, rng);
    vae.enc_logvar.weight.value = TD({3, 5}, 0.0);
    vae.enc_logvar.bias.value = TD({1, 3}, -1e4);
    const auto frames = TD::uniform({4, 12}, rng, 0, 1);
    Rng draw(10), replay(10);
    const auto d = vae_encode(vae, frames, draw);
    for (std::size_t i = 0; i < d.z.size(); ++i) {
        EXPECT_EQ(d.logvar[i], -20.0);
        const double xi = replay.normal();
        EXPECT_NEAR(d.z[i] - d.mu[i], std::exp(-10.0) * xi, 1e-15);
        EXPECT_NEAR(d.z[i], d.mu[i], 5e-5 * std::max(1.0, std::abs(xi)));
    }
}

TEST(Vae, SeededEncodeIsDeterministic)
{
    Rng init(11);
    Vae<float> vae("v", 12, 5, 3, init);
    Rng data(12);
    const auto frames = Tensor<float>::uniform({3, 12}, data, 0, 1);
    Rng a(13), b(13);
    EXPECT_EQ(vae_encode(vae, frames, a).z, vae_encode(vae, frames, b).z);
}

TEST(Vae, DecodeShapeRangeAndSharing)
{
    Rng rng(14);
    const int g = 4;
    Vae<double> vae("v", 3 * g * g, 8, 3, rng);
    const auto z = TD::randn({5, 3}, rng, 3.0);
    const auto out = vae_decode(vae, z);
    ASSERT_EQ(out.shape(), (ad::Shape{5, 3 * g * g}));
    for (double v : out.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    const auto flow = rows_to_flow(out, g);
    EXPECT_EQ(flow.frames, 5);
    EXPECT_EQ(flow.grid, g);
    // Two streams decoding the same latent through the one decoder.
    EXPECT_EQ(vae_decode(vae, z), out);
    EXPECT_THROW(rows_to_flow(out, 3), ad::ShapeError);
}

TEST(Vae, RejectsNonFiniteInput)
{
    Rng rng(15);
    Vae<double> vae("v", 12, 5, 3, rng);
    TD bad({1, 12}, 0.0);
    bad[3] = std::nan("");
    EXPECT_THROW(vae_encode(vae, bad, rng), ad::NonFiniteError);
    TD zbad({1, 3}, 0.0);
    zbad[0] = INFINITY;
    EXPECT_THROW(vae_decode(vae, zbad), ad::NonFiniteError);
}

TEST(Vae, FrameRowsRoundTrip)
{
    Rng rng(16);
    const auto f = random_flow(3, 4, rng);
    const auto rows = frame_rows<float>(f);
    EXPECT_EQ(rows.shape(), (ad::Shape{3, 48}));
    EXPECT_EQ(rows.at(1, 16 + 2 * 4 + 3), f.at(1, 1, 2, 3));
    EXPECT_EQ(rows_to_flow(rows, 4), f);
}

TEST(Vae, LossGradientMatchesFiniteDifferences)
{
    Rng rng(17);
    Vae<double> vae("v", 12, 5, 3, rng);
    const auto frames = TD::uniform({4, 12}, rng, 0, 1);
    const auto xi = TD::randn({4, 3}, rng);
    std::vector<ad::Parameter<double>*> params;
    vae.collect(params);
    for (auto* p : params) {
        const auto res = ad::finite_diff_check<double>(
            [&](Tape<double>& tape, const ad::Var<double>& in) {
                ad::Binder<double> bind(tape);
                bind.override_with(*p, in);
                return vae_loss(bind, vae, tape.leaf(frames), xi, 1e-3);
            },
            p->value, 1e-4, 1e-6);
        EXPECT_TRUE(res.passed) << p->name << " rel err " << res.max_rel_error;
    }
}

// ---- attention ------------------------------------------------------------------

TEST(Attention, SingleContextTokenIgnoresQueries)
{
    Rng rng(18);
    Attention<double> att("a", 4, 3, 2, 2, rng);
    const auto y = TD::randn({1, 3}, rng);
    Tape<double> tape;
    ad::Binder<double> bind(tape);
    const auto out = att.forward(bind, tape.leaf(TD::randn({5, 4}, rng)), tape.leaf(y)).value();
    const auto expect =
        ad::lora_forward(bind, att.o, ad::lora_forward(bind, att.v, tape.leaf(y))).value();
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 4; ++c) {
            EXPECT_NEAR(out.at(r, c), expect.at(0, c), 1e-12);
        }
    }
}

TEST(Attention, ContextOrderDoesNotMatter)
{
    Rng rng(19);
    Attention<double> att("a", 4, 3, 2, 2, rng);
    const auto x = TD::randn({3, 4}, rng);
    const auto y = TD::randn({4, 3}, rng);
    TD yp(y.shape());
    const int perm[] = {2, 0, 3, 1};
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) {
            yp.at(r, c) = y.at(perm[r], c);
        }
    }
    Tape<double> tape;
    ad::Binder<double> bind(tape);
    const auto a = att.forward(bind, tape.leaf(x), tape.leaf(y)).value();
    const auto b = att.forward(bind, tape.leaf(x), tape.leaf(yp)).value();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], 1e-12);
    }
}

TEST(Attention, TwoTokenHandCase)
{
    Rng rng(20);
    Attention<double> att("a", 2, 2, 1, 1, rng);
    const TD eye({2, 2}, std::vector<double>{1, 0, 0, 1});
    for (auto* l : {&att.q, &att.k, &att.v, &att.o}) {
        l->base.value = eye;
        l->b.value = TD({2, 1}, 0.0);
    }
    const TD x({1, 2}, std::vector<double>{1, 0});
    const TD y({2, 2}, std::vector<double>{1, 0, 0, 1});
    Tape<double> tape;
    ad::Binder<double> bind(tape);
    const auto out = att.forward(bind, tape.leaf(x), tape.leaf(y)).value();
    // logits (1/sqrt 2, 0); softmax weights then mix the two context rows.
    const double e = std::exp(1.0 / std::sqrt(2.0));
    const double w1 = e / (e + 1.0);
    EXPECT_NEAR(w1, 0.6697615493266569, 1e-15);
    EXPECT_NEAR(out.at(0, 0), w1, 1e-15);
    EXPECT_NEAR(out.at(0, 1), 1.0 - w1, 1e-15);
}

TEST(Attention, SoftmaxRowsSumToOne)
{
    Rng rng(21);
    Attention<float> att("a", 16, 16, 2, 4, rng);
    Tape<float> tape;
    ad::Binder<float> bind(tape);
    const auto maps = att.weights(bind, tape.leaf(Tensor<float>::randn({32, 16}, rng, 3.0)),
                                  tape.leaf(Tensor<float>::randn({12, 16}, rng, 3.0)));
    ASSERT_EQ(maps.size(), 2u);
    for (const auto& m : maps) {
        for (int r = 0; r < m.rows(); ++r) {
            double s = 0.0;
            for (int c = 0; c < m.cols(); ++c) {
                s += m.value().at(r, c);
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(Attention, ShapeErrors)
{
    Rng rng(22);
    EXPECT_THROW(Attention<double>("a", 5, 3, 2, 2, rng), std::invalid_argument);
    Attention<double> att("a", 4, 3, 2, 2, rng);
    Tape<double> tape;
    ad::Binder<double> bind(tape);
    EXPECT_THROW(att.forward(bind, tape.leaf(TD({2, 3}, 0.0)), tape.leaf(TD({2, 3}, 0.0))), ad::ShapeError);
    EXPECT_THROW(att.forward(bind, tape.leaf(TD({2, 4}, 0.0)), tape.leaf(TD({2, 4}, 0.0))), ad::ShapeError);
}

// ---- denoiser -------------------------------------------------------------------

TEST(PredictNoise, StreamSwapSwapsOutputsExactly)
{
    const NetConfig c;
    SfdNet<float> net(c, 23);
    Rng rng(24);
    perturb_lora(net, rng);
    for (int trial = 0; trial < 100; ++trial) {
        const auto z1 = Tensor<float>::randn({c.frames, c.latent}, rng);
        const auto z2 = Tensor<float>::randn({c.frames, c.latent}, rng);
        const std::array<std::optional<Tensor<float>>, 2> ctx{Tensor<float>::randn({1, c.latent}, rng),
                                                              Tensor<float>::randn({1, c.latent}, rng)};
        const int t = 1 + static_cast<int>(rng.below(100));
        const std::vector<int> tokens{static_cast<int>(rng.below(30)), static_cast<int>(rng.below(30))};
        Tape<float> tape;
        ad::Binder<float> bind(tape, false);
        const auto a = net.predict_noise(bind, {tape.leaf(z1), tape.leaf(z2)}, t, tokens, ctx);
        const auto b = net.predict_noise(bind, {tape.leaf(z2), tape.leaf(z1)}, t, tokens, {ctx[1], ctx[0]});
        ASSERT_EQ(a[0].value(), b[1].value());
        ASSERT_EQ(a[1].value(), b[0].value());
        ASSERT_NE(a[0].value(), a[1].value());
    }
}

TEST(PredictNoise, UnsharedBranchesBreakSwapSymmetry)
{
    auto c = micro_config();
    c.shared = false;
    SfdNet<double> net(c, 25);
    ASSERT_EQ(net.branches.size(), 2u);
    EXPECT_EQ(net.branches[0].denoiser.head.weight.name, "s1.denoiser.head.weight");
    EXPECT_EQ(net.branches[1].vae.enc.weight.name, "s2.vae.enc.weight");
    EXPECT_NE(&net.branch(0).vae, &net.branch(1).vae);
    Rng rng(26);
    const auto z1 = TD::randn({c.frames, c.latent}, rng);
    const auto z2 = TD::randn({c.frames, c.latent}, rng);
    const auto ctx = random_initial(c, rng);
    Tape<double> tape;
    ad::Binder<double> bind(tape, false);
    const auto a = net.predict_noise(bind, {tape.leaf(z1), tape.leaf(z2)}, 3, {1}, ctx);
    const auto b = net.predict_noise(bind, {tape.leaf(z2), tape.leaf(z1)}, 3, {1}, {ctx[1], ctx[0]});
    EXPECT_NE(a[0].value(), b[1].value());
}

TEST(PredictNoise, ZeroHeadGivesZeroNoise)
{
    const auto c = micro_config();
    SfdNet<double> net(c, 27);
    net.branches[0].denoiser.head.weight.value = TD(net.branches[0].denoiser.head.weight.value.shape(), 0.0);
    EXPECT_EQ(net.branches[0].denoiser.head.bias.value, TD({1, c.latent}, 0.0));
    Rng rng(28);
    Tape<double> tape;
    ad::Binder<double> bind(tape, false);
    const auto out = net.predict_noise(bind,
                                       {tape.leaf(TD::randn({c.frames, c.latent}, rng)),
                                        tape.leaf(TD::randn({c.frames, c.latent}, rng))},
                                       4, {2, 5}, random_initial(c, rng));
    EXPECT_EQ(out[0].value(), TD({c.frames, c.latent}, 0.0));
    EXPECT_EQ(out[1].value(), TD({c.frames, c.latent}, 0.0));
}

TEST(PredictNoise, InputErrors)
{
    const auto c = micro_config();
    SfdNet<double> net(c, 29);
    Rng rng(30);
    Tape<double> tape;
    ad::Binder<double> bind(tape, false);
    const auto z = tape.leaf(TD::randn({c.frames, c.latent}, rng));
    auto ctx = random_initial(c, rng);
    ctx[1].reset();
    EXPECT_THROW(net.predict_noise(bind, {z, z}, 1, {1}, ctx), std::invalid_argument);
    EXPECT_THROW(net.predict_noise(bind, {z, tape.leaf(TD({3, c.latent}, 0.0))}, 1, {1}, random_initial(c, rng)),
                 ad::ShapeError);
    EXPECT_THROW(net.predict_noise(bind, {z, z}, 0, {1}, random_initial(c, rng)), std::out_of_range);
    EXPECT_THROW(net.predict_noise(bind, {z, z}, 1, {1}, {TD({1, 3}, 0.0), TD({1, 3}, 0.0)}), ad::ShapeError);
}

TEST(PredictNoise, SquaredOutputGradientWrtAttentionWeights)
{
    NetConfig c;
    SfdNet<double> net(c, 31);
    Rng rng(32);
    perturb_lora(net, rng);
    const auto z1 = TD::randn({c.frames, c.latent}, rng);
    const auto z2 = TD::randn({c.frames, c.latent}, rng);
    const auto ctx = random_initial(c, rng);
    const auto& blk = net.branches[0].denoiser.blocks[0];
    for (const auto* p : {&blk.cross_attn.q.base, &blk.cross_attn.k.base, &blk.self_attn.v.base, &blk.self_attn.o.b}) {
        const auto res = ad::finite_diff_check<double>(
            [&](Tape<double>& tape, const ad::Var<double>& in) {
                ad::Binder<double> bind(tape);
                bind.override_with(*p, in);
                const auto e = net.predict_noise(bind, {tape.leaf(z1), tape.leaf(z2)}, 17, {1, 4, 9}, ctx);
                return ad::add(ad::sum(ad::mul(e[0], e[0])), ad::sum(ad::mul(e[1], e[1])));
            },
            p->value, 1e-4, 1e-4);
        EXPECT_TRUE(res.passed) << p->name << " rel err " << res.max_rel_error;
    }
}

// ---- loss ------------------------------------------------------------------------

TEST(DiffusionLoss, ExactExamples)
{
    Rng rng(33);
    const std::array<TD, 2> eps{TD::randn({3, 4}, rng), TD::randn({3, 4}, rng)};
    Tape<double> tape;
    EXPECT_EQ(diffusion_loss(tape, eps, {tape.leaf(eps[0]), tape.leaf(eps[1])}).value().item(), 0.0);
    std::array<TD, 2> shifted = eps;
    for (auto& s : shifted) {
        for (auto& v : s.data()) {
            v += 1.0;
        }
    }
    EXPECT_NEAR(diffusion_loss(tape, eps, {tape.leaf(shifted[0]), tape.leaf(shifted[1])}).value().item(), 2.0,
                1e-12);
}

TEST(DiffusionLoss, MatchesDoubleLoop)
{
    Rng rng(34);
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 1 + static_cast<int>(rng.below(6)), cols = 1 + static_cast<int>(rng.below(6));
        const std::array<TD, 2> eps{TD::randn({rows, cols}, rng), TD::randn({rows, cols}, rng)};
        const std::array<TD, 2> hat{TD::randn({rows, cols}, rng), TD::randn({rows, cols}, rng)};
        double ref = 0.0;
        for (int s = 0; s < 2; ++s) {
            double acc = 0.0;
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    const double d = eps[s].at(r, c) - hat[s].at(r, c);
                    acc += d * d;
                }
            }
            ref += acc / (rows * cols);
        }
        Tape<double> tape;
        const double got = diffusion_loss(tape, eps, {tape.leaf(hat[0]), tape.leaf(hat[1])}).value().item();
        EXPECT_NEAR(got, ref, 1e-6);
        EXPECT_GE(got, 0.0);
    }
}

TEST(DiffusionLoss, ShapeMismatchThrows)
{
    Tape<double> tape;
    const std::array<TD, 2> eps{TD({2, 2}, 0.0), TD({2, 2}, 0.0)};
    EXPECT_THROW(diffusion_loss(tape, eps, {tape.leaf(TD({2, 2}, 0.0)), tape.leaf(TD({2, 3}, 0.0))}), ad::ShapeError);
    const std::array<TD, 2> uneven{TD({2, 2}, 0.0), TD({1, 2}, 0.0)};
    EXPECT_THROW(diffusion_loss(tape, uneven, {tape.leaf(TD({2, 2}, 0.0)), tape.leaf(TD({1, 2}, 0.0))}),
                 ad::ShapeError);
}

// Every trainable tensor of the diffusion stage on a two-frame model.
TEST(MicroModel, TrainingLossGradientMatchesFiniteDifferences)
{
    const auto r = micro_model_gradcheck(35);
    EXPECT_EQ(r.failed, 0) << "worst " << r.worst_name << " rel err " << r.worst;
    EXPECT_GT(r.checked, 40);
}

// ---- training ---------------------------------------------------------------------

namespace {

TrainConfig quick_train()
{
    TrainConfig t;
    t.vae_epochs = 2;
    t.vae_batch = 4;
    t.epochs = 3;
    t.log_every = 2;
    t.val_draws = 2;
    t.seed = 5;
    return t;
}

std::vector<Example> random_set(const NetConfig& c, int n, Rng& rng)
{
    std::vector<Example> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(random_example(c, rng));
    }
    return out;
}

} // namespace

TEST(Train, DefaultOptimizerSettings)
{
    const TrainConfig t;
    EXPECT_EQ(t.optimizer.lr, 1e-4);
    EXPECT_EQ(t.optimizer.weight_decay, 0.01);
    EXPECT_EQ(t.kl_weight, 1e-3);
    EXPECT_EQ(t.epochs, 300);
}

TEST(Train, SameSeedGivesIdenticalCheckpointBytes)
{
    const auto c = micro_config();
    Rng rng(37);
    const auto train = random_set(c, 6, rng);
    const auto val = random_set(c, 2, rng);
    std::string bytes[2];
    std::vector<LossRow> logs[2];
    for (int run = 0; run < 2; ++run) {
        SfdNet<float> net(c, 38);
        train_model(net, train, val, quick_train(), [&](const LossRow& r) { logs[run].push_back(r); });
        EXPECT_EQ(net.stages(), 2);
        bytes[run] = checkpoint_bytes(net);
    }
    EXPECT_EQ(bytes[0], bytes[1]);
    ASSERT_EQ(logs[0].size(), logs[1].size());
    bool saw_stage[3] = {false, false, false};
    for (std::size_t i = 0; i < logs[0].size(); ++i) {
        EXPECT_EQ(logs[0][i].train, logs[1][i].train);
        EXPECT_EQ(logs[0][i].val, logs[1][i].val);
        saw_stage[logs[0][i].stage] = true;
    }
    EXPECT_TRUE(saw_stage[1] && saw_stage[2]);

    SfdNet<float> other(c, 38);
    auto cfg = quick_train();
    cfg.seed = 6;
    train_model(other, train, val, cfg);
    EXPECT_NE(checkpoint_bytes(other), bytes[0]);
}

TEST(Train, VaeStageFreezesDuringDiffusion)
{
    const auto c = micro_config();
    Rng rng(39);
    const auto train = random_set(c, 4, rng);
    SfdNet<float> net(c, 40);
    auto cfg = quick_train();
    train_vae(net, train, {}, cfg);
    fit_latent_stats(net, train);
    net.trained_stages.value = Tensor<float>::scalar(1.0f);
    std::vector<Tensor<float>> before;
    for (auto* p : net.vae_parameters()) {
        before.push_back(p->value);
    }
    const auto head = net.branches[0].denoiser.head.weight.value;
    train_diffusion(net, train, {}, cfg);
    const auto after = net.vae_parameters();
    for (std::size_t i = 0; i < after.size(); ++i) {
        EXPECT_EQ(after[i]->value, before[i]) << after[i]->name;
    }
    EXPECT_NE(net.branches[0].denoiser.head.weight.value, head);
}

TEST(Train, LatentStatsNormalizeTrainingLatents)
{
    const auto c = micro_config();
    Rng rng(41);
    const auto train = random_set(c, 8, rng);
    SfdNet<double> net(c, 42);
    fit_latent_stats(net, train);
    double sum = 0.0, sq = 0.0;
    long n = 0;
    for (const auto& ex : train) {
        for (const auto& f : ex.flows) {
            const auto z = net.encode_latents(frame_rows<double>(f), 0);
            for (double v : z.data()) {
                sum += v;
                sq += v * v;
                ++n;
            }
        }
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-9);
    EXPECT_NEAR(sq / n, 1.0, 1e-9);
    // decode inverts the normalization
    const auto z = net.encode_latents(frame_rows<double>(train[0].flows[0]), 0);
    ad::Tape<double> tape;
    ad::Binder<double> bind(tape, false);
    const auto mu = net.branch(0).vae.encode(bind, tape.leaf(frame_rows<double>(train[0].flows[0]))).mu.value();
    const auto dec = net.decode_latents(z, 1);
    const auto direct = vae_decode(net.branch(1).vae, mu);
    for (std::size_t i = 0; i < dec.size(); ++i) {
        EXPECT_NEAR(dec[i], direct[i], 1e-12);
    }
}

TEST(Train, RejectsBadInputs)
{
    const auto c = micro_config();
    Rng rng(43);
    SfdNet<float> net(c, 44);
    EXPECT_THROW(train_model(net, {}, {}, quick_train()), TrainingError);
    auto wrong = random_set(c, 2, rng);
    wrong[1].flows[0] = random_flow(c.frames + 1, c.grid, rng);
    EXPECT_THROW(train_model(net, wrong, {}, quick_train()), TrainingError);
    EXPECT_THROW(train_diffusion(net, random_set(c, 2, rng), {}, quick_train()), TrainingError);
}

TEST(Train, DivergenceAbortsWithDiagnostic)
{
    const auto c = micro_config();
    Rng rng(45);
    SfdNet<float> net(c, 46);
    auto cfg = quick_train();
    cfg.vae_epochs = 50;
    cfg.vae_lr = 1e30;
    try {
        train_model(net, random_set(c, 4, rng), {}, cfg);
        FAIL() << "training with a huge learning rate should diverge";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos) << e.what();
    }
}

// ---- checkpoints and sampling ---------------------------------------------------

TEST(Checkpoint, RoundTripPreservesModel)
{
    for (bool shared : {true, false}) {
        auto c = micro_config();
        c.beta_first = 1e-4;
        c.beta_last = 0.02;
        c.shared = shared;
        Rng rng(47);
        SfdNet<float> net(c, 48);
        train_model(net, random_set(c, 3, rng), {}, quick_train());
        const auto loaded = from_checkpoint<float>(to_checkpoint(net));
        EXPECT_EQ(loaded.config, c);
        EXPECT_EQ(loaded.schedule.beta(1), 1e-4);
        EXPECT_EQ(loaded.branches.size(), shared ? 1u : 2u);
        auto copy = loaded;
        EXPECT_EQ(checkpoint_bytes(copy), checkpoint_bytes(net));

        std::array<scene::FlowTensor, 2> init{random_flow(1, c.grid, rng), random_flow(1, c.grid, rng)};
        std::array<Rng, 2> r1{Rng(1), Rng(2)}, r2{Rng(1), Rng(2)};
        EXPECT_EQ(sample_flows(net, {1, 2}, init, r1), sample_flows(loaded, {1, 2}, init, r2));
    }
}

TEST(Train, UnsharedBranchesTrainOnTheirOwnStream)
{
    auto c = micro_config();
    c.shared = false;
    Rng rng(54);
    auto data = random_set(c, 4, rng);
    SfdNet<float> a(c, 55), b(c, 55);
    auto cfg = quick_train();
    cfg.epochs = 0;
    train_model(a, data, {}, cfg);
    // Changing only stream-2 flows leaves branch 1 untouched.
    for (auto& ex : data) {
        ex.flows[1] = random_flow(c.frames, c.grid, rng);
    }
    train_model(b, data, {}, cfg);
    EXPECT_EQ(a.branches[0].vae.enc.weight.value, b.branches[0].vae.enc.weight.value);
    EXPECT_EQ(a.branches[0].latent_scale.value, b.branches[0].latent_scale.value);
    EXPECT_NE(a.branches[1].vae.enc.weight.value, b.branches[1].vae.enc.weight.value);
}

TEST(Checkpoint, MismatchedTensorsAreRejected)
{
    const auto c = micro_config();
    SfdNet<float> net(c, 49);
    auto ck = to_checkpoint(net);
    auto shape_bad = ck;
    shape_bad[3].tensor = Tensor<float>({1, 1}, 0.0f);
    EXPECT_THROW(from_checkpoint<float>(shape_bad), CheckpointError);
    auto missing = ck;
    missing.pop_back();
    EXPECT_THROW(from_checkpoint<float>(missing), CheckpointError);
    auto no_config = ck;
    no_config.erase(no_config.begin());
    EXPECT_THROW(from_checkpoint<float>(no_config), CheckpointError);
    auto nan = ck;
    nan[2].tensor[0] = std::nanf("");
    EXPECT_THROW(from_checkpoint<float>(nan), CheckpointError);
}

TEST(Sample, UntrainedModelIsRejected)
{
    const auto c = micro_config();
    SfdNet<float> net(c, 50);
    Rng rng(51);
    std::array<scene::FlowTensor, 2> init{random_flow(1, c.grid, rng), random_flow(1, c.grid, rng)};
    std::array<Rng, 2> r{Rng(1), Rng(2)};
    EXPECT_THROW(sample_flows(net, {1}, init, r), CheckpointError);
    net.trained_stages.value = Tensor<float>::scalar(2.0f);
    std::array<scene::FlowTensor, 2> wrong{random_flow(1, c.grid + 1, rng), random_flow(1, c.grid + 1, rng)};
    EXPECT_THROW(sample_flows(net, {1}, wrong, r), ad::ShapeError);
}

TEST(Sample, SeededAndSwapEquivariant)
{
    const NetConfig c;
    SfdNet<float> net(c, 52);
    Rng rng(53);
    perturb_lora(net, rng);
    net.trained_stages.value = Tensor<float>::scalar(2.0f);
    for (int trial = 0; trial < 3; ++trial) {
        std::array<scene::FlowTensor, 2> init{random_flow(1, c.grid, rng), random_flow(1, c.grid, rng)};
        const std::vector<int> tokens{3, 7, 1};
        const std::uint64_t s1 = rng.next_u64(), s2 = rng.next_u64();
        std::array<Rng, 2> a{Rng(s1), Rng(s2)}, b{Rng(s1), Rng(s2)}, swapped{Rng(s2), Rng(s1)};
        const auto fa = sample_flows(net, tokens, init, a);
        EXPECT_EQ(fa, sample_flows(net, tokens, init, b));
        const auto fs = sample_flows(net, tokens, {init[1], init[0]}, swapped);
        EXPECT_EQ(fa[0], fs[1]);
        EXPECT_EQ(fa[1], fs[0]);
        EXPECT_EQ(fa[0].frames, c.frames);
        EXPECT_EQ(fa[0].grid, c.grid);
    }
}

TEST(Sample, InitialFrameMatchesTrackedFirstFrame)
{
    const auto ep = scene::generate_episode(scene::TaskTemplate::packing, 3);
    const auto boxes = scene::ground_instruction(ep, ep.instruction);
    const auto tracked = make_example(ep, 8).flows;
    for (int s = 0; s < 2; ++s) {
        const auto f = initial_frame(ep, boxes[static_cast<std::size_t>(s)], 8);
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < 8; ++i) {
                for (int j = 0; j < 8; ++j) {
                    EXPECT_EQ(f.at(c, 0, i, j), tracked[static_cast<std::size_t>(s)].at(c, 0, i, j));
                }
            }
        }
    }
}

TEST(Sample, FinalCenterError)
{
    scene::FlowTensor a(2, 2), b(2, 2);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            a.at(0, 1, i, j) = 0.5f;
            a.at(1, 1, i, j) = 0.5f;
            b.at(0, 1, i, j) = 0.5f + (i == 0 ? 0.1f : 0.2f);
            b.at(1, 1, i, j) = 0.5f;
        }
    }
    EXPECT_NEAR(final_center_error(a, b), 0.15, 1e-6);
    EXPECT_EQ(final_center_error(a, a), 0.0);
}
