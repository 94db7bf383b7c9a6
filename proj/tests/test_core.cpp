#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "sfd/core/adamw.hpp"
#include "sfd/core/autodiff.hpp"
#include "sfd/core/checkpoint.hpp"
#include "sfd/core/gradcheck.hpp"
#include "sfd/core/lora.hpp"
#include "support/primitive_cases.hpp"

using namespace sfd;
using namespace sfd::ad;

namespace {

using TD = Tensor<double>;
using VD = Var<double>;

TD random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) { return TD::uniform(std::move(s), rng, lo, hi); }

// Independent 64-bit central-difference oracle on a plain function.
template <class F>
std::vector<double> central_diff(F f, std::vector<double> x, double h = 1e-3)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double o = x[i];
        x[i] = o + h;
        const double fp = f(x);
        x[i] = o - h;
        const double fm = f(x);
        x[i] = o;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

} // namespace

TEST(Backward, SquareAtThree)
{
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>::scalar(3.0f), true);
    auto y = mul(x, x);
    auto g = backward(y);
    EXPECT_FLOAT_EQ(g[x].item(), 6.0f);
}

TEST(Backward, SumOfMatVecMatchesColumnSumsAndFiniteDifferences)
{
    Rng rng(11);
    const TD m = random_tensor({4, 4}, rng);
    const TD v = random_tensor({4, 1}, rng);

    Tape<double> tape;
    auto mv = tape.leaf(m, true);
    auto vv = tape.leaf(v, true);
    auto loss = sum(matmul(mv, vv));
    auto g = backward(loss);

    for (int j = 0; j < 4; ++j) {
        double col = 0;
        for (int i = 0; i < 4; ++i) {
            col += m.at(i, j);
            EXPECT_NEAR(g[mv].at(i, j), v[static_cast<std::size_t>(j)], 1e-12);
        }
        EXPECT_NEAR(g[vv][static_cast<std::size_t>(j)], col, 1e-12);
    }

    auto f = [&](const std::vector<double>& x) {
        double s = 0;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                s += m.at(i, j) * x[static_cast<std::size_t>(j)];
            }
        }
        return s;
    };
    const auto fd = central_diff(f, v.data());
    for (int j = 0; j < 4; ++j) {
        EXPECT_NEAR(g[vv][static_cast<std::size_t>(j)], fd[static_cast<std::size_t>(j)], 1e-9);
    }
}

TEST(Backward, DisconnectedParameterGetsZeros)
{
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({2, 3}, 1.5f), true);
    auto unused = tape.leaf(Tensor<float>({3, 2}, 2.0f), true);
    auto g = backward(sum(x));
    ASSERT_TRUE(g.has(unused.id));
    for (float v : g[unused].data()) {
        EXPECT_EQ(v, 0.0f);
    }
}

TEST(Backward, FanOutAccumulates)
{
    Tape<double> tape;
    auto x = tape.leaf(TD::scalar(2.0), true);
    auto y = add(mul(x, x), add(x, x)); // x^2 + 2x
    EXPECT_DOUBLE_EQ(backward(y)[x].item(), 6.0);
}

TEST(Backward, RejectsNonScalarLoss)
{
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({2, 2}, 1.0f), true);
    auto y = tanh(x);
    EXPECT_THROW(backward(y), TapeError);
}

TEST(Backward, RejectsCyclicTape)
{
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>::scalar(1.0f), true);
    auto y = mul(x, x);
    auto z = sum(y);
    // Point y at z: a back edge that cannot arise through the op API.
    tape.nodes_for_testing()[static_cast<std::size_t>(y.id)].inputs = {z.id};
    EXPECT_THROW(backward(z), TapeError);
}

TEST(Backward, IsLinearInTheLoss)
{
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const TD p = random_tensor({3, 3}, rng);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        auto grad_of = [&](double ca, double cb) {
            Tape<double> tape;
            auto x = tape.leaf(p, true);
            auto f = sum(tanh(matmul(x, x)));
            auto g = mean(exp(scale(x, 0.5)));
            auto l = add(scale(f, ca), scale(g, cb));
            return backward(l)[x];
        };
        const TD gf = grad_of(1, 0), gg = grad_of(0, 1), gl = grad_of(a, b);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_NEAR(gl[i], a * gf[i] + b * gg[i], 1e-6);
        }
    }
}

TEST(Backward, NonFiniteValuesAreAnError)
{
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>::scalar(-1.0f), true);
    EXPECT_THROW(log(x), NonFiniteError);
    EXPECT_THROW(tape.leaf(Tensor<float>::scalar(std::nanf("")), false), NonFiniteError);
}

// ---------------------------------------------------------------------------
// finite_diff_check
// ---------------------------------------------------------------------------

TEST(FiniteDiff, LinearMapIsExact)
{
    Rng rng(5);
    const TD w = random_tensor({3, 4}, rng);
    TapeBuilder<double> f = [&](Tape<double>& t, const VD& x) { return sum(matmul(t.leaf(w), x)); };
    const auto r = finite_diff_check(f, random_tensor({4, 2}, rng), 1e-10);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(FiniteDiff, TwoLayerTanhMlp)
{
    Rng rng(6);
    const TD w1 = random_tensor({5, 3}, rng), w2 = random_tensor({1, 5}, rng);
    TapeBuilder<double> f = [&](Tape<double>& t, const VD& x) {
        auto h = tanh(matmul(t.leaf(w1), x));
        return sum(matmul(t.leaf(w2), h));
    };
    const auto r = finite_diff_check(f, random_tensor({3, 4}, rng), 1e-4);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(FiniteDiff, SoftmaxCrossEntropy)
{
    Rng rng(7);
    TD onehot({4, 5}, 0.0);
    for (int r = 0; r < 4; ++r) {
        onehot.at(r, static_cast<int>(rng.below(5))) = 1.0;
    }
    TapeBuilder<double> f = [&](Tape<double>& t, const VD& logits) {
        auto p = softmax_rows(logits);
        return scale(sum(mul(t.leaf(onehot), log(p))), -0.25);
    };
    const auto r = finite_diff_check(f, random_tensor({4, 5}, rng, -2, 2), 1e-4);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(FiniteDiff, DetectsNondeterminism)
{
    int calls = 0;
    TapeBuilder<double> f = [&](Tape<double>& t, const VD& x) {
        ++calls;
        return sum(add_scalar(x, static_cast<double>(calls)));
    };
    EXPECT_THROW(finite_diff_check(f, TD({2, 2}, 1.0), 1e-4), NondeterministicFunction);
}

// Every primitive, 100 random points each.
TEST(FiniteDiff, EveryPrimitiveAtRandomPoints)
{
    Rng rng(2024);
    for (const auto& c : sfd::testing::primitive_cases(rng)) {
        EXPECT_LT(sfd::testing::worst_fd_error(c, rng, 100), 1e-4) << c.name;
    }
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

namespace {

template <class T>
void one_step(Parameter<T>& p, const Tensor<T>& g, AdamWState<T>& st)
{
    Parameter<T>* ps[] = {&p};
    const Tensor<T> gs[] = {g};
    adamw_step<T>(ps, gs, st);
}

} // namespace

TEST(AdamW, DecoupledDecayWithZeroGradient)
{
    Parameter<float> p{"theta", Tensor<float>::scalar(1.0f)};
    Parameter<float>* ps[] = {&p};
    auto st = make_adamw_state<float>(ps, AdamWConfig{1e-4, 0.9, 0.999, 1e-8, 0.01});
    one_step(p, Tensor<float>::scalar(0.0f), st);
    EXPECT_FLOAT_EQ(p.value.item(), 0.999999f);
}

TEST(AdamW, FirstStepIsSignLike)
{
    Rng rng(9);
    for (int k = 0; k < 50; ++k) {
        Parameter<double> p{"theta", TD::scalar(rng.uniform(-3, 3))};
        Parameter<double>* ps[] = {&p};
        auto st = make_adamw_state<double>(ps, AdamWConfig{1e-4, 0.9, 0.999, 1e-8, 0.0});
        const double before = p.value.item();
        double g = rng.uniform(-5, 5);
        if (std::abs(g) < 1e-3) {
            g = 1.0;
        }
        one_step(p, TD::scalar(g), st);
        const double step = std::abs(p.value.item() - before);
        EXPECT_GE(step, 0.9e-4);
        EXPECT_LE(step, 1.0e-4 + 1e-15);
    }
}

TEST(AdamW, ZeroGradientZeroDecayIsBitIdentical)
{
    Rng rng(10);
    Parameter<float> p{"w", Tensor<float>::randn({4, 4}, rng)};
    const auto before = p.value;
    Parameter<float>* ps[] = {&p};
    auto st = make_adamw_state<float>(ps, AdamWConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 5; ++i) {
        one_step(p, Tensor<float>({4, 4}, 0.0f), st);
    }
    EXPECT_EQ(p.value, before);
}

TEST(AdamW, QuadraticBowlMatchesScalarReference)
{
    // Reference values from an independent scalar script of the same update
    // rule: minimize (theta - 3)^2 from 0, lr = 0.1, 100 steps.
    for (auto [wd, expected] : {std::pair{0.0, 2.9806554375278123}, std::pair{0.01, 2.953325264091717}}) {
        Parameter<double> p{"theta", TD::scalar(0.0)};
        Parameter<double>* ps[] = {&p};
        auto st = make_adamw_state<double>(ps, AdamWConfig{0.1, 0.9, 0.999, 1e-8, wd});
        for (int k = 0; k < 100; ++k) {
            one_step(p, TD::scalar(2.0 * (p.value.item() - 3.0)), st);
        }
        EXPECT_NEAR(p.value.item(), expected, 1e-9);
        EXPECT_LT(std::abs(p.value.item() - 3.0), 0.1);
    }
}

TEST(AdamW, Errors)
{
    Parameter<float> p{"w", Tensor<float>({2, 2}, 1.0f)};
    Parameter<float>* ps[] = {&p};
    auto st = make_adamw_state<float>(ps);
    EXPECT_THROW(one_step(p, Tensor<float>({2, 3}, 0.0f), st), ShapeError);
    EXPECT_THROW(one_step(p, Tensor<float>({2, 2}, std::numeric_limits<float>::infinity()), st), NonFiniteError);
    st.config.lr = 0.0;
    EXPECT_THROW(one_step(p, Tensor<float>({2, 2}, 0.0f), st), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// LoRA
// ---------------------------------------------------------------------------

TEST(Lora, ZeroInitIsIdentityOnBaseLayer)
{
    Rng rng(1);
    LoraAdapter<float> ad("proj", Tensor<float>::randn({5, 3}, rng), 4, 4.0f, rng);
    const auto x = Tensor<float>::randn({7, 3}, rng);
    Tape<float> tape;
    Binder<float> bind(tape);
    auto xv = tape.leaf(x);
    auto y = lora_forward(bind, ad, xv);
    auto base = matmul(xv, transpose(tape.leaf(ad.base.value)));
    EXPECT_EQ(y.value(), base.value());
}

TEST(Lora, FullRankWithZeroBaseIsBA)
{
    Rng rng(2);
    LoraAdapter<double> ad("proj", TD({3, 3}, 0.0), 3, 3.0, rng);
    ad.b.value = TD::randn({3, 3}, rng);
    const TD x = TD::randn({2, 3}, rng);
    Tape<double> tape;
    Binder<double> bind(tape);
    auto y = lora_forward(bind, ad, tape.leaf(x));
    for (int r = 0; r < 2; ++r) {
        for (int i = 0; i < 3; ++i) {
            double s = 0;
            for (int j = 0; j < 3; ++j) {
                double ba = 0;
                for (int k = 0; k < 3; ++k) {
                    ba += ad.b.value.at(i, k) * ad.a.value.at(k, j);
                }
                s += ba * x.at(r, j);
            }
            EXPECT_NEAR(y.value().at(r, i), s, 1e-12);
        }
    }
}

TEST(Lora, RandomCaseMatchesDenseOracleAndOnlyAdaptersTrain)
{
    Rng rng(3);
    LoraAdapter<double> ad("proj", TD::randn({3, 3}, rng), 2, 2.0, rng);
    ad.b.value = TD::randn({3, 2}, rng);
    const TD x = TD::randn({4, 3}, rng);
    const TD w = lora_merged_weight(ad);

    Tape<double> tape;
    Binder<double> bind(tape);
    auto y = lora_forward(bind, ad, tape.leaf(x));
    for (int r = 0; r < 4; ++r) {
        for (int i = 0; i < 3; ++i) {
            double s = 0;
            for (int j = 0; j < 3; ++j) {
                s += w.at(i, j) * x.at(r, j);
            }
            EXPECT_NEAR(y.value().at(r, i), s, 1e-12);
        }
    }
    auto g = backward(sum(y));
    EXPECT_FALSE(g.has(bind(ad.base).id));
    EXPECT_TRUE(g.has(bind(ad.a).id));
    EXPECT_TRUE(g.has(bind(ad.b).id));
}

TEST(Lora, Errors)
{
    Rng rng(4);
    EXPECT_THROW(LoraAdapter<float>("p", Tensor<float>({3, 3}), 0, 1.0f, rng), LoraConfigError);
    LoraAdapter<float> ad("p", Tensor<float>({3, 3}), 2, 2.0f, rng);
    Tape<float> tape;
    Binder<float> bind(tape);
    EXPECT_THROW(lora_forward(bind, ad, tape.leaf(Tensor<float>({2, 4}))), ShapeError);
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact)
{
    Rng rng(8);
    std::vector<NamedTensor> ts = {
        {"a", Tensor<float>::randn({3, 5}, rng)},
        {"b.weight", Tensor<float>::randn({1, 1}, rng)},
        {"c", Tensor<float>({2, 3, 4}, -0.0f)},
    };
    std::stringstream ss;
    write_checkpoint(ss, ts);
    const std::string bytes = ss.str();
    EXPECT_EQ(bytes.substr(0, 4), "SFDC");

    auto back = read_checkpoint(ss);
    ASSERT_EQ(back.size(), ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        EXPECT_EQ(back[i].name, ts[i].name);
        ASSERT_EQ(back[i].tensor.shape(), ts[i].tensor.shape());
        EXPECT_EQ(std::memcmp(back[i].tensor.data().data(), ts[i].tensor.data().data(), ts[i].tensor.size() * 4), 0);
    }
    std::stringstream again;
    write_checkpoint(again, back);
    EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation)
{
    std::stringstream bad("SFDX\x01\x00\x00\x00");
    EXPECT_THROW(read_checkpoint(bad), io::FormatError);

    std::stringstream ss;
    write_checkpoint(ss, {{"a", Tensor<float>({4, 4}, 1.0f)}});
    std::string s = ss.str();
    std::stringstream truncated(s.substr(0, s.size() - 3));
    EXPECT_THROW(read_checkpoint(truncated), io::FormatError);
}
