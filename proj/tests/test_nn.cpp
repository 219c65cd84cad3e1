#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "finite_diff.hpp"
#include "profiler/errors.hpp"
#include "profiler/nn.hpp"

using namespace profiler;
using namespace profiler::nn;
using ad::Tape;
using testsupport::central_differences;
using testsupport::max_rel_error;
using testsupport::to_vec;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, SplitMix64& rng, double scale = 0.8) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.next_uniform(-scale, scale);
    return t;
}

/// Finite-difference check over every coordinate of every listed parameter.
/// `run` stages the parameters (recording slots) and returns a scalar loss.
template <typename Run>
double module_gradcheck(const std::vector<ad::Parameter*>& plist, const Run& run) {
    Tape tape;
    StageSlots slots;
    const auto loss = run(tape, &slots);
    tape.backward(loss);

    double worst = 0.0;
    for (ad::Parameter* p : plist) {
        const auto slot = std::find_if(slots.begin(), slots.end(),
                                       [&](const auto& s) { return s.first == p; });
        REQUIRE(slot != slots.end());
        const auto analytic = to_vec(tape.grad(slot->second));
        const auto numeric = central_differences(
            [&](const std::vector<double>& flat) {
                const Tensor keep = p->value;
                p->value = Tensor(p->value.shape(), flat);
                Tape t2;
                StageSlots ignore;
                const double out = t2.value(run(t2, &ignore))[0];
                p->value = keep;
                return out;
            },
            to_vec(p->value));
        worst = std::max(worst, max_rel_error(analytic, numeric));
    }
    return worst;
}

}  // namespace

TEST_CASE("gru_step: zero-parameter algebra") {
    SplitMix64 rng(1);
    GruParams p("g", 3, 4, rng);
    std::vector<ad::Parameter*> plist;
    p.collect(plist);
    for (ad::Parameter* q : plist) q->value.fill(0.0);

    Tape tape;
    const auto staged = stage(tape, p);
    const Tensor h0({4}, {0.2, -0.4, 1.0, 0.8});
    const auto h = gru_step(tape, staged, tape.constant(Tensor({3})), tape.constant(h0));
    // z = sigma(0) = 0.5, candidate = tanh(0) = 0, so h' = 0.5 h
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(tape.value(h)[i] == doctest::Approx(0.5 * h0[i]).epsilon(1e-15));

    // zero input, zero state: the fixed point stays exactly zero
    const auto h_zero =
        gru_step(tape, staged, tape.constant(Tensor({3})), tape.constant(Tensor({4})));
    for (std::size_t i = 0; i < 4; ++i) CHECK(tape.value(h_zero)[i] == 0.0);
}

TEST_CASE("gru_step: gradient check over all parameters") {
    SplitMix64 rng(2);
    GruParams p("g", 3, 4, rng);
    std::vector<ad::Parameter*> plist;
    p.collect(plist);
    const Tensor x = random_tensor({3}, rng);
    const Tensor h0 = random_tensor({4}, rng);
    const Tensor downstream = random_tensor({4}, rng);

    const double err = module_gradcheck(plist, [&](Tape& tape, StageSlots* slots) {
        const auto staged = stage(tape, p, slots);
        const auto h = gru_step(tape, staged, tape.constant(x), tape.constant(h0));
        return tape.reduce_sum(tape.mul(h, tape.constant(downstream)));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("bigru_encode: single step and mask consistency") {
    SplitMix64 rng(3);
    GruParams fwd("f", 3, 4, rng), bwd("b", 3, 4, rng);

    // T = 1: states are [h_fwd(x0); h_bwd(x0)]
    {
        Tape tape;
        const auto sf = stage(tape, fwd);
        const auto sb = stage(tape, bwd);
        const Tensor x = random_tensor({1, 3}, rng);
        const auto states = bigru_encode(tape, sf, sb, tape.constant(x), {1});
        CHECK(tape.value(states).shape() == std::vector<std::size_t>{1, 8});

        const auto x0 = tape.row(tape.constant(x), 0);
        const auto hf = gru_step(tape, sf, x0, tape.constant(Tensor({4})));
        const auto hb = gru_step(tape, sb, x0, tape.constant(Tensor({4})));
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(tape.value(states).at(0, j) == tape.value(hf)[j]);
            CHECK(tape.value(states).at(0, 4 + j) == tape.value(hb)[j]);
        }
    }

    // trailing pads never change the states at real positions (exact equality)
    {
        const Tensor x_real = random_tensor({3, 3}, rng);
        Tensor x_padded({5, 3});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) x_padded.at(i, j) = x_real.at(i, j);

        Tape t1;
        const auto states1 =
            bigru_encode(t1, stage(t1, fwd), stage(t1, bwd), t1.constant(x_real), {1, 1, 1});
        Tape t2;
        const auto states2 = bigru_encode(t2, stage(t2, fwd), stage(t2, bwd),
                                          t2.constant(x_padded), {1, 1, 1, 0, 0});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                CHECK(t1.value(states1).at(i, j) == t2.value(states2).at(i, j));
    }

    // all-masked input is an error
    {
        Tape tape;
        CHECK_THROWS_AS(bigru_encode(tape, stage(tape, fwd), stage(tape, bwd),
                                     tape.constant(Tensor({2, 3})), {0, 0}),
                        InputError);
    }
}

TEST_CASE("attention_pool: zero-parameter mean, single item, invariants") {
    SplitMix64 rng(4);
    const Tensor items = random_tensor({5, 6}, rng);

    // W = 0, b = 0: uniform weights over unmasked rows, pooled = their mean
    {
        AttentionParams p("a", 6, 6, rng);
        p.proj.value.fill(0.0);
        p.proj_bias.value.fill(0.0);
        Tape tape;
        const auto out =
            attention_pool(tape, stage(tape, p), tape.constant(items), {1, 1, 0, 1, 0});
        const Tensor w = tape.value(out.weights);
        CHECK(std::fabs(w[0] - 1.0 / 3) <= 1e-12);
        CHECK(std::fabs(w[1] - 1.0 / 3) <= 1e-12);
        CHECK(w[2] == 0.0);
        CHECK(std::fabs(w[3] - 1.0 / 3) <= 1e-12);
        CHECK(w[4] == 0.0);
        for (std::size_t j = 0; j < 6; ++j) {
            const double mean = (items.at(0, j) + items.at(1, j) + items.at(3, j)) / 3.0;
            CHECK(std::fabs(tape.value(out.pooled)[j] - mean) <= 1e-12);
        }
    }

    // n = 1: identity regardless of parameters
    {
        AttentionParams p("a", 6, 6, rng);
        Tape tape;
        const Tensor one = random_tensor({1, 6}, rng);
        const auto out = attention_pool(tape, stage(tape, p), tape.constant(one), {1});
        CHECK(tape.value(out.weights)[0] == 1.0);
        for (std::size_t j = 0; j < 6; ++j) CHECK(tape.value(out.pooled)[j] == one.at(0, j));
    }

    // weights nonnegative, sum 1 +- 1e-12, exact zeros at masked slots;
    // pooled vector stays inside coordinate-wise hull bounds
    {
        AttentionParams p("a", 6, 6, rng);
        Tape tape;
        const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1};
        const auto out = attention_pool(tape, stage(tape, p), tape.constant(items), mask);
        const Tensor w = tape.value(out.weights);
        double sum = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(w[i] >= 0.0);
            if (!mask[i]) CHECK(w[i] == 0.0);
            sum += w[i];
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
        for (std::size_t j = 0; j < 6; ++j) {
            double lo = 1e30, hi = -1e30;
            for (std::size_t i = 0; i < 5; ++i) {
                if (!mask[i]) continue;
                lo = std::min(lo, items.at(i, j));
                hi = std::max(hi, items.at(i, j));
            }
            CHECK(tape.value(out.pooled)[j] >= lo - 1e-12);
            CHECK(tape.value(out.pooled)[j] <= hi + 1e-12);
        }
    }
}

TEST_CASE("attention_pool: gradient check, n=5 d=8") {
    SplitMix64 rng(5);
    AttentionParams p("a", 8, 8, rng);
    std::vector<ad::Parameter*> plist;
    p.collect(plist);
    const Tensor items = random_tensor({5, 8}, rng);
    const Tensor downstream = random_tensor({8}, rng);
    const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};

    const double err = module_gradcheck(plist, [&](Tape& tape, StageSlots* slots) {
        const auto out = attention_pool(tape, stage(tape, p, slots), tape.constant(items), mask);
        return tape.reduce_sum(tape.mul(out.pooled, tape.constant(downstream)));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("conv_encode: zeros, output size, short sequences") {
    SplitMix64 rng(6);
    ConvBank bank("c", 5, 7, rng);

    // all-zero embeddings and zero bias give an all-zero code
    {
        ConvBank zero_bank("z", 5, 7, rng);
        for (auto& k : zero_bank.kernels) k.value.fill(0.0);
        for (auto& b : zero_bank.biases) b.value.fill(0.0);
        Tape tape;
        const auto code =
            conv_encode(tape, stage(tape, zero_bank), tape.constant(Tensor({12, 5})), 7);
        CHECK(tape.value(code).numel() == 21);
        for (std::size_t i = 0; i < 21; ++i) CHECK(tape.value(code)[i] == 0.0);
    }

    // output length = 3 * n_filters
    {
        Tape tape;
        const auto code =
            conv_encode(tape, stage(tape, bank), tape.constant(random_tensor({12, 5}, rng)), 7);
        CHECK(tape.value(code).shape() == std::vector<std::size_t>{21});
    }

    // length 4: width 3 applies, widths 6 and 9 contribute zero blocks
    {
        Tape tape;
        const auto code =
            conv_encode(tape, stage(tape, bank), tape.constant(random_tensor({4, 5}, rng)), 7);
        const Tensor& v = tape.value(code);
        for (std::size_t i = 7; i < 21; ++i) CHECK(v[i] == 0.0);
    }

    // below the smallest width: no valid window anywhere
    {
        Tape tape;
        CHECK_THROWS_AS(conv_encode(tape, stage(tape, bank), tape.constant(Tensor({2, 5})), 7),
                        InputError);
    }
}

TEST_CASE("conv_encode: gradient check on a 12-step input") {
    SplitMix64 rng(7);
    ConvBank bank("c", 4, 3, rng);
    std::vector<ad::Parameter*> plist;
    bank.collect(plist);
    const Tensor input = random_tensor({12, 4}, rng);
    const Tensor downstream = random_tensor({9}, rng);

    const double err = module_gradcheck(plist, [&](Tape& tape, StageSlots* slots) {
        const auto code = conv_encode(tape, stage(tape, bank, slots), tape.constant(input), 3);
        return tape.reduce_sum(tape.mul(code, tape.constant(downstream)));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("dense: identity/zero weight algebra and gradient") {
    SplitMix64 rng(9);
    DenseParams p("d", 3, 3, rng);

    p.weight.value = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    p.bias.value = Tensor({3}, {0.1, 0.2, 0.3});
    Tape tape;
    const Tensor x({3}, {5, 6, 7});
    const auto y = dense(tape, stage(tape, p), tape.constant(x));
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(tape.value(y)[j] == doctest::Approx(x[j] + p.bias.value[j]).epsilon(1e-15));

    p.weight.value.fill(0.0);
    const auto y0 = dense(tape, stage(tape, p), tape.constant(x));
    for (std::size_t j = 0; j < 3; ++j) CHECK(tape.value(y0)[j] == p.bias.value[j]);

    DenseParams q("q", 4, 2, rng);
    std::vector<ad::Parameter*> plist;
    q.collect(plist);
    const Tensor input = random_tensor({4}, rng);
    const Tensor downstream = random_tensor({2}, rng);
    const double err = module_gradcheck(plist, [&](Tape& t, StageSlots* slots) {
        const auto out = dense(t, stage(t, q, slots), t.constant(input));
        return t.reduce_sum(t.mul(out, t.constant(downstream)));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("init policy: Glorot bounds and bias zeros") {
    SplitMix64 rng(10);
    GruParams p("g", 20, 30, rng);
    const double bound = std::sqrt(6.0 / (20 + 30));
    for (std::size_t i = 0; i < p.w_z.value.numel(); ++i) {
        CHECK(p.w_z.value[i] < bound);
        CHECK(p.w_z.value[i] > -bound);
    }
    for (std::size_t i = 0; i < p.b_z.value.numel(); ++i) CHECK(p.b_z.value[i] == 0.0);
    CHECK(p.w_z.apply_l2);
    CHECK_FALSE(p.b_z.apply_l2);
}
