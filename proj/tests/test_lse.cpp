#include <cmath>

#include "doctest.h"
#include "instances.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace lgi;

namespace {

bool channels_equal(const TensorD& a, const TensorD& b, std::int64_t from)
{
    for (std::int64_t n = 0; n < a.n(); ++n)
        for (std::int64_t c = from; c < a.c(); ++c)
            for (std::int64_t i = 0; i < a.h() * a.w(); ++i)
                if (a.plane(n, c)[i] != b.plane(n, c)[i]) return false;
    return true;
}

} // namespace

TEST_CASE("lse_forward matches the straight-line oracle on random instances")
{
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = testing::random_lse_instance(rng);
        LseCache<double> cache;
        const TensorD y = lse_forward(inst.x_low, inst.x_high, inst.params, &cache);
        REQUIRE(y.shape() == inst.x_high.shape());
        CHECK(oracle::max_rel_diff(y, oracle::lse(inst.x_low, inst.x_high, inst.params)) < 1e-6);
        CHECK(channels_equal(y, inst.x_high, inst.params.split_k));
        if (inst.params.gate == GateActivation::sigmoid)
            for (std::int64_t n = 0; n < y.n(); ++n)
                for (std::int64_t c = 0; c < inst.params.split_k; ++c)
                    for (std::int64_t i = 0; i < y.h() * y.w(); ++i)
                        CHECK(std::abs(y.plane(n, c)[i]) <= std::abs(inst.x_high.plane(n, c)[i]));
    }
}

TEST_CASE("lse_weights matches the composition of op oracles")
{
    Rng rng(12);
    const LseParams<double> p = [&] {
        auto q = make_lse<double>(2, 4, 2, 2, GateActivation::none, rng);
        testing::randomize_bias(q.pre_conv, rng);
        testing::randomize_bias(q.post_conv, rng);
        return q;
    }();
    const TensorD xl = random_normal<double>({1, 2, 4, 4}, rng);
    const TensorD w = lse_weights(xl, p);
    CHECK(w.shape() == Shape{1, 2, 2, 2});
    const TensorD ref = oracle::conv(oracle::patch_merge(oracle::conv(xl, p.pre_conv), 2), p.post_conv);
    CHECK(oracle::max_rel_diff(w, ref) < 1e-12);

    LseParams<double> z = p;
    z.post_conv.weight.fill(0.0);
    z.post_conv.bias = TensorD({1, 2, 1, 1}, std::vector<double>{0.25, -3.0});
    const TensorD wz = lse_weights(xl, z);
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t i = 0; i < 4; ++i) CHECK(wz.plane(0, c)[i] == z.post_conv.bias[c]);
}

TEST_CASE("lse_forward with unit weights is the identity")
{
    Rng rng(13);
    auto p = make_lse<double>(3, 6, 3, 2, GateActivation::none, rng);
    p.post_conv.weight.fill(0.0);
    p.post_conv.bias.fill(1.0);
    const TensorD xl = random_normal<double>({2, 3, 8, 8}, rng);
    const TensorD xh = random_normal<double>({2, 6, 4, 4}, rng);
    CHECK(testing::bit_equal(lse_forward(xl, xh, p), xh));
}

TEST_CASE("lse shapes and errors")
{
    Rng rng(14);
    const auto p2 = make_lse<double>(4, 8, 4, 2, GateActivation::none, rng);
    const auto p4 = make_lse<double>(4, 8, 4, 4, GateActivation::none, rng);
    CHECK(p2.post_conv.weight.shape() == Shape{4, 16, 1, 1});
    CHECK(p4.post_conv.weight.shape() == Shape{4, 64, 1, 1});
    const TensorD xl = random_normal<double>({1, 4, 16, 16}, rng);
    CHECK(lse_forward(xl, TensorD({1, 8, 8, 8}), p2).shape() == Shape{1, 8, 8, 8});
    CHECK(lse_forward(xl, TensorD({1, 8, 4, 4}), p4).shape() == Shape{1, 8, 4, 4});
    CHECK(lse_weights(xl, p2).shape() == Shape{1, 4, 8, 8});
    CHECK_THROWS_AS(lse_forward(xl, TensorD({1, 8, 4, 4}), p2), ShapeError);
    CHECK_THROWS_AS(lse_forward(xl, TensorD({2, 8, 8, 8}), p2), ShapeError);
    CHECK_THROWS_AS(lse_forward(xl, TensorD({1, 4, 8, 8}), p2), ShapeError);
    CHECK_THROWS_AS(make_lse<double>(4, 8, 0, 2, GateActivation::none, rng), ConfigError);
    CHECK_THROWS_AS(make_lse<double>(4, 8, 8, 2, GateActivation::none, rng), ConfigError);
    CHECK_THROWS_AS(make_lse<double>(4, 8, 4, 3, GateActivation::none, rng), ConfigError);
    auto wide = make_lse<double>(4, 16, 8, 2, GateActivation::none, rng);
    CHECK_THROWS_AS(lse_forward(xl, TensorD({1, 8, 8, 8}), wide), ShapeError);
}

TEST_CASE("lse_backward identity path and zero case")
{
    Rng rng(15);
    const auto inst = testing::random_lse_instance(rng);
    LseCache<double> cache;
    const TensorD y = lse_forward(inst.x_low, inst.x_high, inst.params, &cache);
    const TensorD g = random_normal<double>(y.shape(), rng);
    const auto grads = lse_backward(cache, inst.params, g);
    CHECK(grads.x_high.shape() == inst.x_high.shape());
    CHECK(grads.x_low.shape() == inst.x_low.shape());
    CHECK(channels_equal(grads.x_high, g, inst.params.split_k));

    const auto zero = lse_backward(cache, inst.params, TensorD(y.shape()));
    for (const TensorD* t : {&zero.x_low, &zero.x_high, &zero.params.pre_conv.weight, &zero.params.pre_conv.bias,
                             &zero.params.post_conv.weight, &zero.params.post_conv.bias}) {
        const auto [lo, hi] = min_max(*t);
        CHECK(lo == 0.0);
        CHECK(hi == 0.0);
    }
    CHECK_THROWS_AS(lse_backward(cache, inst.params, TensorD({9, 1, 1, 1})), ShapeError);
}
