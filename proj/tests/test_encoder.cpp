#include <algorithm>
#include <set>

#include "doctest.h"
#include "golden.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace lgi;

namespace {

EncoderConfig small_config(bool lse, bool gii, bool to_mid = false)
{
    EncoderConfig cfg;
    cfg.d_model = 16;
    cfg.heads = 2;
    cfg.d_ff = 32;
    cfg.enable_lse = lse;
    cfg.enable_gii = gii;
    cfg.gii_to_mid = to_mid;
    return cfg;
}

template <class T>
FeaturePyramid<T> random_pyramid(std::int64_t n, std::int64_t d, std::int64_t h5, Rng& rng)
{
    return {random_normal<T>({n, d, 4 * h5, 4 * h5}, rng), random_normal<T>({n, d, 2 * h5, 2 * h5}, rng),
            random_normal<T>({n, d, h5, h5}, rng)};
}

double scaled_diff(const TensorD& a, const TensorD& ref)
{
    const auto [lo, hi] = min_max(ref);
    return oracle::max_abs_diff(a, ref) / std::max(-lo, hi);
}

std::set<std::string> names_of(const EncoderConfig& cfg)
{
    const auto names = param_names(make_encoder<float>(cfg, Rng(1)), "");
    return {names.begin(), names.end()};
}

} // namespace

TEST_CASE("encoder_forward matches the composed oracle for every flag combination")
{
    Rng rng(31);
    for (auto [lse, gii, mid] : {std::tuple{false, false, false}, {true, false, false}, {false, true, false},
                                 {true, true, false}, {true, true, true}, {false, true, true}}) {
        EncoderConfig cfg = small_config(lse, gii, mid);
        cfg.gate_activation = lse && mid ? GateActivation::sigmoid : GateActivation::none;
        const EncoderParams<double> p = make_encoder<double>(cfg, Rng(3));
        const auto pyr = random_pyramid<double>(2, 16, 2, rng);
        const EncoderOutput<double> out = encoder_forward(pyr, p, cfg, Mode::train);
        const oracle::EncoderResult ref = oracle::encoder(pyr, p, cfg);
        CHECK(scaled_diff(out.tokens, ref.tokens) < 1e-10);
        CHECK(scaled_diff(out.levels.s3, ref.fl) < 1e-10);
        CHECK(scaled_diff(out.levels.s4, ref.fm) < 1e-10);
        CHECK(scaled_diff(out.levels.s5, ref.fh) < 1e-10);
    }
}

TEST_CASE("encoder_forward reproduces the recorded golden tokens")
{
    const auto store = BasicParamStore<double>::load(std::filesystem::path(LGI_TEST_DATA_DIR) / golden::kEncoderFile);
    const EncoderConfig cfg = golden::encoder_config();
    EncoderParams<double> p = make_encoder<double>(cfg, Rng(0));
    store.load_into(p, "param");
    const FeaturePyramid<double> pyr{store.find("input.s3")->value, store.find("input.s4")->value,
                                     store.find("input.s5")->value};
    const TensorD& expect = store.find("output.tokens")->value;
    const EncoderOutput<double> out = encoder_forward(pyr, p, cfg, Mode::train);
    CHECK(out.tokens.shape() == Shape{1, 1, 256 + 64 + 16, 32});
    CHECK(scaled_diff(out.tokens, expect) < 1e-10);

    reparameterize_all(p);
    CHECK(scaled_diff(encoder_forward(pyr, p, cfg, Mode::deploy).tokens, expect) < 1e-10);

    // f32 run of the same problem.
    EncoderParams<float> pf = make_encoder<float>(cfg, Rng(0));
    golden::load_cast<float>(store, pf, "param");
    const FeaturePyramid<float> pyrf{pyr.s3.cast<float>(), pyr.s4.cast<float>(), pyr.s5.cast<float>()};
    CHECK(scaled_diff(encoder_forward(pyrf, pf, cfg, Mode::train).tokens.cast<double>(), expect) < 1e-4);
}

TEST_CASE("disabled modules are an exact pass-through")
{
    Rng rng(32);
    const EncoderConfig off = small_config(false, false);
    const EncoderConfig on = small_config(true, true, true);
    const EncoderParams<float> with_modules = make_encoder<float>(on, Rng(9));
    const EncoderParams<float> without = make_encoder<float>(off, Rng(9));
    CHECK(!without.lse_s4.has_value());
    CHECK(!without.gii_hl.has_value());
    const auto pyr = random_pyramid<float>(1, 16, 3, rng);
    const auto a = encoder_forward(pyr, with_modules, off, Mode::train);
    const auto b = encoder_forward(pyr, without, off, Mode::train);
    CHECK(testing::bit_equal(a.tokens, b.tokens));
    // Shared modules draw from their own streams, so they match across flag sets.
    CHECK(testing::bit_equal(with_modules.fusion.td3.branch3x3.weight, without.fusion.td3.branch3x3.weight));
    CHECK(testing::bit_equal(with_modules.aifi[0].q.weight, without.aifi[0].q.weight));
    CHECK_THROWS_AS(encoder_forward(pyr, without, on, Mode::train), ConfigError);
}

TEST_CASE("enabling a flag adds exactly that module's parameters")
{
    const auto base = names_of(small_config(false, false));
    auto added = [&](const EncoderConfig& cfg) {
        std::vector<std::string> out;
        const auto names = names_of(cfg);
        std::set_difference(names.begin(), names.end(), base.begin(), base.end(), std::back_inserter(out));
        for (const auto& b : base) CHECK(names.count(b) == 1);
        return out;
    };
    auto all_prefixed = [](const std::vector<std::string>& v, const std::string& prefix) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
    };
    CHECK(all_prefixed(added(small_config(true, false)), "lse."));
    CHECK(all_prefixed(added(small_config(false, true)), "gii.hl."));
    const auto both = added(small_config(true, true));
    CHECK(both.size() == added(small_config(true, false)).size() + added(small_config(false, true)).size());
    const auto mid = added(small_config(false, true, true));
    CHECK(mid.size() == 2 * added(small_config(false, true)).size());
    CHECK(std::any_of(mid.begin(), mid.end(), [](const std::string& n) { return n.rfind("gii.hm.", 0) == 0; }));
}

TEST_CASE("token count is the sum of level areas")
{
    Rng rng(33);
    for (auto [lse, gii] : {std::pair{false, false}, {true, true}}) {
        EncoderConfig cfg = small_config(lse, gii);
        cfg.d_model = 8;
        cfg.d_ff = 16;
        const auto p = make_encoder<float>(cfg, Rng(2));
        const auto out = encoder_forward(random_pyramid<float>(1, 8, 20, rng), p, cfg, Mode::train);
        CHECK(out.tokens.shape() == Shape{1, 1, 8400, 8});
        const auto small = encoder_forward(random_pyramid<float>(2, 8, 3, rng), p, cfg, Mode::train);
        CHECK(small.tokens.shape() == Shape{2, 1, 144 + 36 + 9, 8});
    }
}

TEST_CASE("encoder forward is deterministic")
{
    Rng rng(34);
    const EncoderConfig cfg = small_config(true, true);
    const auto pyr = random_pyramid<float>(1, 16, 2, rng);
    const auto a = encoder_forward(pyr, make_encoder<float>(cfg, Rng(5)), cfg, Mode::train);
    const auto b = encoder_forward(pyr, make_encoder<float>(cfg, Rng(5)), cfg, Mode::train);
    CHECK(testing::bit_equal(a.tokens, b.tokens));
}

TEST_CASE("encoder_backward zero and dead-path gradients")
{
    Rng rng(35);
    const EncoderConfig on = small_config(true, true, true);
    const EncoderParams<double> p = make_encoder<double>(on, Rng(4));
    const auto pyr = random_pyramid<double>(1, 16, 2, rng);

    EncoderCache<double> cache;
    const auto out = encoder_forward(pyr, p, on, Mode::train, &cache);
    const auto zero = encoder_backward(cache, p, on, TensorD(out.tokens.shape()));
    for_each_param(zero.params, "", [](const std::string& name, const TensorD& t) {
        const auto [lo, hi] = min_max(t);
        CHECK_MESSAGE(lo == 0.0, name);
        CHECK_MESSAGE(hi == 0.0, name);
    });

    EncoderConfig off = on;
    off.enable_lse = false;
    off.enable_gii = false;
    EncoderCache<double> c2;
    const auto o2 = encoder_forward(pyr, p, off, Mode::train, &c2);
    const auto g = encoder_backward(c2, p, off, random_normal<double>(o2.tokens.shape(), rng));
    bool fusion_nonzero = false;
    for_each_param(g.params, "", [&](const std::string& name, const TensorD& t) {
        const auto [lo, hi] = min_max(t);
        if (name.rfind("lse.", 0) == 0 || name.rfind("gii.", 0) == 0) {
            CHECK_MESSAGE(lo == 0.0, name);
            CHECK_MESSAGE(hi == 0.0, name);
        } else if (name.rfind("fusion.", 0) == 0 && (lo != 0.0 || hi != 0.0)) {
            fusion_nonzero = true;
        }
    });
    CHECK(fusion_nonzero);
    CHECK_THROWS_AS(encoder_backward(c2, p, off, TensorD({1, 1, 3, 16})), ShapeError);
}

TEST_CASE("concat_fuse layout")
{
    Rng rng(36);
    const TensorD l = random_normal<double>({1, 4, 80, 80}, rng);
    const TensorD m = random_normal<double>({1, 4, 40, 40}, rng);
    const TensorD h = random_normal<double>({1, 4, 20, 20}, rng);
    const TensorD t = concat_fuse(l, m, h);
    REQUIRE(t.shape() == Shape{1, 1, 8400, 4});
    for (std::int64_t c = 0; c < 4; ++c) {
        CHECK(t.at(0, 0, 6400, c) == m.at(0, c, 0, 0));
        CHECK(t.at(0, 0, 8000, c) == h.at(0, c, 0, 0));
        CHECK(t.at(0, 0, 81, c) == l.at(0, c, 1, 1));
    }
    CHECK(testing::bit_equal(t, oracle::concat_tokens(l, m, h)));
    const TensorD single[] = {l};
    CHECK(testing::bit_equal(concat_fuse<double>(single), oracle::to_tokens(l)));
    CHECK_THROWS_AS(concat_fuse(l, TensorD({1, 3, 40, 40}), h), ShapeError);

    const Shape shapes[] = {l.shape(), m.shape(), h.shape()};
    const auto back = concat_fuse_backward<double>(t, shapes);
    REQUIRE(back.size() == 3);
    CHECK(testing::bit_equal(back[0], l));
    CHECK(testing::bit_equal(back[1], m));
    CHECK(testing::bit_equal(back[2], h));
}

TEST_CASE("encoder rejects invalid pyramids and configs")
{
    Rng rng(37);
    const EncoderConfig cfg = small_config(true, true);
    const auto p = make_encoder<float>(cfg, Rng(1));
    auto pyr = random_pyramid<float>(1, 16, 2, rng);
    auto bad = pyr;
    bad.s4 = Tensor({1, 16, 3, 3});
    CHECK_THROWS_AS(encoder_forward(bad, p, cfg, Mode::train), ShapeError);
    bad = pyr;
    bad.s5 = Tensor({2, 16, 2, 2});
    CHECK_THROWS_AS(encoder_forward(bad, p, cfg, Mode::train), ShapeError);
    bad = pyr;
    bad.s3 = Tensor({1, 8, 8, 8});
    CHECK_THROWS_AS(encoder_forward(bad, p, cfg, Mode::train), ShapeError);
    CHECK_THROWS_AS(encoder_forward(pyr, p, cfg, Mode::deploy), StateError);

    EncoderConfig c = cfg;
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg;
    c.d_model = 18;
    c.heads = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg;
    c.split_ratio = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(make_encoder<float>(c, Rng(1)), ConfigError);
}
