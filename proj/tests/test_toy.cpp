#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "ap_oracle.hpp"
#include "golden.hpp"
#include "test_helpers.hpp"

#include "lgi/tensor_io.hpp"
#include "lgi/toy/train.hpp"

using namespace lgi;
using namespace lgi::toy;

namespace {

std::vector<DetectionSet> perfect_predictions(std::span<const ToyScene> scenes)
{
    std::vector<DetectionSet> out;
    for (const auto& s : scenes) {
        DetectionSet d;
        for (const auto& t : truths_of(s)) d.push_back({t.cls, 1.0, t.box});
        out.push_back(d);
    }
    return out;
}

std::vector<std::vector<Truth>> all_truths(std::span<const ToyScene> scenes)
{
    std::vector<std::vector<Truth>> out;
    for (const auto& s : scenes) out.push_back(truths_of(s));
    return out;
}

// Truth boxes jittered, plus clutter, with random scores.
std::vector<DetectionSet> noisy_predictions(std::span<const ToyScene> scenes, Rng& rng)
{
    std::vector<DetectionSet> out;
    for (const auto& s : scenes) {
        DetectionSet d;
        for (const auto& t : truths_of(s)) {
            Box b = t.box;
            const double j = rng.uniform(-3.0, 3.0);
            b.x_min += j;
            b.x_max += rng.uniform(-3.0, 3.0);
            b.y_min += rng.uniform(-3.0, 3.0);
            b.y_max -= j;
            if (b.x_max <= b.x_min + 1) b.x_max = b.x_min + 1;
            if (b.y_max <= b.y_min + 1) b.y_max = b.y_min + 1;
            d.push_back({rng.uniform() < 0.8 ? t.cls : static_cast<int>(rng.uniform_int(0, 2)), rng.uniform(), b});
        }
        for (int k = 0; k < 4; ++k) {
            const double x = rng.uniform(0, 110), y = rng.uniform(0, 110), w = rng.uniform(4, 16);
            d.push_back({static_cast<int>(rng.uniform_int(0, 2)), rng.uniform(), {x, y, x + w, y + w}});
        }
        out.push_back(d);
    }
    return out;
}

std::vector<const Tensor*> tensors_of(const ToyParams& p)
{
    std::vector<const Tensor*> out;
    for_each_param(p, "", [&](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

TrainConfig tiny_train(std::uint64_t seed)
{
    TrainConfig t;
    t.seed = seed;
    t.epochs = 2;
    t.train_images = 8;
    t.batch_size = 4;
    return t;
}

} // namespace

TEST_CASE("scene generation is deterministic and honors its invariants")
{
    Rng a(3), b(3);
    const ToyScene s1 = gen_scene(a), s2 = gen_scene(b);
    CHECK(testing::bit_equal(s1.image, s2.image));
    CHECK(s1.objects.size() == s2.objects.size());
    CHECK(s1.image.shape() == Shape{1, 3, 128, 128});

    const auto data = gen_dataset(9, 200);
    for (const auto& s : data) {
        CHECK(s.objects.size() >= 3);
        CHECK(s.objects.size() <= 8);
        for (float v : s.image.data()) {
            CHECK(v >= 0.0F);
            CHECK(v <= 1.0F);
        }
        for (std::size_t i = 0; i < s.objects.size(); ++i) {
            const auto& o = s.objects[i];
            CHECK(o.size >= 4);
            CHECK(o.size <= 16);
            for (int ch = 0; ch < 3; ++ch) CHECK(std::abs(o.color[ch] - s.background[ch]) >= 0.2F);
            for (std::size_t j = 0; j < i; ++j) {
                const auto& p = s.objects[j];
                CHECK(std::max(std::abs(o.cx() - p.cx()), std::abs(o.cy() - p.cy())) > 2.0);
            }
        }
    }
}

TEST_CASE("noise-free scenes render exact templates")
{
    SceneOptions opts;
    opts.noise_sigma = 0.0;
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        const ToyScene s = gen_scene(rng, opts);
        int mismatches = 0;
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < 128; ++y)
                for (int x = 0; x < 128; ++x) {
                    float expect = s.background[ch];
                    for (const auto& o : s.objects)
                        if (o.covers(x, y)) expect = o.color[ch];
                    mismatches += s.image.at(0, ch, y, x) != expect ? 1 : 0;
                }
        CHECK(mismatches == 0);
    }
}

TEST_CASE("object count histogram is uniform over 3..8")
{
    SceneOptions opts;
    opts.noise_sigma = 0.0;
    const int n = 10000;
    std::array<int, 9> hist{};
    Rng root(5);
    for (int i = 0; i < n; ++i) {
        Rng r = root.fork(static_cast<std::uint64_t>(i));
        ++hist[gen_scene(r, opts).objects.size()];
    }
    const double p = 1.0 / 6.0, mean = n * p, sd = std::sqrt(n * p * (1 - p));
    for (int c = 3; c <= 8; ++c) CHECK(std::abs(hist[static_cast<std::size_t>(c)] - mean) <= 3.0 * sd);
}

TEST_CASE("AP of perfect, empty and hand-built detectors")
{
    const auto scenes = gen_dataset(1, 10);
    const auto truths = all_truths(scenes);
    const auto perfect = perfect_predictions(scenes);
    const ApResult r = eval_ap(perfect, truths);
    CHECK(r.ap == doctest::Approx(1.0));
    CHECK(r.ap50 == doctest::Approx(1.0));
    const std::vector<DetectionSet> empty(scenes.size());
    const ApResult e = eval_ap(empty, truths);
    CHECK(e.ap == 0.0);
    CHECK(e.ap50 == 0.0);

    // Two truths, three predictions: a hit on A, a duplicate of A, a loose hit on B.
    const Box a{0, 0, 10, 10}, b{20, 20, 30, 30};
    const std::vector<std::pair<double, Box>> preds = {
        {0.9, {0, 0, 10, 9.2}}, {0.8, {0.8, 0, 10, 10}}, {0.7, {20, 20, 30, 26.2}}};
    const std::vector<DetectionSet> p = {{{0, 0.9, preds[0].second}, {0, 0.8, preds[1].second}, {0, 0.7, preds[2].second}}};
    const std::vector<std::vector<Truth>> t = {{{0, a}, {0, b}}};
    // At IoU 0.5: TP, FP, TP -> precision 1 up to recall 0.5, then 2/3.
    const double ap50_hand = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
    CHECK(oracle::reference_ap(preds, {a, b}, 0.5) == doctest::Approx(ap50_hand).epsilon(1e-12));
    const ApResult hr = eval_ap(p, t);
    CHECK(hr.ap50 == doctest::Approx(ap50_hand).epsilon(1e-12));
    double mean = 0;
    for (double thr : coco_iou_thresholds()) mean += oracle::reference_ap(preds, {a, b}, thr);
    CHECK(hr.ap == doctest::Approx(mean / 10.0).epsilon(1e-12));
}

TEST_CASE("AP invariants on noisy detectors")
{
    Rng rng(6);
    const auto scenes = gen_dataset(2, 12);
    const auto truths = all_truths(scenes);
    for (int trial = 0; trial < 20; ++trial) {
        auto preds = noisy_predictions(scenes, rng);
        const ApResult r = eval_ap(preds, truths);
        CHECK(r.ap50 >= r.ap);
        CHECK(r.ap >= 0.0);
        CHECK(r.ap50 <= 1.0);
        for (auto& d : preds)
            for (auto& det : d) det.score = std::pow(det.score, 3.0) * 0.5;
        const ApResult m = eval_ap(preds, truths);
        CHECK(m.ap == r.ap);
        CHECK(m.ap50 == r.ap50);
    }
}

TEST_CASE("toy model shapes and decoding")
{
    const EncoderConfig cfg = toy_encoder_config();
    const ToyParams params = make_toy_params(cfg, 1);
    const auto scenes = gen_dataset(3, 2);
    const std::size_t idx[] = {0, 1};
    const ToyOutput out = toy_model_forward(stack_images(scenes, idx), params, cfg);
    CHECK(out.raw.shape() == Shape{2, 1, 1344, kHeadOutputs});
    CHECK(out.levels.s3.shape() == Shape{2, 16, 32, 32});
    CHECK(out.levels.s4.shape() == Shape{2, 16, 16, 16});
    CHECK(out.levels.s5.shape() == Shape{2, 16, 8, 8});
    const auto dets = decode(out.raw, 128);
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].size() == 1344);
    for (const auto& d : dets[0]) {
        CHECK(d.score >= 0.0);
        CHECK(d.score <= 1.0);
        CHECK(d.box.area() > 0.0);
        CHECK(d.box.x_min >= 0.0);
        CHECK(d.box.y_min >= 0.0);
        CHECK(d.box.x_max <= 128.0);
        CHECK(d.box.y_max <= 128.0);
    }
    CHECK_THROWS_AS(toy_model_forward(Tensor({1, 3, 120, 120}), params, cfg), ShapeError);
    CHECK_THROWS_AS(toy_model_forward(Tensor({1, 1, 128, 128}), params, cfg), ShapeError);
}

TEST_CASE("toy forward reproduces the recorded golden output")
{
    const std::filesystem::path dir = LGI_TEST_DATA_DIR;
    const ParamStore store = ParamStore::load(dir / golden::kToyFile);
    const TensorD expect = load_tensor_as<double>(dir / golden::kToyRawFile);
    const EncoderConfig cfg = golden::toy_config();
    ToyParams params = make_toy_params(cfg, 0);
    store.load_into(params, "param");
    const ToyOutput out = toy_model_forward(store.find("input.image")->value, params, cfg);
    REQUIRE(out.raw.shape() == expect.shape());
    const auto [lo, hi] = min_max(expect);
    CHECK(max_abs_diff(out.raw.cast<double>(), expect) / std::max(-lo, hi) < 1e-4);
}

TEST_CASE("postprocess thresholds, suppresses and caps")
{
    const DetectionSet d = {{0, 0.9, {0, 0, 10, 10}},   {0, 0.8, {1, 1, 10, 10}},  {1, 0.85, {1, 1, 10, 10}},
                            {0, 0.7, {50, 50, 60, 60}}, {2, 0.01, {70, 70, 80, 80}}};
    const DetectionSet out = postprocess(d, 0.05, 0.5, 100);
    REQUIRE(out.size() == 3);
    CHECK(out[0].score == 0.9);
    CHECK(out[1].score == 0.85); // other class survives
    CHECK(out[2].score == 0.7);
    CHECK(postprocess(d, 0.05, 0.5, 2).size() == 2);
    CHECK(postprocess(d, 0.0, 1.0, 100).size() == 5);
}

TEST_CASE("toy loss gradient matches finite differences")
{
    const EncoderConfig cfg = toy_encoder_config();
    const auto scenes = gen_dataset(4, 2);
    const std::size_t idx[] = {0, 1};
    const Tensor raw = toy_model_forward(stack_images(scenes, idx), make_toy_params(cfg, 2), cfg).raw;
    const std::vector<const ToyScene*> batch = {&scenes[0], &scenes[1]};
    const LossResult base = toy_loss(raw, batch, 128);
    CHECK(base.positives > 0);
    CHECK(std::isfinite(base.loss));
    CHECK(base.loss == doctest::Approx(base.objectness + base.classification + base.box));

    // Probe coordinates of every output kind at positive cells and a few others.
    Rng rng(7);
    TensorD wide = raw.cast<double>();
    int checked = 0;
    for (std::int64_t i = 0; i < raw.numel() && checked < 200; i += 1 + rng.uniform_int(0, 40)) {
        const float x0 = raw[i];
        const double h = 1e-2;
        Tensor plus = raw, minus = raw;
        plus[i] = x0 + static_cast<float>(h);
        minus[i] = x0 - static_cast<float>(h);
        const double numeric = (toy_loss(plus, batch, 128).loss - toy_loss(minus, batch, 128).loss) /
                               (static_cast<double>(plus[i]) - static_cast<double>(minus[i]));
        // L1 terms are piecewise linear; skip probes that straddle a kink.
        if (std::abs(numeric - base.grad[i]) > 1e-3 + 1e-2 * std::abs(numeric)) {
            const double half = (toy_loss(plus, batch, 128).loss - base.loss) / (static_cast<double>(plus[i]) - x0);
            const double other = (base.loss - toy_loss(minus, batch, 128).loss) / (x0 - static_cast<double>(minus[i]));
            if (std::abs(half - other) > 1e-3) continue;
        }
        CHECK(base.grad[i] == doctest::Approx(numeric).epsilon(1e-2).scale(0.1));
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("optimizer with zero learning rate and decay leaves parameters unchanged")
{
    TrainConfig t;
    t.learning_rate = 0.0;
    t.weight_decay = 0.0;
    // validate() requires positive values; AdamW itself accepts zeros.
    const EncoderConfig cfg = toy_encoder_config();
    ToyParams p = make_toy_params(cfg, 3);
    const ToyParams before = p;
    ToyParams g = p;
    Rng rng(8);
    for_each_param(g, "", [&](const std::string&, Tensor& tensor) { tensor = random_normal<float>(tensor.shape(), rng); });
    AdamW opt(t, p);
    opt.step(p, g);
    opt.step(p, g);
    CHECK(opt.steps() == 2);
    const auto a = tensors_of(p);
    const auto b = tensors_of(before);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(testing::bit_equal(*a[i], *b[i]));

    t.learning_rate = 1e-3;
    AdamW moving(t, p);
    moving.step(p, g);
    CHECK(!testing::bit_equal(p.stem.weight, before.stem.weight));
}

TEST_CASE("every enabled parameter receives gradient")
{
    EncoderConfig cfg = toy_encoder_config();
    cfg.gii_to_mid = true;
    const auto scenes = gen_dataset(5, 4);
    CHECK(dead_gradients(make_toy_params(cfg, 4), cfg, scenes).empty());
}

TEST_CASE("training is reproducible and reports divergence")
{
    const EncoderConfig cfg = toy_encoder_config();
    const TrainResult a = train_toy(tiny_train(3), cfg);
    const TrainResult b = train_toy(tiny_train(3), cfg);
    REQUIRE(a.epoch_loss.size() == 2);
    CHECK(a.epoch_loss == b.epoch_loss);
    const auto pa = tensors_of(a.params);
    const auto pb = tensors_of(b.params);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(testing::bit_equal(*pa[i], *pb[i]));

    const auto dir = testing::scratch_dir("toy_train");
    TrainConfig wild = tiny_train(1);
    wild.learning_rate = 1e30;
    CHECK_THROWS_AS(train_toy(wild, cfg, dir / "last.lgp"), TrainError);
    REQUIRE(std::filesystem::exists(dir / "last.lgp"));
    const ParamStore saved = ParamStore::load(dir / "last.lgp");
    bool finite = true;
    for (const auto& e : saved.entries()) finite = finite && all_finite(e.value);
    CHECK(finite);
}

TEST_CASE("default training lowers the loss for seeds 0, 1 and 2")
{
    const Config def = toy_default_config();
    for (std::uint64_t seed : {0, 1, 2}) {
        TrainConfig t = def.train;
        t.seed = seed;
        const TrainResult r = train_toy(t, def.encoder);
        REQUIRE(r.epoch_loss.size() == 20);
        CHECK_MESSAGE(r.epoch_loss.back() < r.epoch_loss.front(), "seed " << seed);
    }
}
