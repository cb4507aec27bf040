#include <cmath>
#include <limits>
#include <memory>

#include "doctest.h"

#include "lgi/gradcheck.hpp"

using namespace lgi;

namespace {

double sum(const TensorD& x)
{
    double s = 0.0;
    for (double v : x.data()) s += v;
    return s;
}

// f(x) = sum(x^3); analytic gradient 3x^2, optionally scaled to simulate a bug.
GradCase cube_case(double analytic_scale)
{
    Rng rng(3);
    auto x = std::make_shared<TensorD>(random_normal<double>({1, 2, 3, 3}, rng));
    GradCase c;
    c.op = "cube";
    c.wrt = {{"x", x.get()}};
    c.eval = [x] {
        TensorD y = mul(mul(*x, *x), *x);
        return make_probe(y, TensorD::full(y.shape(), 1.0));
    };
    c.analytic = [x, analytic_scale] { return std::vector<TensorD>{scale(mul(*x, *x), 3.0 * analytic_scale)}; };
    c.state = x;
    return c;
}

} // namespace

TEST_CASE("relative error definition")
{
    CHECK(rel_error(1.0, 1.0) == 0.0);
    CHECK(rel_error(2.0, 1.0) == 0.5);
    CHECK(rel_error(0.0, 0.0) == 0.0);
    CHECK(rel_error(1e-13, 0.0) == doctest::Approx(0.1));
}

TEST_CASE("fd_gradient closed forms")
{
    Rng rng(1);
    TensorD x = random_normal<double>({1, 1, 3, 4}, rng);
    const TensorD g_sum = fd_gradient([&] { return sum(x); }, x);
    for (double v : g_sum.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    TensorD ones = TensorD::full({1, 1, 2, 3}, 1.0);
    const TensorD g_sq = fd_gradient([&] { return sum(mul(ones, ones)); }, ones, 1e-5);
    for (double v : g_sq.data()) CHECK(std::abs(v - 2.0) < 1e-8);

    TensorD z = random_normal<double>({1, 1, 2, 5}, rng);
    const TensorD g_sig = fd_gradient([&] { return sum(sigmoid(z)); }, z);
    for (std::int64_t i = 0; i < z.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-z[i]));
        CHECK(g_sig[i] == doctest::Approx(s * (1.0 - s)).epsilon(1e-8));
    }
    // x is restored after probing.
    const TensorD before = x;
    fd_gradient([&] { return sum(x); }, x);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(x[i] == before[i]);
}

TEST_CASE("fd_gradient rejects non-finite objectives and bad steps")
{
    TensorD x = TensorD::full({1, 1, 1, 2}, 1.0);
    CHECK_THROWS_AS(fd_gradient([] { return std::numeric_limits<double>::quiet_NaN(); }, x), NumericError);
    CHECK_THROWS_AS(fd_gradient([&] { return sum(x); }, x, 0.0), NumericError);
}

TEST_CASE("run_case accepts a correct backward and rejects a corrupted one")
{
    const GradReport good = run_case(cube_case(1.0), 1e-6, 0);
    CHECK(good.passed);
    CHECK(good.tolerance == 1e-6);
    REQUIRE(good.tensors.size() == 1);
    CHECK(good.tensors[0].checked == 18);

    const GradReport bad = run_case(cube_case(1.01), 1e-6, 0);
    CHECK(!bad.passed);
    CHECK(bad.max_rel_err > 1e-3);
    CHECK(format_report(bad).find("FAIL") != std::string::npos);
}

TEST_CASE("registered cases cover every differentiable op and module")
{
    const auto cases = registered_cases(0);
    std::vector<std::string> ops;
    for (const auto& c : cases) ops.push_back(c.op);
    for (const char* want : {"conv2d", "patch_merge.r2", "patch_merge.r4", "bilinear_resize", "layer_norm", "gelu",
                             "mhsa_layer", "rep_block.identity", "lse_forward.r2", "lse_forward.r4", "gii_forward",
                             "encoder_forward"}) {
        const bool found = std::any_of(ops.begin(), ops.end(), [&](const std::string& o) { return o.rfind(want, 0) == 0; });
        CHECK_MESSAGE(found, want);
    }
}

TEST_CASE("module cases pass and reports are deterministic")
{
    for (const char* want : {"lse_forward.r2", "gii_forward"}) {
        std::vector<GradReport> runs;
        for (int rep = 0; rep < 2; ++rep) {
            for (const auto& c : registered_cases(4)) {
                if (c.op == want) runs.push_back(run_case(c, 1e-5, 4));
            }
        }
        REQUIRE(runs.size() == 2);
        CHECK_MESSAGE(runs[0].passed, want);
        CHECK(runs[0].max_raw_rel_err == runs[1].max_raw_rel_err);
        CHECK(reports_to_json({runs[0]}) == reports_to_json({runs[1]}));
    }
}
