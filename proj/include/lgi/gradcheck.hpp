#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lgi/tensor.hpp"

namespace lgi {

inline constexpr double kRelErrFloor = 1e-12;
inline constexpr double kDefaultStep = 1e-4;
// Noise floor N = kNoiseFactor * eps * (M + 1) / h, M the sum of absolute terms
// of the objective. A coordinate whose gradient is below N / tolerance cannot be
// resolved relatively; it passes when |analytic - numeric| <= N and does not
// count against the tolerance.
inline constexpr double kNoiseFactor = 100.0;

// |a - n| / max(|a|, |n|, 1e-12)
double rel_error(double analytic, double numeric);

using ScalarFn = std::function<double()>;

// Central difference at one coordinate with h = step * (|x| + 1). `x` is
// perturbed in place and restored. Throws NumericError if f is not finite.
double fd_coordinate(const ScalarFn& f, double& x, double step = kDefaultStep);

// Central-difference gradient of f with respect to every element of `at`.
TensorD fd_gradient(const ScalarFn& f, TensorD& at, double step = kDefaultStep);

struct TensorCheck {
    std::string name;
    double max_rel_err = 0.0;        // coordinates resolvable at the tolerance
    double max_raw_rel_err = 0.0;    // all checked coordinates
    std::int64_t checked = 0;
    std::int64_t skipped = 0; // coordinates whose +-h probes changed ReLU pattern
    std::int64_t noise_limited = 0; // too small to resolve, agreed within rounding noise
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradReport {
    std::string op;
    std::vector<TensorCheck> tensors;
    double max_rel_err = 0.0;
    double max_raw_rel_err = 0.0;
    double tolerance = 0.0;
    double step = kDefaultStep;
    bool passed = false;
};

// One evaluation of a check objective sum(g * y).
struct Probe {
    double value = 0.0;
    double magnitude = 0.0;      // sum |g * y|, sets the rounding-noise floor
    std::uint64_t signature = 0; // ReLU activation pattern; 0 for smooth ops
};

Probe make_probe(const TensorD& y, const TensorD& g, std::uint64_t signature = 0);

// One gradient-check problem. `analytic` returns gradients in `wrt` order.
struct GradCase {
    std::string op;
    bool primitive = true;
    std::vector<std::pair<std::string, TensorD*>> wrt;
    std::function<Probe()> eval;
    std::function<std::vector<TensorD>()> analytic;
    std::shared_ptr<void> state; // keeps the tensors behind `wrt` alive
    int max_coords = 64;          // per tensor; all coordinates when numel is smaller
};

// Compares analytic and numeric gradients on (a sample of) every coordinate.
GradReport run_case(const GradCase& c, double tolerance, std::uint64_t seed, double step = kDefaultStep);

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double tolerance = 1e-5;  // composite modules
    double primitive_tolerance = 1e-6;
    double step = kDefaultStep;
};

// Builds every registered case for a seed.
std::vector<GradCase> registered_cases(std::uint64_t seed);

std::vector<GradReport> check_all(const GradcheckOptions& opts);

bool all_passed(const std::vector<GradReport>& reports);
std::string format_report(const GradReport& r);
std::string reports_to_json(const std::vector<GradReport>& reports);

} // namespace lgi
