#pragma once

// Random small LSE / GII problems shared by unit and acceptance tests.

#include "lgi/gii.hpp"
#include "lgi/lse.hpp"

namespace testing {

struct LseInstance {
    lgi::TensorD x_low, x_high;
    lgi::LseParams<double> params;
};

struct GiiInstance {
    lgi::TensorD x_low, x_high;
    lgi::GiiParams<double> params;
};

inline void randomize_bias(lgi::ConvParams<double>& c, lgi::Rng& rng)
{
    c.bias = lgi::random_normal<double>(c.bias.shape(), rng, 0.3);
}

// Varies batch, widths, spatial size, reduction, split and gate.
inline LseInstance random_lse_instance(lgi::Rng& rng)
{
    const int r = rng.uniform_int(0, 1) == 0 ? 2 : 4;
    const auto n = rng.uniform_int(1, 2), cl = rng.uniform_int(1, 3), ch = rng.uniform_int(2, 5);
    const auto hh = rng.uniform_int(1, 3), wh = rng.uniform_int(1, 3);
    const auto k = rng.uniform_int(1, ch - 1);
    const auto gate = rng.uniform_int(0, 1) == 0 ? lgi::GateActivation::none : lgi::GateActivation::sigmoid;
    LseInstance inst{lgi::random_normal<double>({n, cl, hh * r, wh * r}, rng),
                     lgi::random_normal<double>({n, ch, hh, wh}, rng),
                     lgi::make_lse<double>(cl, ch, k, r, gate, rng)};
    randomize_bias(inst.params.pre_conv, rng);
    randomize_bias(inst.params.post_conv, rng);
    return inst;
}

inline GiiInstance random_gii_instance(lgi::Rng& rng)
{
    const auto n = rng.uniform_int(1, 2), cl = rng.uniform_int(1, 3), ch = rng.uniform_int(1, 3);
    const auto hh = rng.uniform_int(1, 3), wh = rng.uniform_int(1, 3);
    const auto fy = rng.uniform_int(1, 3), fx = rng.uniform_int(1, 3);
    GiiInstance inst{lgi::random_normal<double>({n, cl, hh * fy, wh * fx}, rng),
                     lgi::random_normal<double>({n, ch, hh, wh}, rng), lgi::make_gii<double>(cl, ch, rng)};
    for (lgi::ConvParams<double>* c : {&inst.params.weight_conv, &inst.params.info_conv, &inst.params.low_conv,
                                        &inst.params.rep.branch3x3, &inst.params.rep.branch1x1})
        randomize_bias(*c, rng);
    return inst;
}

} // namespace testing
