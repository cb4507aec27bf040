#include "lgi/patch_merge.hpp"

namespace lgi {

namespace {

void check_factor(const Shape& s, int r, const char* op)
{
    if (r != 2 && r != 4) {
        throw ShapeError(std::string(op) + ": reduction factor must be 2 or 4, got " + std::to_string(r));
    }
    if (s.h % r != 0 || s.w % r != 0) {
        throw ShapeError(std::string(op) + ": spatial dims of " + s.str() + " not divisible by " + std::to_string(r));
    }
}

} // namespace

template <class T>
BasicTensor<T> patch_merge(const BasicTensor<T>& x, int r)
{
    const Shape s = x.shape();
    check_factor(s, r, "patch_merge");
    const std::int64_t ho = s.h / r;
    const std::int64_t wo = s.w / r;
    BasicTensor<T> out({s.n, s.c * r * r, ho, wo});
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < r; ++j) {
                const std::int64_t g = i * r + j;
                for (std::int64_t c = 0; c < s.c; ++c) {
                    const T* src = x.plane(n, c);
                    T* dst = out.plane(n, g * s.c + c);
                    for (std::int64_t y = 0; y < ho; ++y) {
                        for (std::int64_t xx = 0; xx < wo; ++xx) {
                            dst[y * wo + xx] = src[(y * r + i) * s.w + xx * r + j];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <class T>
BasicTensor<T> patch_unmerge(const BasicTensor<T>& y, int r)
{
    const Shape s = y.shape();
    if (r != 2 && r != 4) {
        throw ShapeError("patch_unmerge: reduction factor must be 2 or 4, got " + std::to_string(r));
    }
    if (s.c % (r * r) != 0) {
        throw ShapeError("patch_unmerge: channels of " + s.str() + " not divisible by " + std::to_string(r * r));
    }
    const std::int64_t c = s.c / (r * r);
    const std::int64_t h = s.h * r;
    const std::int64_t w = s.w * r;
    BasicTensor<T> out({s.n, c, h, w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < r; ++j) {
                const std::int64_t g = i * r + j;
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const T* src = y.plane(n, g * c + ch);
                    T* dst = out.plane(n, ch);
                    for (std::int64_t yy = 0; yy < s.h; ++yy) {
                        for (std::int64_t xx = 0; xx < s.w; ++xx) {
                            dst[(yy * r + i) * w + xx * r + j] = src[yy * s.w + xx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

std::vector<std::int64_t> merge4_two_stage_permutation(std::int64_t c)
{
    // Direct r=4: offset (i, j) with i = 2*i2 + i1, j = 2*j2 + j1 lands in block i*4 + j.
    // Two-stage: inner block g1 = i1*2 + j1 (width c), outer block g2 = i2*2 + j2 (width 4c).
    std::vector<std::int64_t> perm(static_cast<std::size_t>(16 * c));
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const int i1 = i % 2, i2 = i / 2, j1 = j % 2, j2 = j / 2;
            const std::int64_t g1 = i1 * 2 + j1;
            const std::int64_t g2 = i2 * 2 + j2;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                perm[static_cast<std::size_t>((i * 4 + j) * c + ch)] = g2 * 4 * c + g1 * c + ch;
            }
        }
    }
    return perm;
}

template BasicTensor<float> patch_merge<float>(const BasicTensor<float>&, int);
template BasicTensor<double> patch_merge<double>(const BasicTensor<double>&, int);
template BasicTensor<float> patch_unmerge<float>(const BasicTensor<float>&, int);
template BasicTensor<double> patch_unmerge<double>(const BasicTensor<double>&, int);

} // namespace lgi
