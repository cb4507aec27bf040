#pragma once

#include "lgi/tensor.hpp"

namespace lgi {

// Bilinear interpolation with half-pixel centers (align_corners = false): the
// source coordinate of output index o is (o + 0.5) * in / out - 0.5, clamped
// below at 0. Same-size requests return the input unchanged. Each output is
// clamped to the envelope of its four taps.
template <class T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w);

// Adjoint of bilinear_resize: scatters grad_out back onto an (in_h, in_w) grid.
template <class T>
BasicTensor<T> bilinear_resize_backward(const BasicTensor<T>& grad_out, std::int64_t in_h, std::int64_t in_w);

} // namespace lgi
