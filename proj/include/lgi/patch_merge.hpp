#pragma once

#include <vector>

#include "lgi/tensor.hpp"

namespace lgi {

// Space-to-depth: (n, c, h, w) -> (n, r*r*c, h/r, w/r). Output channel block
// g*c .. (g+1)*c holds the interleaved sub-grid x[:, :, i::r, j::r] with g = i*r + j.
template <class T>
BasicTensor<T> patch_merge(const BasicTensor<T>& x, int r);

// Exact inverse of patch_merge; also its backward (the map is a permutation).
template <class T>
BasicTensor<T> patch_unmerge(const BasicTensor<T>& y, int r);

// For c input channels: perm[g4] = channel index in patch_merge(patch_merge(x, 2), 2)
// holding the same data as channel g4 of patch_merge(x, 4).
std::vector<std::int64_t> merge4_two_stage_permutation(std::int64_t c);

} // namespace lgi
