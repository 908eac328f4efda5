#pragma once

#include <cstddef>

namespace hetreg::detail {

/// Elementwise tanh over a buffer. Compiled in its own translation unit with
/// the flags that let the loop lower to libmvec's vector kernels; results may
/// differ from std::tanh by a couple of ulp but are deterministic for a given
/// binary.
void tanh_inplace(double* p, std::size_t n);

}  // namespace hetreg::detail
