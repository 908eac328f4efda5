// Built with -ffast-math -fopenmp-simd (see CMakeLists) so the loop below
// vectorizes through libmvec. Nothing else may live in this translation unit:
// fast-math semantics must not leak into the rest of the library.

#include "hetreg/simd_math.hpp"

#include <cmath>  // brings in the vector-variant declarations

namespace hetreg::detail {

void tanh_inplace(double* p, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = __builtin_tanh(p[i]);
    }
}

}  // namespace hetreg::detail
