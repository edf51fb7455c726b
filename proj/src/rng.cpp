#include "pyag/rng.hpp"

#include <cmath>
#include <numbers>

namespace pyag {

// Box-Muller, one draw per call so the stream position is a pure function of call count.
double normal(Rng& rng) {
    const double u1 = 1.0 - uniform01(rng);  // (0, 1]
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pyag
