#pragma once

// Shared helpers for the unit suites.

#include "tcsk/kahler.hpp"

namespace tcsk_test {

/** Random band-limited potential scaled (by halving) into the positivity cone. */
inline tcsk::ScalarField safe_phi(const tcsk::TorusGrid& g, int max_mode,
                                  double amplitude, std::uint64_t seed) {
  auto f = tcsk::random_band_limited(g, max_mode, amplitude, seed);
  for (int attempt = 0; attempt < 40; ++attempt) {
    if (tcsk::try_assemble(g, f).valid) return f;
    f = 0.5 * f;
  }
  throw tcsk::precondition_error("safe_phi: could not reach the positivity cone");
}

} // namespace tcsk_test
