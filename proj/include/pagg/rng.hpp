#ifndef PAGG_RNG_HPP
#define PAGG_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace pagg {

using Rng = std::mt19937_64;

// Derives an independent per-purpose seed from a global seed and a label, so
// that adding randomness to one stage does not perturb the others.
uint64_t DeriveSeed(uint64_t seed, std::string_view label);

}  // namespace pagg

#endif  // PAGG_RNG_HPP
