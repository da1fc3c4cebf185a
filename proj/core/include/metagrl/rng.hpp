#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace metagrl {

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

// Per-component seed stream: splitmix64(global ^ fnv1a64(component)).
// Adding a component never perturbs the streams of existing ones.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component);
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component, std::uint64_t index);

inline Rng make_rng(std::uint64_t global_seed, std::string_view component) {
    return Rng(derive_seed(global_seed, component));
}

}  // namespace metagrl
