#include "splat4d/rng.hpp"

#include <cmath>

namespace splat4d {

uint64_t subsystem_seed(uint64_t top_seed, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&h](uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) eat(static_cast<uint8_t>(top_seed >> (8 * i)));
  for (char c : name) eat(static_cast<uint8_t>(c));
  return h;
}

}  // namespace splat4d
