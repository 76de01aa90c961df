#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "gnssrx/error.hpp"

namespace gnssrx {

inline constexpr std::size_t kChipsPerCode = 1023;
inline constexpr double kChipRateHz = 1.023e6;
inline constexpr double kL1FrequencyHz = 1575.42e6;
inline constexpr int kMaxPrn = 32;

/// GPS L1 C/A spreading code for one PRN. Chip value +1 encodes logic 1.
struct CaCode {
  int prn = 0;
  std::array<std::int8_t, kChipsPerCode> chips{};

  std::int8_t operator[](std::size_t i) const { return chips[i]; }
  friend bool operator==(const CaCode&, const CaCode&) = default;
};

namespace detail {

// G2 phase-selector taps (1-based register stages) for PRN 1..32.
inline constexpr std::array<std::array<int, 2>, kMaxPrn> kG2Taps{{
    {2, 6}, {3, 7}, {4, 8}, {5, 9}, {1, 9}, {2, 10}, {1, 8}, {2, 9},
    {3, 10}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {7, 8}, {8, 9}, {9, 10},
    {1, 4}, {2, 5}, {3, 6}, {4, 7}, {5, 8}, {6, 9}, {1, 3}, {4, 6},
    {5, 7}, {6, 8}, {7, 9}, {8, 10}, {1, 6}, {2, 7}, {3, 8}, {4, 9},
}};

}  // namespace detail

/// Gold code from the two 10-stage registers G1 = 1 + x³ + x¹⁰ and
/// G2 = 1 + x² + x³ + x⁶ + x⁸ + x⁹ + x¹⁰, both seeded with all ones.
inline CaCode generate_ca_code(int prn) {
  if (prn < 1 || prn > kMaxPrn) throw InvalidInput("generate_ca_code: PRN " + std::to_string(prn) + " out of range 1..32");
  std::array<std::uint8_t, 10> g1{}, g2{};
  g1.fill(1);
  g2.fill(1);
  const auto [t1, t2] = detail::kG2Taps[static_cast<std::size_t>(prn - 1)];

  CaCode code;
  code.prn = prn;
  for (std::size_t i = 0; i < kChipsPerCode; ++i) {
    const std::uint8_t g2_out = g2[static_cast<std::size_t>(t1 - 1)] ^ g2[static_cast<std::size_t>(t2 - 1)];
    const std::uint8_t bit = g1[9] ^ g2_out;
    code.chips[i] = bit ? std::int8_t{1} : std::int8_t{-1};

    const std::uint8_t f1 = g1[2] ^ g1[9];
    const std::uint8_t f2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
    for (std::size_t s = 9; s > 0; --s) {
      g1[s] = g1[s - 1];
      g2[s] = g2[s - 1];
    }
    g1[0] = f1;
    g2[0] = f2;
  }
  return code;
}

}  // namespace gnssrx
