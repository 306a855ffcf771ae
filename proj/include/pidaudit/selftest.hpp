#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pidaudit/gradcheck.hpp"
#include "pidaudit/market_data.hpp"

namespace pidaudit::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Central-difference check of the full tiny model loss
/// (C=16, H=2, layers=2, N=8, 8 bins, no dropout).
GradCheckResult tiny_model_gradcheck(std::uint64_t seed = 7);

/// Largest |<rope(q,m), rope(k,n)> - <rope(q,m+s), rope(k,n+s)>| over random draws.
double rope_shift_error(int draws = 1000, std::uint64_t seed = 11);

/// Largest |dequantize(quantize(x)) - x| over uniform draws in (lo, hi).
double quantizer_roundtrip_error(const QuantizerSpec& spec, int draws = 100000, std::uint64_t seed = 13);
bool quantizer_clamps(const QuantizerSpec& spec);

/// Exact union information (bits) of two copies of a uniform bit, and of XOR.
double copy_system_union();
double xor_system_union();

std::vector<Check> run_all();

}  // namespace pidaudit::selftest
