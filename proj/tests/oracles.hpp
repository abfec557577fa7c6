#pragma once

// Independent reference routines for the tests. Nothing here calls into the
// code under test except for plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

/// Reference cubic evaluated at 1e-40 working precision (mpmath), frozen.
struct ReferencePoint {
  double angle;
  double counts;
};
inline constexpr std::array<ReferencePoint, 10> kReferenceCounts = {{
    {60.0, 484.964},
    {75.0, 497.3975},
    {80.0, 501.942},
    {90.0, 512.981},
    {95.0, 519.9255},
    {100.0, 528.12},
    {105.0, 537.7895},
    {110.0, 549.159},
    {115.0, 562.4535},
    {130.0, 616.137},
}};

/// Naive power-sum evaluation, deliberately not Horner.
inline double power_sum(double c0, double c1, double c2, double c3, double a) {
  return c0 + c1 * a + c2 * std::pow(a, 2) + c3 * std::pow(a, 3);
}

/// Scans a sampled zone trajectory the slow way and counts what the alert
/// machine must emit. `out[i]` says whether sample i is out of zone; samples
/// hold until the next one; the stream ends at `end_ms`.
struct AlertCounts {
  std::size_t exits = 0;
  std::size_t vibrates = 0;
  std::size_t reenters = 0;
  bool operator==(const AlertCounts&) const = default;
};

inline AlertCounts scan_intervals(const std::vector<std::int64_t>& ts, const std::vector<bool>& out,
                                  std::int64_t end_ms, std::int64_t debounce, std::int64_t repeat) {
  AlertCounts c;
  std::size_t i = 0;
  while (i < ts.size()) {
    if (!out[i]) {
      ++i;
      continue;
    }
    const std::int64_t start = ts[i];
    std::size_t j = i;
    while (j < ts.size() && out[j]) ++j;
    const bool closed = j < ts.size();
    const std::int64_t stop = closed ? ts[j] : end_ms;
    const std::int64_t d = stop - start;
    if (d >= debounce) {
      ++c.exits;
      // Count vibrate deadlines one by one instead of using the closed form.
      for (std::int64_t t = start + debounce; t <= stop; t += repeat) ++c.vibrates;
      if (closed) ++c.reenters;
    }
    i = j;
  }
  return c;
}

}  // namespace oracle

#include <variant>

#include "sipo/wire.hpp"

namespace oracle {

inline sipo::wire::Frame random_frame(std::mt19937_64& rng) {
  using namespace sipo::wire;
  switch (rng() % 4) {
    case 0: return SensorData{static_cast<std::uint32_t>(rng()), static_cast<std::uint16_t>(rng() % 1024)};
    case 1: return Vibrate{static_cast<std::uint16_t>(rng())};
    case 2: return Ack{static_cast<std::uint8_t>(1 + rng() % 4)};
    default: return Heartbeat{};
  }
}

/// How many of `expected` are missing from `got`: size minus the longest
/// common subsequence. (Greedy matching undercounts when identical frames,
/// e.g. heartbeats, repeat.)
inline std::size_t frames_lost(const std::vector<sipo::wire::Frame>& expected,
                               const std::vector<sipo::wire::Frame>& got) {
  std::vector<std::vector<std::size_t>> lcs(expected.size() + 1, std::vector<std::size_t>(got.size() + 1, 0));
  for (std::size_t i = 1; i <= expected.size(); ++i) {
    for (std::size_t j = 1; j <= got.size(); ++j) {
      lcs[i][j] = expected[i - 1] == got[j - 1] ? lcs[i - 1][j - 1] + 1 : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    }
  }
  return expected.size() - lcs[expected.size()][got.size()];
}

}  // namespace oracle
