#pragma once

#include <cstdint>

namespace textar {

// Dimensionless page coordinates in [0,1]^2.
struct NormalizedPosition {
  double x = 0.0;
  double y = 0.0;
};

// T1: 0=normal, 1=bold, 2=italic, 3=bold&italic
// T2: 0=normal, 1=underline, 2=strikeout, 3=underline&strikeout
struct AttributeLabel {
  int t1 = 0;
  int t2 = 0;

  bool operator==(const AttributeLabel&) const = default;

  // 16-way combination index for the single-head variant
  int combined() const { return 4 * t1 + t2; }
  static AttributeLabel from_combined(int idx) { return {idx / 4, idx % 4}; }
};

inline constexpr int kNumClasses = 4;
inline constexpr int kNumCombined = 16;

}  // namespace textar
