#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hppi {

// Fine activity labels. The enum order is the fixed tie-break order used
// when assigning majority labels to windows.
enum class FineLabel : std::uint8_t { A1 = 0, A2, A3, A4, B1, B2, C1 };

// Coarse groups: A = Moving, B = Stationary, C = Cycling.
enum class CoarseLabel : std::uint8_t { A = 0, B, C };

inline constexpr std::size_t kNumFine = 7;
inline constexpr std::size_t kNumCoarse = 3;

inline constexpr std::array<FineLabel, kNumFine> kAllFine = {
    FineLabel::A1, FineLabel::A2, FineLabel::A3, FineLabel::A4,
    FineLabel::B1, FineLabel::B2, FineLabel::C1};

inline CoarseLabel coarse_of(FineLabel f) {
  switch (f) {
    case FineLabel::A1:
    case FineLabel::A2:
    case FineLabel::A3:
    case FineLabel::A4:
      return CoarseLabel::A;
    case FineLabel::B1:
    case FineLabel::B2:
      return CoarseLabel::B;
    case FineLabel::C1:
      return CoarseLabel::C;
  }
  throw std::invalid_argument("coarse_of: bad fine label");
}

inline std::string_view to_string(FineLabel f) {
  static constexpr std::array<std::string_view, kNumFine> names = {
      "A1", "A2", "A3", "A4", "B1", "B2", "C1"};
  return names[static_cast<std::size_t>(f)];
}

inline std::string_view to_string(CoarseLabel c) {
  static constexpr std::array<std::string_view, kNumCoarse> names = {"A", "B", "C"};
  return names[static_cast<std::size_t>(c)];
}

inline FineLabel parse_fine_label(std::string_view s) {
  for (FineLabel f : kAllFine)
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown activity label: " + std::string(s));
}

// Index of a fine A-class label within the 4-way PLMN output (A1..A4).
inline int a_class_index(FineLabel f) {
  int i = static_cast<int>(f);
  if (i > 3) throw std::invalid_argument("a_class_index: not an A label");
  return i;
}

// Index of a B-class label within the 2-way Stationary output (B1, B2).
inline int b_class_index(FineLabel f) {
  if (f == FineLabel::B1) return 0;
  if (f == FineLabel::B2) return 1;
  throw std::invalid_argument("b_class_index: not a B label");
}

}  // namespace hppi
