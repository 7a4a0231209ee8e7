#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "kinface/numerics/tensor.hpp"

namespace kinface::caae {

inline constexpr std::size_t kAgeGroups = 10;
inline constexpr std::size_t kGenderBlock = 10;
inline constexpr std::size_t kGenderRepeats = 5;
inline constexpr std::size_t kLabelDim = kAgeGroups + kGenderBlock;

// Upper bound (inclusive) of each age group in years.
inline constexpr std::array<int, kAgeGroups> kAgeGroupUpper{5, 10, 15, 20, 30, 40, 50, 60, 70, 80};

/// Age group in 0..9; ages past the last bound fall into the last group.
inline int age_group_for(int age_years) {
  if (age_years < 0) throw std::invalid_argument("age must be non-negative, got " + std::to_string(age_years));
  for (std::size_t g = 0; g < kAgeGroups; ++g) {
    if (age_years <= kAgeGroupUpper[g]) return static_cast<int>(g);
  }
  return static_cast<int>(kAgeGroups - 1);
}

/// A representative age for a group, the midpoint of its bounds.
inline int representative_age(int age_group) {
  if (age_group < 0 || age_group >= static_cast<int>(kAgeGroups))
    throw std::invalid_argument("age group out of range: " + std::to_string(age_group));
  const int lo = age_group == 0 ? 0 : kAgeGroupUpper[age_group - 1] + 1;
  return (lo + kAgeGroupUpper[age_group]) / 2;
}

/**
 * Age/gender conditioning vector for the decoder.
 *
 * Encoded as a 10-way age one-hot followed by a 10-dim gender block, which
 * is the 2-way gender one-hot repeated five times.
 */
struct ConditionLabel {
  int age_group = 0;
  int gender = 0;

  template <Real T = float>
  std::array<T, kLabelDim> encoded() const {
    std::array<T, kLabelDim> v{};
    v[static_cast<std::size_t>(age_group)] = T{1};
    for (std::size_t r = 0; r < kGenderRepeats; ++r) v[kAgeGroups + 2 * r + static_cast<std::size_t>(gender)] = T{1};
    return v;
  }

  friend bool operator==(const ConditionLabel&, const ConditionLabel&) = default;
};

inline ConditionLabel make_label(int age_group, int gender) {
  if (age_group < 0 || age_group >= static_cast<int>(kAgeGroups))
    throw std::invalid_argument("age group out of range: " + std::to_string(age_group));
  if (gender != 0 && gender != 1) throw std::invalid_argument("gender must be 0 or 1, got " + std::to_string(gender));
  return ConditionLabel{age_group, gender};
}

inline ConditionLabel encode_label(int age_years, int gender) { return make_label(age_group_for(age_years), gender); }

/// Stacks labels into a [B, 20] tensor.
template <Real T>
Tensor<T> label_batch(std::span<const ConditionLabel> labels) {
  Tensor<T> out({labels.size(), kLabelDim});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto e = labels[i].encoded<T>();
    std::copy(e.begin(), e.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * kLabelDim));
  }
  return out;
}

}  // namespace kinface::caae
