// Single/double precision abstraction and the thresholds derived from
// machine epsilon. Every other module obtains its precision-dependent
// constants from here.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace precopt {

enum class PrecisionMode { Single, Double };

/// Maps a working scalar type to its PrecisionMode. The scalar template
/// parameter used throughout the library *is* the precision mode; this
/// trait keeps the two views consistent.
template <typename S>
inline constexpr PrecisionMode precision_of = PrecisionMode::Double;
template <>
inline constexpr PrecisionMode precision_of<float> = PrecisionMode::Single;

constexpr std::string_view to_string(PrecisionMode mode) {
    return mode == PrecisionMode::Single ? "single" : "double";
}

inline PrecisionMode precision_from_string(std::string_view name) {
    if (name == "single") return PrecisionMode::Single;
    if (name == "double") return PrecisionMode::Double;
    throw std::invalid_argument("unknown precision mode: " + std::string(name));
}

/// Smallest eps with 1 + eps != 1 in the mode's arithmetic.
constexpr double machine_epsilon(PrecisionMode mode) {
    return mode == PrecisionMode::Single
               ? static_cast<double>(std::numeric_limits<float>::epsilon())
               : std::numeric_limits<double>::epsilon();
}

/// sqrt(machine epsilon): the lowest line-search tolerance that can still
/// resolve objective differences. Tolerance requests below it are clamped.
inline double tolerance_floor(PrecisionMode mode) {
    return std::sqrt(machine_epsilon(mode));
}

inline double clamp_tolerance(double requested, PrecisionMode mode) {
    return std::max(requested, tolerance_floor(mode));
}

/// Default threshold for declaring the gradient vector converged to zero.
constexpr double default_gradient_threshold(PrecisionMode mode) {
    return mode == PrecisionMode::Single ? 1e-7 : 1e-14;
}

/// Rounds a double-width value to the mode's width (identity for Double),
/// round-to-nearest-even. Overflow to infinity is an error, not a value.
inline double demote(double value, PrecisionMode mode) {
    if (mode == PrecisionMode::Double) return value;
    const float narrowed = static_cast<float>(value);
    if (!std::isfinite(narrowed) && std::isfinite(value))
        throw std::overflow_error("demote: value overflows single precision");
    return static_cast<double>(narrowed);
}

}  // namespace precopt
