#pragma once

// Batch calibration kernels. Each kernel exists twice: a plain loop in
// `serial` that serves as the reference, and an OpenMP version in `parallel`
// that must produce bit-identical output (every element is computed by the
// same scalar routine, only the iteration is split).

#include <cstddef>
#include <span>

#include "sipo/calibration.hpp"

namespace sipo::kernels {

namespace serial {

void forward(const CalibrationModel& model, std::span<const double> angles, std::span<double> out);

/// Returns how many inputs were outside the invertible range (those are clamped).
std::size_t invert(const CalibrationModel& model, std::span<const double> counts,
                   std::span<double> out);

double sum_squared_residual(const CalibrationModel& model,
                            std::span<const CalibrationSample> samples);

}  // namespace serial

namespace parallel {

void forward(const CalibrationModel& model, std::span<const double> angles, std::span<double> out);

std::size_t invert(const CalibrationModel& model, std::span<const double> counts,
                   std::span<double> out);

/// Reduction order differs from the serial loop, so this one agrees only to rounding.
double sum_squared_residual(const CalibrationModel& model,
                            std::span<const CalibrationSample> samples);

}  // namespace parallel

/// Threads OpenMP will use for the parallel kernels.
int max_threads();

}  // namespace sipo::kernels
