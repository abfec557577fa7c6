#include "sipo/kernels.hpp"

#include <omp.h>

#include <cstdint>

namespace sipo::kernels {

namespace {

void check_sizes(std::size_t in, std::size_t out) {
  if (in != out) throw InputError("kernel output span size does not match input");
}

}  // namespace

namespace serial {

void forward(const CalibrationModel& model, std::span<const double> angles, std::span<double> out) {
  check_sizes(angles.size(), out.size());
  for (std::size_t i = 0; i < angles.size(); ++i) out[i] = model.evaluate(angles[i]);
}

std::size_t invert(const CalibrationModel& model, std::span<const double> counts,
                   std::span<double> out) {
  check_sizes(counts.size(), out.size());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    bool c = false;
    out[i] = invert_clamped(model, counts[i], c);
    clamped += c ? 1 : 0;
  }
  return clamped;
}

double sum_squared_residual(const CalibrationModel& model,
                            std::span<const CalibrationSample> samples) {
  double acc = 0.0;
  for (const auto& s : samples) {
    const double r = s.sensor_value - model.evaluate(s.angle);
    acc += r * r;
  }
  return acc;
}

}  // namespace serial

namespace parallel {

void forward(const CalibrationModel& model, std::span<const double> angles, std::span<double> out) {
  check_sizes(angles.size(), out.size());
  const auto n = static_cast<std::int64_t>(angles.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = model.evaluate(angles[i]);
}

std::size_t invert(const CalibrationModel& model, std::span<const double> counts,
                   std::span<double> out) {
  check_sizes(counts.size(), out.size());
  const auto n = static_cast<std::int64_t>(counts.size());
  std::int64_t clamped = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamped)
  for (std::int64_t i = 0; i < n; ++i) {
    bool c = false;
    out[i] = invert_clamped(model, counts[i], c);
    clamped += c ? 1 : 0;
  }
  return static_cast<std::size_t>(clamped);
}

double sum_squared_residual(const CalibrationModel& model,
                            std::span<const CalibrationSample> samples) {
  const auto n = static_cast<std::int64_t>(samples.size());
  double acc = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : acc)
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = samples[i].sensor_value - model.evaluate(samples[i].angle);
    acc += r * r;
  }
  return acc;
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }

}  // namespace sipo::kernels
