#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sipo/errors.hpp"

namespace sipo {

/// Upper bound of the 10-bit ADC the device samples the flex sensor with.
inline constexpr double kMaxCounts = 1023.0;

/// Cubic model of flex-sensor counts as a function of bending angle:
///
///   counts(A) = c3*A^3 + c2*A^2 + c1*A + c0,   A in [angle_min, angle_max]
///
/// The constructor rejects models that are not strictly increasing on their
/// domain, so every live instance is invertible.
class CalibrationModel {
 public:
  struct Coefficients {
    double c0 = 0.0;  // counts
    double c1 = 0.0;  // counts/deg
    double c2 = 0.0;  // counts/deg^2
    double c3 = 0.0;  // counts/deg^3
    bool operator==(const Coefficients&) const = default;
  };

  CalibrationModel(Coefficients coeffs, double angle_min, double angle_max);

  const Coefficients& coefficients() const { return coeffs_; }
  double angle_min() const { return angle_min_; }
  double angle_max() const { return angle_max_; }

  /// Counts at the domain bounds.
  double counts_min() const { return evaluate(angle_min_); }
  double counts_max() const { return evaluate(angle_max_); }

  /// Horner evaluation without the domain check.
  double evaluate(double angle) const {
    return ((coeffs_.c3 * angle + coeffs_.c2) * angle + coeffs_.c1) * angle + coeffs_.c0;
  }

  /// d(counts)/d(angle).
  double slope(double angle) const {
    return (3.0 * coeffs_.c3 * angle + 2.0 * coeffs_.c2) * angle + coeffs_.c1;
  }

  bool contains(double angle) const { return angle >= angle_min_ && angle <= angle_max_; }

  bool operator==(const CalibrationModel&) const = default;

 private:
  Coefficients coeffs_;
  double angle_min_;
  double angle_max_;
};

/// Thrown by fit_cubic when least squares lands on a cubic that is not
/// increasing over the sample span.
class NonMonotoneFitError : public Error {
 public:
  NonMonotoneFitError(const std::string& what, CalibrationModel::Coefficients coeffs)
      : Error(what), coeffs_(coeffs) {}
  const CalibrationModel::Coefficients& coefficients() const { return coeffs_; }

 private:
  CalibrationModel::Coefficients coeffs_;
};

struct CalibrationSample {
  double angle = 0.0;         // degrees
  double sensor_value = 0.0;  // counts
};

/// Smallest derivative of the cubic over [lo, hi].
double min_slope(const CalibrationModel::Coefficients& c, double lo, double hi);

/// The lower-thoracic model reported for the prototype, valid on [60, 130] deg.
CalibrationModel paper_model();

/// Counts at `angle`; throws DomainError if the angle is outside the model domain.
double eval_forward(const CalibrationModel& model, double angle);

/// Angle whose forward value equals `sensor_value`, found by bisection to
/// well under 1e-6 deg. Throws RangeError outside [counts_min, counts_max].
double invert(const CalibrationModel& model, double sensor_value);

/// Like invert, but clamps out-of-range values to the nearest domain bound.
/// `clamped` reports whether clamping happened.
double invert_clamped(const CalibrationModel& model, double sensor_value, bool& clamped);

/// Least-squares cubic through the samples. The regression runs on a
/// centered and scaled angle and is mapped back to raw-angle coefficients.
/// The fitted domain is the sample angle span.
CalibrationModel fit_cubic(std::span<const CalibrationSample> samples);

/// Root-mean-square of (sample - model) over the samples, no domain check.
double residual_rms(const CalibrationModel& model, std::span<const CalibrationSample> samples);

// -- file formats -----------------------------------------------------------

/// CSV with header `angle_deg,sensor_counts`.
std::vector<CalibrationSample> read_samples_csv(std::istream& in);
std::vector<CalibrationSample> load_samples_csv(const std::string& path);
void write_samples_csv(std::ostream& out, std::span<const CalibrationSample> samples);

/// Flat `key=value` record: c0, c1, c2, c3, angle_min, angle_max.
void write_model(std::ostream& out, const CalibrationModel& model);
CalibrationModel read_model(std::istream& in);
CalibrationModel load_model(const std::string& path);
void save_model(const std::string& path, const CalibrationModel& model);

}  // namespace sipo
