#include "sipo/calibration.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "sipo/text.hpp"

namespace sipo {

namespace {

std::string describe(const CalibrationModel::Coefficients& c) {
  std::ostringstream os;
  os << "c0=" << text::format_double(c.c0) << " c1=" << text::format_double(c.c1)
     << " c2=" << text::format_double(c.c2) << " c3=" << text::format_double(c.c3);
  return os.str();
}

bool finite(const CalibrationModel::Coefficients& c) {
  return std::isfinite(c.c0) && std::isfinite(c.c1) && std::isfinite(c.c2) && std::isfinite(c.c3);
}

}  // namespace

double min_slope(const CalibrationModel::Coefficients& c, double lo, double hi) {
  auto d = [&](double a) { return (3.0 * c.c3 * a + 2.0 * c.c2) * a + c.c1; };
  double m = std::min(d(lo), d(hi));
  // The derivative is a parabola; its interior minimum only exists when it opens upward.
  if (c.c3 > 0.0) {
    double vertex = -c.c2 / (3.0 * c.c3);
    if (vertex > lo && vertex < hi) m = std::min(m, d(vertex));
  }
  return m;
}

CalibrationModel::CalibrationModel(Coefficients coeffs, double angle_min, double angle_max)
    : coeffs_(coeffs), angle_min_(angle_min), angle_max_(angle_max) {
  if (!std::isfinite(angle_min) || !std::isfinite(angle_max) || !(angle_min < angle_max)) {
    throw InputError("calibration domain requires angle_min < angle_max, got [" +
                     text::format_double(angle_min) + ", " + text::format_double(angle_max) + "]");
  }
  if (!finite(coeffs)) throw InputError("calibration coefficients must be finite");
  if (!(min_slope(coeffs, angle_min, angle_max) > 0.0)) {
    throw InputError("calibration model is not strictly increasing on [" +
                     text::format_double(angle_min) + ", " + text::format_double(angle_max) +
                     "]: " + describe(coeffs));
  }
}

CalibrationModel paper_model() {
  return CalibrationModel({.c0 = 345.23, .c1 = 4.8789, .c2 = -0.0605, .c3 = 0.0003}, 60.0, 130.0);
}

double eval_forward(const CalibrationModel& model, double angle) {
  if (!(angle >= model.angle_min())) {
    throw DomainError("angle " + text::format_double(angle) + " deg is below angle_min " +
                      text::format_double(model.angle_min()));
  }
  if (!(angle <= model.angle_max())) {
    throw DomainError("angle " + text::format_double(angle) + " deg is above angle_max " +
                      text::format_double(model.angle_max()));
  }
  return model.evaluate(angle);
}

namespace {

double bisect(const CalibrationModel& model, double target) {
  double lo = model.angle_min();
  double hi = model.angle_max();
  if (target <= model.counts_min()) return lo;
  if (target >= model.counts_max()) return hi;
  // 100 halvings reach adjacent doubles long before the cap on any sane domain.
  for (int i = 0; i < 100; ++i) {
    double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (model.evaluate(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-12) break;
  }
  return lo + 0.5 * (hi - lo);
}

}  // namespace

double invert(const CalibrationModel& model, double sensor_value) {
  const double lo = model.counts_min();
  const double hi = model.counts_max();
  if (!std::isfinite(sensor_value) || sensor_value < lo || sensor_value > hi) {
    throw RangeError("sensor value " + text::format_double(sensor_value) +
                     " outside invertible range [" + text::format_double(lo) + ", " +
                     text::format_double(hi) + "]");
  }
  return bisect(model, sensor_value);
}

double invert_clamped(const CalibrationModel& model, double sensor_value, bool& clamped) {
  clamped = sensor_value < model.counts_min() || sensor_value > model.counts_max();
  return bisect(model, sensor_value);
}

CalibrationModel fit_cubic(std::span<const CalibrationSample> samples) {
  std::vector<double> angles;
  angles.reserve(samples.size());
  for (const auto& s : samples) {
    if (!std::isfinite(s.angle)) throw InputError("calibration sample angle must be finite");
    if (!std::isfinite(s.sensor_value) || s.sensor_value < 0.0 || s.sensor_value > kMaxCounts) {
      throw InputError("calibration sample value " + text::format_double(s.sensor_value) +
                       " outside [0, 1023]");
    }
    angles.push_back(s.angle);
  }
  std::sort(angles.begin(), angles.end());
  auto distinct = std::unique(angles.begin(), angles.end()) - angles.begin();
  if (samples.size() < 4 || distinct < 4) {
    throw InsufficientDataError("cubic fit needs at least 4 distinct angles, got " +
                                std::to_string(distinct) + " (" + std::to_string(samples.size()) +
                                " samples)");
  }

  const double lo = angles.front();
  const double hi = angles[distinct - 1];
  const double center = 0.5 * (lo + hi);
  const double scale = 0.5 * (hi - lo);

  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = (samples[i].angle - center) / scale;
    design(i, 0) = 1.0;
    design(i, 1) = x;
    design(i, 2) = x * x;
    design(i, 3) = x * x * x;
    y(i) = samples[i].sensor_value;
  }
  const Eigen::Vector4d b = design.colPivHouseholderQr().solve(y);

  // Undo the scaling: q(u) = d0 + d1 u + d2 u^2 + d3 u^3 with u = A - center.
  const double d0 = b(0);
  const double d1 = b(1) / scale;
  const double d2 = b(2) / (scale * scale);
  const double d3 = b(3) / (scale * scale * scale);
  // Undo the shift.
  const double m = center;
  CalibrationModel::Coefficients c;
  c.c3 = d3;
  c.c2 = d2 - 3.0 * d3 * m;
  c.c1 = d1 - 2.0 * d2 * m + 3.0 * d3 * m * m;
  c.c0 = d0 - d1 * m + d2 * m * m - d3 * m * m * m;

  if (!finite(c) || !(min_slope(c, lo, hi) > 0.0)) {
    throw NonMonotoneFitError("fitted cubic is not strictly increasing on [" +
                                  text::format_double(lo) + ", " + text::format_double(hi) +
                                  "]: " + describe(c),
                              c);
  }
  return CalibrationModel(c, lo, hi);
}

double residual_rms(const CalibrationModel& model, std::span<const CalibrationSample> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) {
    const double r = s.sensor_value - model.evaluate(s.angle);
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

std::vector<CalibrationSample> read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "angle_deg,sensor_counts") {
    throw InputError("calibration samples: expected header 'angle_deg,sensor_counts'");
  }
  std::vector<CalibrationSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto fields = text::split(line, ',');
    std::optional<double> angle, counts;
    if (fields.size() == 2) {
      angle = text::parse_double(fields[0]);
      counts = text::parse_double(fields[1]);
    }
    if (!angle || !counts) {
      throw InputError("calibration samples: malformed row at line " + std::to_string(lineno));
    }
    if (*counts < 0.0 || *counts > kMaxCounts) {
      throw InputError("calibration samples: counts outside [0, 1023] at line " +
                       std::to_string(lineno));
    }
    out.push_back({*angle, *counts});
  }
  return out;
}

std::vector<CalibrationSample> load_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open calibration samples '" + path + "'");
  return read_samples_csv(in);
}

void write_samples_csv(std::ostream& out, std::span<const CalibrationSample> samples) {
  out << "angle_deg,sensor_counts\n";
  for (const auto& s : samples) {
    out << text::format_double(s.angle) << ',' << text::format_double(s.sensor_value) << '\n';
  }
}

void write_model(std::ostream& out, const CalibrationModel& model) {
  // 17 significant digits: always round-trips and satisfies the >= 9 digit format.
  auto put = [&](const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s=%.17g\n", key, v);
    out << buf;
  };
  const auto& c = model.coefficients();
  put("c0", c.c0);
  put("c1", c.c1);
  put("c2", c.c2);
  put("c3", c.c3);
  put("angle_min", model.angle_min());
  put("angle_max", model.angle_max());
}

CalibrationModel read_model(std::istream& in) {
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos) throw InputError("model record: missing '=' in '" + std::string(t) + "'");
    auto key = std::string(text::trim(t.substr(0, eq)));
    auto value = text::parse_double(t.substr(eq + 1));
    if (!value) throw InputError("model record: bad number for key '" + key + "'");
    kv[key] = *value;
  }
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw InputError(std::string("model record: missing key '") + key + "'");
    return it->second;
  };
  return CalibrationModel({.c0 = get("c0"), .c1 = get("c1"), .c2 = get("c2"), .c3 = get("c3")},
                          get("angle_min"), get("angle_max"));
}

CalibrationModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  return read_model(in);
}

void save_model(const std::string& path, const CalibrationModel& model) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file '" + path + "'");
  write_model(out, model);
}

}  // namespace sipo
