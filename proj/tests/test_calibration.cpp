#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sipo/calibration.hpp"

using namespace sipo;

namespace {

bool rel_close(double got, double want, double rel) {
  return std::abs(got - want) <= rel * std::abs(want);
}

// A random cubic that is increasing on [lo, hi] and stays inside the ADC range.
struct RandomCubic {
  CalibrationModel::Coefficients c;
  double lo, hi;
};

RandomCubic random_monotone_cubic(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    RandomCubic r;
    r.lo = 40.0 + 40.0 * u(rng);
    r.hi = r.lo + 30.0 + 50.0 * u(rng);
    auto sign = [&] { return u(rng) < 0.5 ? -1.0 : 1.0; };
    r.c.c3 = sign() * std::pow(10.0, -5.0 + 2.0 * u(rng));
    r.c.c2 = sign() * std::pow(10.0, -3.0 + 2.0 * u(rng));
    r.c.c1 = std::pow(10.0, 0.0 + 1.0 * u(rng));
    if (min_slope(r.c, r.lo, r.hi) < 0.05) continue;
    double mid = 0.5 * (r.lo + r.hi);
    r.c.c0 = 0.0;
    r.c.c0 = 500.0 - oracle::power_sum(0, r.c.c1, r.c.c2, r.c.c3, mid);
    const double a = oracle::power_sum(r.c.c0, r.c.c1, r.c.c2, r.c.c3, r.lo);
    const double b = oracle::power_sum(r.c.c0, r.c.c1, r.c.c2, r.c.c3, r.hi);
    if (a < 0.0 || b > kMaxCounts || std::abs(r.c.c0) < 1.0) continue;
    return r;
  }
}

}  // namespace

TEST_CASE("reference model coefficients and domain") {
  const auto m = paper_model();
  CHECK(m.coefficients().c3 == 0.0003);
  CHECK(m.coefficients().c2 == -0.0605);
  CHECK(m.coefficients().c1 == 4.8789);
  CHECK(m.coefficients().c0 == 345.23);
  CHECK(m.angle_min() == 60.0);
  CHECK(m.angle_max() == 130.0);
  // Derivative discriminant (2 c2)^2 - 4 (3 c3) c1 is negative: increasing everywhere.
  const auto& c = m.coefficients();
  CHECK((2 * c.c2) * (2 * c.c2) - 4 * (3 * c.c3) * c.c1 == doctest::Approx(-0.00292304).epsilon(1e-9));
}

TEST_CASE("eval_forward matches the high-precision reference") {
  const auto m = paper_model();
  for (const auto& p : oracle::kReferenceCounts) {
    CAPTURE(p.angle);
    CHECK(std::abs(eval_forward(m, p.angle) - p.counts) <= 1e-9);
  }
  CHECK(std::abs(eval_forward(m, 110.0) - 549.159) <= 1e-9);
  CHECK(std::abs(eval_forward(m, 75.0) - 497.3975) <= 1e-9);
  CHECK(std::abs(eval_forward(m, 100.0) - 528.12) <= 1e-9);
}

TEST_CASE("eval_forward rejects angles outside the domain and names the bound") {
  const auto m = paper_model();
  try {
    eval_forward(m, 59.9);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("angle_min") != std::string::npos);
  }
  try {
    eval_forward(m, 130.5);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("angle_max") != std::string::npos);
  }
  CHECK_THROWS_AS(eval_forward(m, std::nan("")), DomainError);
}

TEST_CASE("invert recovers angles") {
  const auto m = paper_model();
  CHECK(std::abs(invert(m, 512.981) - 90.0) <= 1e-6);
  CHECK(std::abs(invert(m, eval_forward(m, 105.0)) - 105.0) <= 1e-6);
  CHECK(invert(m, m.counts_min()) == 60.0);
  CHECK(invert(m, m.counts_max()) == 130.0);
  CHECK_THROWS_AS(invert(m, std::nextafter(m.counts_min(), 0.0)), RangeError);
  CHECK_THROWS_AS(invert(m, 1023.0), RangeError);
  CHECK_THROWS_AS(invert(m, 616.137 + 0.01), RangeError);
  CHECK_THROWS_AS(invert(m, 100.0), RangeError);
}

TEST_CASE("invert_clamped pins out-of-range values to the domain bounds") {
  const auto m = paper_model();
  bool clamped = false;
  CHECK(invert_clamped(m, 1023.0, clamped) == 130.0);
  CHECK(clamped);
  CHECK(invert_clamped(m, 0.0, clamped) == 60.0);
  CHECK(clamped);
  invert_clamped(m, 513.0, clamped);
  CHECK_FALSE(clamped);
}

TEST_CASE("round trip over the domain at 0.1 deg steps") {
  const auto m = paper_model();
  double worst = 0.0;
  for (int i = 0; i <= 700; ++i) {
    const double a = 60.0 + 0.1 * i;
    worst = std::max(worst, std::abs(invert(m, eval_forward(m, a)) - a));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("forward model preserves order on random pairs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> a(60.0, 130.0);
  const auto m = paper_model();
  for (int i = 0; i < 10000; ++i) {
    double x = a(rng), y = a(rng);
    if (x == y) continue;
    if (x > y) std::swap(x, y);
    REQUIRE(eval_forward(m, x) < eval_forward(m, y));
  }
}

TEST_CASE("construction rejects bad models") {
  CHECK_THROWS_AS(CalibrationModel({345.23, 4.8789, -0.0605, 0.0003}, 100.0, 100.0), InputError);
  // Decreasing line.
  CHECK_THROWS_AS(CalibrationModel({500.0, -1.0, 0.0, 0.0}, 60.0, 130.0), InputError);
  // Parabola with its turning point inside the domain.
  CHECK_THROWS_AS(CalibrationModel({0.0, -2.0 * 95.0 * 0.01, 0.01, 0.0}, 60.0, 130.0), InputError);
  CHECK_NOTHROW(CalibrationModel({0.0, -2.0 * 95.0 * 0.01, 0.01, 0.0}, 96.0, 130.0));
}

TEST_CASE("fit_cubic recovers the reference cubic from noiseless samples") {
  const auto m = paper_model();
  std::vector<CalibrationSample> samples;
  for (double a : {75.0, 80.0, 90.0, 95.0, 100.0, 110.0, 115.0}) samples.push_back({a, eval_forward(m, a)});
  const auto fit = fit_cubic(samples);
  const auto& c = fit.coefficients();
  CHECK(rel_close(c.c3, 0.0003, 1e-6));
  CHECK(rel_close(c.c2, -0.0605, 1e-6));
  CHECK(rel_close(c.c1, 4.8789, 1e-6));
  CHECK(rel_close(c.c0, 345.23, 1e-6));
  CHECK(fit.angle_min() == 75.0);
  CHECK(fit.angle_max() == 115.0);
}

TEST_CASE("fit_cubic insufficient data") {
  std::vector<CalibrationSample> three = {{80, 500}, {90, 510}, {100, 530}};
  CHECK_THROWS_AS(fit_cubic(three), InsufficientDataError);
  std::vector<CalibrationSample> repeated = {{80, 500}, {80, 501}, {90, 510}, {90, 511}, {100, 530}};
  CHECK_THROWS_AS(fit_cubic(repeated), InsufficientDataError);
}

TEST_CASE("fit_cubic rejects invalid samples") {
  std::vector<CalibrationSample> s = {{80, 500}, {90, 510}, {100, 530}, {110, 2000}};
  CHECK_THROWS_AS(fit_cubic(s), InputError);
  s.back() = {std::nan(""), 540};
  CHECK_THROWS_AS(fit_cubic(s), InputError);
}

TEST_CASE("fit_cubic reports non-monotone fits with their coefficients") {
  std::vector<CalibrationSample> s = {{80, 540}, {90, 520}, {100, 510}, {110, 500}, {120, 495}};
  try {
    fit_cubic(s);
    FAIL("expected NonMonotoneFitError");
  } catch (const NonMonotoneFitError& e) {
    CHECK(e.coefficients().c1 != 0.0);
  }
}

TEST_CASE("exact recovery on random monotone cubics") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_monotone_cubic(rng);
    std::vector<CalibrationSample> s;
    const int n = 7 + static_cast<int>(u(rng) * 10);
    for (int i = 0; i < n; ++i) {
      const double a = r.lo + (r.hi - r.lo) * i / (n - 1);
      s.push_back({a, oracle::power_sum(r.c.c0, r.c.c1, r.c.c2, r.c.c3, a)});
    }
    const auto fit = fit_cubic(s).coefficients();
    CAPTURE(trial);
    CHECK(rel_close(fit.c0, r.c.c0, 1e-6));
    CHECK(rel_close(fit.c1, r.c.c1, 1e-6));
    CHECK(rel_close(fit.c2, r.c.c2, 1e-6));
    CHECK(rel_close(fit.c3, r.c.c3, 1e-6));
  }
}

TEST_CASE("adding a constant to every sample only moves c0") {
  const auto m = paper_model();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<CalibrationSample> s;
  for (int i = 0; i < 40; ++i) {
    const double a = 75.0 + i;
    s.push_back({a, m.evaluate(a) + noise(rng)});
  }
  const auto base = fit_cubic(s).coefficients();
  for (double k : {-120.0, 3.5, 250.0}) {
    auto shifted = s;
    for (auto& x : shifted) x.sensor_value += k;
    const auto c = fit_cubic(shifted).coefficients();
    CAPTURE(k);
    CHECK(rel_close(c.c0, base.c0 + k, 1e-9));
    CHECK(rel_close(c.c1, base.c1, 1e-9));
    CHECK(rel_close(c.c2, base.c2, 1e-9));
    CHECK(rel_close(c.c3, base.c3, 1e-9));
  }
}

TEST_CASE("noisy fit stays within one count of the generating model") {
  const auto m = paper_model();
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<CalibrationSample> s;
    for (int i = 0; i < 63; ++i) {
      const double a = 60.0 + 70.0 * i / 62.0;
      s.push_back({a, m.evaluate(a) + noise(rng)});
    }
    const auto fit = fit_cubic(s);
    double worst = 0.0;
    for (int i = 0; i <= 700; ++i) {
      const double a = 60.0 + 0.1 * i;
      worst = std::max(worst, std::abs(fit.evaluate(a) - m.evaluate(a)));
    }
    CAPTURE(seed);
    CHECK(worst < 1.0);
  }
}

TEST_CASE("model record round trip and CSV parsing") {
  const auto m = paper_model();
  std::stringstream ss;
  write_model(ss, m);
  const auto text = ss.str();
  CHECK(text.find("c3=0.00029999999999999997") != std::string::npos);
  CHECK(read_model(ss) == m);

  std::stringstream bad("c0=1\nc1=2\n");
  CHECK_THROWS_AS(read_model(bad), InputError);

  std::stringstream csv("angle_deg,sensor_counts\n75,497.3975\n90,512.981\n");
  auto samples = read_samples_csv(csv);
  REQUIRE(samples.size() == 2);
  CHECK(samples[1].angle == 90.0);
  std::stringstream wrong_header("angle,counts\n");
  CHECK_THROWS_AS(read_samples_csv(wrong_header), InputError);
  std::stringstream out_of_range("angle_deg,sensor_counts\n75,1500\n");
  CHECK_THROWS_AS(read_samples_csv(out_of_range), InputError);
}
