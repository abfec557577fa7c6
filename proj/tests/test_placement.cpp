#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "sipo/placement.hpp"

using namespace sipo;
using namespace sipo::placement;

namespace {

std::vector<StudyRecord> one_per_cell(double (*value)(Site, double)) {
  std::vector<StudyRecord> out;
  for (auto s : kSites) {
    for (double a : kStudyAngles) out.push_back({"P1", s, a, value(s, a)});
  }
  return out;
}

}  // namespace

TEST_CASE("site metadata") {
  CHECK(site_name(Site::LowerThoracic) == "lower_thoracic");
  CHECK(cm_below_neck(Site::LowerThoracic) == 12);
  CHECK(cm_below_neck(Site::LowerLumbar) == 26);
  CHECK(parse_site("upper_lumbar") == Site::UpperLumbar);
  CHECK_FALSE(parse_site("neck"));
}

TEST_CASE("cell means") {
  auto records = one_per_cell([](Site, double a) { return 400.0 + a; });
  records.push_back({"P2", Site::LowerThoracic, 90.0, 0.0});
  for (auto& r : records) {
    if (r.site == Site::LowerThoracic && r.target_angle == 90.0 && r.subject_id == "P1") r.sensor_value = 500.0;
    if (r.site == Site::LowerThoracic && r.target_angle == 90.0 && r.subject_id == "P2") r.sensor_value = 514.0;
  }
  const auto t = aggregate_means(records);
  CHECK(t.at(Site::LowerThoracic, 2) == 507.0);
  CHECK(t.count[site_index(Site::LowerThoracic)][2] == 2);
  CHECK(t.at(Site::UpperLumbar, 4) == 515.0);
}

TEST_CASE("missing cells are named") {
  auto records = one_per_cell([](Site, double a) { return 400.0 + a; });
  std::erase_if(records, [](const StudyRecord& r) {
    return r.site == Site::UpperLumbar && r.target_angle == 115.0;
  });
  try {
    aggregate_means(records);
    FAIL("expected IncompleteDesignError");
  } catch (const IncompleteDesignError& e) {
    REQUIRE(e.missing().size() == 1);
    CHECK(e.missing()[0].first == Site::UpperLumbar);
    CHECK(e.missing()[0].second == 115.0);
    CHECK(std::string(e.what()).find("upper_lumbar@115") != std::string::npos);
  }
}

TEST_CASE("records with non-study angles are rejected") {
  std::vector<StudyRecord> r = {{"P1", Site::LowerThoracic, 85.0, 500.0}};
  CHECK_THROWS_AS(aggregate_means(r), InputError);
}

TEST_CASE("means are order independent") {
  auto records = synthetic_study(3);
  const auto base = aggregate_means(records);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(records.begin(), records.end(), rng);
    const auto t = aggregate_means(records);
    for (auto s : kSites) {
      for (std::size_t a = 0; a < 5; ++a) CHECK(t.at(s, a) == doctest::Approx(base.at(s, a)).epsilon(1e-12));
    }
  }
}

TEST_CASE("selection picks the widest range") {
  const auto model = paper_model();
  MeansTable t;
  for (auto s : kSites) {
    for (std::size_t a = 0; a < 5; ++a) {
      const double v = model.evaluate(kStudyAngles[a]);
      t.mean[site_index(s)][a] = s == Site::LowerThoracic ? v : 500.0 + (v - 530.0) * 20.0 / 65.056;
    }
  }
  auto sel = select_placement(t);
  CHECK(sel.site == Site::LowerThoracic);
  CHECK_FALSE(sel.tie);
  CHECK(sel.ranges[site_index(Site::LowerThoracic)] == doctest::Approx(65.056).epsilon(1e-9));
  CHECK(sel.ranges[site_index(Site::UpperThoracic)] == doctest::Approx(20.0).epsilon(1e-9));

  auto scaled = t;
  for (auto& row : scaled.mean) {
    for (auto& v : row) v *= 2.0;
  }
  CHECK(select_placement(scaled).site == Site::LowerThoracic);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> off(-200.0, 200.0);
  for (int i = 0; i < 100; ++i) {
    auto shifted = t;
    for (auto& row : shifted.mean) {
      const double k = off(rng);
      for (auto& v : row) v += k;
    }
    REQUIRE(select_placement(shifted).site == Site::LowerThoracic);
  }
}

TEST_CASE("identical sites tie to the first") {
  MeansTable t;
  for (auto& row : t.mean) row = {500, 505, 512, 520, 540};
  const auto sel = select_placement(t);
  CHECK(sel.site == Site::UpperThoracic);
  CHECK(sel.tie);
}

TEST_CASE("site fits recover the reference cubic and isolate failures") {
  auto records = synthetic_study(1, 9, 0.0);
  std::erase_if(records, [](const StudyRecord& r) {
    return r.site == Site::UpperLumbar && (r.target_angle == 80.0 || r.target_angle == 100.0);
  });
  for (auto exec : {Execution::Serial, Execution::Parallel}) {
    const auto fits = fit_site_models(records, exec);
    REQUIRE(fits.size() == 4);
    const auto& lt = fits[site_index(Site::LowerThoracic)];
    REQUIRE(lt.model);
    const auto& c = lt.model->coefficients();
    CHECK(c.c3 == doctest::Approx(0.0003).epsilon(1e-6));
    CHECK(c.c2 == doctest::Approx(-0.0605).epsilon(1e-6));
    CHECK(c.c1 == doctest::Approx(4.8789).epsilon(1e-6));
    CHECK(c.c0 == doctest::Approx(345.23).epsilon(1e-6));
    CHECK(lt.monotone);
    const auto& ul = fits[site_index(Site::UpperLumbar)];
    CHECK_FALSE(ul.model);
    REQUIRE(ul.error);
    CHECK(ul.error->find("distinct") != std::string::npos);
    CHECK(fits[site_index(Site::LowerLumbar)].model.has_value());
  }
}

TEST_CASE("noisy site fits report a residual RMS near the noise level") {
  const auto model = paper_model();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<StudyRecord> records;
    for (int subj = 0; subj < 9; ++subj) {
      for (double a : kStudyAngles) {
        records.push_back({"P" + std::to_string(subj), Site::LowerThoracic, a, model.evaluate(a) + noise(rng)});
      }
    }
    const auto fits = fit_site_models(records);
    const auto& lt = fits[site_index(Site::LowerThoracic)];
    REQUIRE(lt.model);
    CHECK(lt.residual_rms <= 2.0);
  }
}

TEST_CASE("study CSV parsing and report output") {
  std::stringstream ok("subject_id,site,target_angle_deg,sensor_counts\nP1,lower_thoracic,90,512.5\n");
  const auto r = read_study_csv(ok);
  REQUIRE(r.size() == 1);
  CHECK(r[0].site == Site::LowerThoracic);
  std::stringstream bad_site("subject_id,site,target_angle_deg,sensor_counts\nP1,neck,90,512\n");
  CHECK_THROWS_AS(read_study_csv(bad_site), InputError);
  std::stringstream bad_angle("subject_id,site,target_angle_deg,sensor_counts\nP1,lower_lumbar,91,512\n");
  CHECK_THROWS_AS(read_study_csv(bad_angle), InputError);

  const auto records = synthetic_study(9);
  std::stringstream csv;
  write_study_csv(csv, records);
  CHECK(read_study_csv(csv).size() == records.size());

  const auto means = aggregate_means(records);
  std::stringstream report, means_csv;
  write_report(report, select_placement(means), fit_site_models(records));
  write_means_csv(means_csv, means);
  CHECK(report.str().find("selected_site=lower_thoracic tie=0") != std::string::npos);
  CHECK(report.str().find("fit site=lower_thoracic samples=45 status=ok") != std::string::npos);
  CHECK(means_csv.str().rfind("angle_deg,upper_thoracic,lower_thoracic,upper_lumbar,lower_lumbar\n", 0) == 0);
}
