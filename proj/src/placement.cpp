#include "sipo/placement.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "sipo/text.hpp"

namespace sipo::placement {

std::string_view site_name(Site site) {
  switch (site) {
    case Site::UpperThoracic: return "upper_thoracic";
    case Site::LowerThoracic: return "lower_thoracic";
    case Site::UpperLumbar: return "upper_lumbar";
    case Site::LowerLumbar: return "lower_lumbar";
  }
  return "?";
}

int cm_below_neck(Site site) {
  switch (site) {
    case Site::UpperThoracic: return 6;
    case Site::LowerThoracic: return 12;
    case Site::UpperLumbar: return 20;
    case Site::LowerLumbar: return 26;
  }
  return 0;
}

std::optional<Site> parse_site(std::string_view name) {
  for (auto s : kSites) {
    if (site_name(s) == name) return s;
  }
  return std::nullopt;
}

std::size_t site_index(Site site) { return static_cast<std::size_t>(site); }

std::optional<std::size_t> angle_index(double angle_deg) {
  for (std::size_t i = 0; i < kStudyAngles.size(); ++i) {
    if (angle_deg == kStudyAngles[i]) return i;
  }
  return std::nullopt;
}

namespace {

void check_record(const StudyRecord& r) {
  if (!angle_index(r.target_angle)) {
    throw InputError("study record for subject '" + r.subject_id + "' has target angle " +
                     text::format_double(r.target_angle) + ", not one of 75/80/90/100/115");
  }
  if (!std::isfinite(r.sensor_value) || r.sensor_value < 0.0 || r.sensor_value > kMaxCounts) {
    throw InputError("study record for subject '" + r.subject_id + "' has counts outside [0, 1023]");
  }
}

}  // namespace

MeansTable aggregate_means(std::span<const StudyRecord> records) {
  MeansTable t;
  std::array<std::array<double, 5>, 4> sum{};
  for (const auto& r : records) {
    check_record(r);
    const auto si = site_index(r.site);
    const auto ai = *angle_index(r.target_angle);
    sum[si][ai] += r.sensor_value;
    ++t.count[si][ai];
  }
  std::vector<std::pair<Site, double>> missing;
  std::string names;
  for (auto s : kSites) {
    for (std::size_t a = 0; a < kStudyAngles.size(); ++a) {
      const auto si = site_index(s);
      if (t.count[si][a] == 0) {
        missing.emplace_back(s, kStudyAngles[a]);
        if (!names.empty()) names += ", ";
        names += std::string(site_name(s)) + "@" + text::format_double(kStudyAngles[a]);
      } else {
        t.mean[si][a] = sum[si][a] / static_cast<double>(t.count[si][a]);
      }
    }
  }
  if (!missing.empty()) {
    throw IncompleteDesignError("incomplete study design, empty cells: " + names, std::move(missing));
  }
  return t;
}

Selection select_placement(const MeansTable& means) {
  Selection sel;
  for (auto s : kSites) {
    const auto& row = means.mean[site_index(s)];
    auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    sel.ranges[site_index(s)] = *hi - *lo;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sel.ranges.size(); ++i) {
    if (sel.ranges[i] > sel.ranges[best]) best = i;
  }
  sel.site = kSites[best];
  sel.tie = std::count(sel.ranges.begin(), sel.ranges.end(), sel.ranges[best]) > 1;
  return sel;
}

namespace {

SiteFit fit_one(Site site, const std::vector<CalibrationSample>& samples) {
  SiteFit fit;
  fit.site = site;
  fit.samples = samples.size();
  try {
    auto model = fit_cubic(samples);
    fit.residual_rms = residual_rms(model, samples);
    fit.monotone = true;
    fit.model = model;
  } catch (const NonMonotoneFitError& e) {
    fit.monotone = false;
    fit.error = e.what();
  } catch (const Error& e) {
    fit.error = e.what();
  }
  return fit;
}

}  // namespace

std::vector<SiteFit> fit_site_models(std::span<const StudyRecord> records, Execution exec) {
  std::array<std::vector<CalibrationSample>, 4> per_site;
  for (const auto& r : records) {
    check_record(r);
    per_site[site_index(r.site)].push_back({r.target_angle, r.sensor_value});
  }
  std::vector<SiteFit> fits(kSites.size());
  const int n = static_cast<int>(kSites.size());
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) fits[i] = fit_one(kSites[i], per_site[i]);
  } else {
    for (int i = 0; i < n; ++i) fits[i] = fit_one(kSites[i], per_site[i]);
  }
  return fits;
}

std::vector<StudyRecord> read_study_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      text::trim(line) != "subject_id,site,target_angle_deg,sensor_counts") {
    throw InputError("study: expected header 'subject_id,site,target_angle_deg,sensor_counts'");
  }
  std::vector<StudyRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto f = text::split(line, ',');
    auto where = " at line " + std::to_string(lineno);
    if (f.size() != 4) throw InputError("study: expected 4 fields" + where);
    StudyRecord r;
    r.subject_id = std::string(text::trim(f[0]));
    if (r.subject_id.empty()) throw InputError("study: empty subject_id" + where);
    auto site = parse_site(text::trim(f[1]));
    if (!site) throw InputError("study: unknown site '" + std::string(text::trim(f[1])) + "'" + where);
    r.site = *site;
    auto angle = text::parse_double(f[2]);
    auto counts = text::parse_double(f[3]);
    if (!angle || !counts) throw InputError("study: malformed number" + where);
    r.target_angle = *angle;
    r.sensor_value = *counts;
    try {
      check_record(r);
    } catch (const InputError& e) {
      throw InputError(std::string("study: ") + e.what() + where);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<StudyRecord> load_study_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open study file '" + path + "'");
  return read_study_csv(in);
}

void write_study_csv(std::ostream& out, std::span<const StudyRecord> records) {
  out << "subject_id,site,target_angle_deg,sensor_counts\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << site_name(r.site) << ',' << text::format_double(r.target_angle)
        << ',' << text::format_double(r.sensor_value) << '\n';
  }
}

void write_report(std::ostream& out, const Selection& selection, const std::vector<SiteFit>& fits) {
  for (auto s : kSites) {
    out << "site=" << site_name(s) << " cm_below_neck=" << cm_below_neck(s)
        << " range_counts=" << text::format_double(selection.ranges[site_index(s)]) << '\n';
  }
  out << "selected_site=" << site_name(selection.site) << " tie=" << (selection.tie ? 1 : 0) << '\n';
  for (const auto& f : fits) {
    out << "fit site=" << site_name(f.site) << " samples=" << f.samples;
    if (f.model) {
      const auto& c = f.model->coefficients();
      out << " status=ok c0=" << text::format_double(c.c0) << " c1=" << text::format_double(c.c1)
          << " c2=" << text::format_double(c.c2) << " c3=" << text::format_double(c.c3)
          << " angle_min=" << text::format_double(f.model->angle_min())
          << " angle_max=" << text::format_double(f.model->angle_max())
          << " rms=" << text::format_double(f.residual_rms) << " monotone=1";
    } else {
      std::string msg = f.error.value_or("unknown");
      std::replace(msg.begin(), msg.end(), ' ', '_');
      out << " status=error monotone=" << (f.monotone ? 1 : 0) << " error=" << msg;
    }
    out << '\n';
  }
}

void write_means_csv(std::ostream& out, const MeansTable& means) {
  out << "angle_deg";
  for (auto s : kSites) out << ',' << site_name(s);
  out << '\n';
  for (std::size_t a = 0; a < kStudyAngles.size(); ++a) {
    out << text::format_double(kStudyAngles[a]);
    for (auto s : kSites) out << ',' << text::format_fixed(means.at(s, a), 4);
    out << '\n';
  }
}

std::vector<StudyRecord> synthetic_study(std::uint64_t seed, std::size_t subjects, double scatter) {
  if (subjects == 0) throw InputError("synthetic study needs at least one subject");
  const auto model = paper_model();
  const double lo = model.evaluate(kStudyAngles.front());
  const double hi = model.evaluate(kStudyAngles.back());
  const double mid = 0.5 * (lo + hi);
  const double squeeze = 20.0 / (hi - lo);
  // Centres of the squeezed sites, in counts.
  const std::array<double, 4> centre = {470.0, 0.0, 515.0, 540.0};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dev(0.0, scatter > 0.0 ? scatter : 1.0);
  std::vector<StudyRecord> out;
  out.reserve(subjects * kSites.size() * kStudyAngles.size());
  for (auto s : kSites) {
    for (double angle : kStudyAngles) {
      const double truth = model.evaluate(angle);
      const double cell_mean = s == Site::LowerThoracic
                                   ? truth
                                   : centre[site_index(s)] + (truth - mid) * squeeze;
      std::vector<double> d(subjects, 0.0);
      if (scatter > 0.0) {
        for (auto& x : d) x = dev(rng);
        double m = 0.0;
        for (double x : d) m += x;
        m /= static_cast<double>(subjects);
        for (auto& x : d) x -= m;
      }
      for (std::size_t k = 0; k < subjects; ++k) {
        out.push_back({"P" + std::to_string(k + 1), s, angle, cell_mean + d[k]});
      }
    }
  }
  return out;
}

}  // namespace sipo::placement
