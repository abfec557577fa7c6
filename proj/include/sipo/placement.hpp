#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sipo/calibration.hpp"

namespace sipo::placement {

/// Candidate sensor sites along the spine, in anatomical order (top down).
enum class Site { UpperThoracic, LowerThoracic, UpperLumbar, LowerLumbar };

inline constexpr std::array<Site, 4> kSites = {Site::UpperThoracic, Site::LowerThoracic,
                                               Site::UpperLumbar, Site::LowerLumbar};
inline constexpr std::array<double, 5> kStudyAngles = {75.0, 80.0, 90.0, 100.0, 115.0};

std::string_view site_name(Site site);
int cm_below_neck(Site site);
std::optional<Site> parse_site(std::string_view name);
std::size_t site_index(Site site);

/// Index into kStudyAngles, or nullopt for angles that are not study angles.
std::optional<std::size_t> angle_index(double angle_deg);

struct StudyRecord {
  std::string subject_id;
  Site site = Site::UpperThoracic;
  double target_angle = 0.0;  // deg
  double sensor_value = 0.0;  // counts
};

struct MeansTable {
  std::array<std::array<double, 5>, 4> mean{};
  std::array<std::array<std::size_t, 5>, 4> count{};

  double at(Site site, std::size_t angle_idx) const { return mean[site_index(site)][angle_idx]; }
};

class IncompleteDesignError : public InputError {
 public:
  IncompleteDesignError(const std::string& what, std::vector<std::pair<Site, double>> missing)
      : InputError(what), missing_(std::move(missing)) {}
  const std::vector<std::pair<Site, double>>& missing() const { return missing_; }

 private:
  std::vector<std::pair<Site, double>> missing_;
};

/// Per (site, angle) mean across records. Throws IncompleteDesignError naming
/// every empty cell, InputError for invalid records.
MeansTable aggregate_means(std::span<const StudyRecord> records);

struct Selection {
  Site site = Site::UpperThoracic;
  bool tie = false;
  std::array<double, 4> ranges{};  // max - min of the five means, per site
};

/// Site whose means span the widest range; ties go to the earlier site and set `tie`.
Selection select_placement(const MeansTable& means);

struct SiteFit {
  Site site = Site::UpperThoracic;
  std::size_t samples = 0;
  std::optional<CalibrationModel> model;
  double residual_rms = 0.0;
  bool monotone = false;
  std::optional<std::string> error;
};

enum class Execution { Serial, Parallel };

/// Cubic fit per site. A failing site records its error and does not stop the others.
std::vector<SiteFit> fit_site_models(std::span<const StudyRecord> records,
                                     Execution exec = Execution::Parallel);

// -- files ---------------------------------------------------------------------

/// CSV with header `subject_id,site,target_angle_deg,sensor_counts`.
std::vector<StudyRecord> read_study_csv(std::istream& in);
std::vector<StudyRecord> load_study_csv(const std::string& path);
void write_study_csv(std::ostream& out, std::span<const StudyRecord> records);

/// Record-set report: one `site=` line per site, the selection, one `fit` line per site.
void write_report(std::ostream& out, const Selection& selection, const std::vector<SiteFit>& fits);

/// `angle_deg,<site>...` with one row per study angle.
void write_means_csv(std::ostream& out, const MeansTable& means);

/// Synthetic 4-site study. Lower-thoracic cell means sit exactly on the
/// reference cubic; the other sites are the same curve affinely squeezed to a
/// 20-count range. Per-subject scatter (sd `scatter`) is re-centred so it
/// cancels in every cell mean.
std::vector<StudyRecord> synthetic_study(std::uint64_t seed, std::size_t subjects = 9,
                                         double scatter = 3.0);

}  // namespace sipo::placement
