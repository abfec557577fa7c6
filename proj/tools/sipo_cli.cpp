// sipo: headless front-end for the posture monitoring toolkit.
//
// Exit status: 0 success, 1 validation/usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include "sipo/calibration.hpp"
#include "sipo/device_sim.hpp"
#include "sipo/monitor.hpp"
#include "sipo/placement.hpp"
#include "sipo/session_log.hpp"
#include "sipo/text.hpp"
#include "sipo/transport.hpp"
#include "sipo/wire.hpp"

namespace {

using namespace sipo;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void install_signals() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
}

enum class Format { Text, Record };

std::string num(double v) { return text::format_double(v); }

CalibrationModel load_model_source(const std::string& source) {
  return source == "paper" ? paper_model() : load_model(source);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

// -- simulate -----------------------------------------------------------------

struct SimulateArgs {
  std::string trajectory;
  std::string model = "paper";
  std::string listen;
  bool no_pace = false;
  std::uint64_t seed = 0;
  double noise = 1.0;
  double rate = 20.0;
  std::string actuation_log;
};

int run_simulate(const SimulateArgs& a, Format fmt) {
  TrajectorySpec spec;
  spec.waypoints = load_trajectory_csv(a.trajectory);
  spec.noise_sigma = a.noise;
  spec.sample_rate_hz = a.rate;
  spec.seed = a.seed;
  spec.validate();
  const auto model = load_model_source(a.model);
  const auto endpoint = net::Endpoint::parse(a.listen);
  // Fail on domain violations before anyone connects.
  sample_trajectory(spec, model);

  DeviceOptions opt;
  opt.pace = !a.no_pace;

  net::Stream stream;
  if (endpoint.kind == net::Endpoint::Kind::Stdio) {
    stream = net::Stream::stdio();
  } else {
    auto listener = net::Listener::bind(endpoint.host, endpoint.port);
    std::cerr << "listening=" << endpoint.host << ":" << listener.port() << std::endl;
    std::optional<net::Stream> conn;
    while (!g_stop.load() && !conn) conn = listener.accept(std::chrono::milliseconds(100));
    if (!conn) return kOk;
    stream = std::move(*conn);
  }

  const auto report = run_device(spec, model, stream, opt, &g_stop);
  stream.close();

  if (!a.actuation_log.empty()) {
    auto out = open_out(a.actuation_log);
    write_actuation_log(out, report.actuations);
  }
  // stdout may be the wire; the summary always goes to stderr.
  if (fmt == Format::Record) {
    std::cerr << "kind=device_exit sensor_frames=" << report.sensor_frames_sent
              << " heartbeats=" << report.heartbeats_sent << " acks=" << report.acks_sent
              << " vibrate_received=" << report.vibrate_received
              << " malformed_inbound=" << report.malformed_inbound
              << " completed=" << (report.completed ? 1 : 0)
              << " transport_error=" << (report.transport_error ? "1" : "0") << "\n";
  } else {
    std::cerr << "device: " << report.sensor_frames_sent << " samples, " << report.heartbeats_sent
              << " heartbeats, " << report.vibrate_received << " vibrate commands"
              << (report.completed ? "" : " (stopped early)") << "\n";
    if (report.transport_error) std::cerr << "transport: " << *report.transport_error << "\n";
  }
  return kOk;
}

// -- monitor ------------------------------------------------------------------

int run_monitor(const std::string& config_path) {
  auto cfg = load_service_config(config_path);
  const bool stdio = cfg.device.kind == net::Endpoint::Kind::Stdio;
  MonitorService svc(cfg);
  svc.start(true);
  // In stdio mode stdout carries Vibrate frames.
  std::ostream& info = stdio ? std::cerr : std::cout;
  info << "api=http://" << cfg.api_host << ":" << svc.api_port() << std::endl;
  while (!g_stop.load() && svc.running()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  svc.stop();
  std::cerr << svc.status_json() << "\n";
  return kOk;
}

// -- calibrate ----------------------------------------------------------------

int run_calibrate_fit(const std::string& in, const std::string& out, Format fmt) {
  const auto samples = load_samples_csv(in);
  const auto model = fit_cubic(samples);
  save_model(out, model);
  const auto& c = model.coefficients();
  const double rms = residual_rms(model, samples);
  if (fmt == Format::Record) {
    std::cout << "kind=fit c3=" << num(c.c3) << " c2=" << num(c.c2) << " c1=" << num(c.c1)
              << " c0=" << num(c.c0) << " samples=" << samples.size() << " rms=" << num(rms) << "\n";
  } else {
    std::cout << "c3 = " << num(c.c3) << "\nc2 = " << num(c.c2) << "\nc1 = " << num(c.c1)
              << "\nc0 = " << num(c.c0) << "\nfit over " << samples.size()
              << " samples, rms residual " << text::format_fixed(rms, 4) << " counts\n";
  }
  return kOk;
}

int run_calibrate_sample(const std::string& model_src, const std::vector<double>& angles,
                         const std::string& out) {
  const auto model = load_model_source(model_src);
  std::vector<CalibrationSample> s;
  for (double a : angles) s.push_back({a, eval_forward(model, a)});
  auto f = open_out(out);
  write_samples_csv(f, s);
  return kOk;
}

// -- placement ----------------------------------------------------------------

int run_placement_analyze(const std::string& in, const std::string& report_path,
                          const std::string& means_csv, Format fmt) {
  const auto records = placement::load_study_csv(in);
  const auto means = placement::aggregate_means(records);
  const auto sel = placement::select_placement(means);
  const auto fits = placement::fit_site_models(records);
  {
    auto out = open_out(report_path);
    placement::write_report(out, sel, fits);
  }
  if (!means_csv.empty()) {
    auto out = open_out(means_csv);
    placement::write_means_csv(out, means);
  }
  if (fmt == Format::Text) {
    for (auto s : placement::kSites) {
      std::cout << placement::site_name(s) << " (" << placement::cm_below_neck(s)
                << " cm): range " << text::format_fixed(sel.ranges[placement::site_index(s)], 3)
                << " counts\n";
    }
  }
  std::cout << "selected_site=" << placement::site_name(sel.site) << (sel.tie ? " tie=1" : "") << "\n";
  return kOk;
}

int run_placement_synth(const std::string& out_path, std::uint64_t seed, std::size_t subjects,
                        double scatter) {
  const auto records = placement::synthetic_study(seed, subjects, scatter);
  auto out = open_out(out_path);
  placement::write_study_csv(out, records);
  return kOk;
}

// -- replay -------------------------------------------------------------------

int run_replay(const std::string& path, const std::string& session, Format fmt) {
  const auto parsed = load_log(path);
  for (const auto& s : parsed.skipped) {
    std::cerr << "skipped line " << s.line_no << ": " << s.reason << "\n";
  }
  std::optional<std::string> only;
  if (!session.empty()) only = session;
  const auto rep = replay(parsed.records, only);
  if (only && rep.sessions == 0) throw InputError("no session '" + session + "' in " + path);
  if (fmt == Format::Record) {
    std::cout << "kind=replay sessions=" << rep.sessions << " samples=" << rep.samples
              << " logged_events=" << rep.logged_events << " replayed_events=" << rep.replayed_events
              << " divergences=" << rep.divergences.size() << "\n";
  } else {
    std::cout << rep.sessions << " session(s), " << rep.samples << " samples, "
              << rep.logged_events << " logged events, " << rep.replayed_events
              << " replayed events\n";
  }
  for (const auto& d : rep.divergences) std::cout << "divergence: " << d << "\n";
  if (!rep.ok()) return kRuntime;
  std::cout << "replay ok\n";
  return kOk;
}

// -- decode -------------------------------------------------------------------

std::string frame_record(const wire::Frame& f) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        std::ostringstream o;
        if constexpr (std::is_same_v<T, wire::SensorData>) {
          o << "type=sensor_data ts_ms=" << v.timestamp_ms << " value=" << v.sensor_value;
        } else if constexpr (std::is_same_v<T, wire::Vibrate>) {
          o << "type=vibrate duration_ms=" << v.duration_ms;
        } else if constexpr (std::is_same_v<T, wire::Ack>) {
          o << "type=ack acked_type=" << static_cast<int>(v.acked_type);
        } else {
          o << "type=heartbeat";
        }
        return o.str();
      },
      f);
}

int run_decode(const std::string& path, Format fmt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open capture '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto out = wire::decode_all(bytes);
  for (const auto& f : out.frames) {
    std::cout << (fmt == Format::Record ? "kind=frame " + frame_record(f) : wire::describe(f)) << "\n";
  }
  for (const auto& e : out.errors) {
    if (fmt == Format::Record) {
      std::cout << "kind=decode_error error=" << wire::to_string(e.kind) << " offset=" << e.offset << "\n";
    } else {
      std::cout << "error " << wire::to_string(e.kind) << " at byte " << e.offset << "\n";
    }
  }
  if (fmt == Format::Text) {
    std::cout << out.frames.size() << " frame(s), " << out.errors.size() << " error(s), "
              << bytes.size() << " bytes\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sitting-posture monitoring toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::string format = "text";
  app.add_option("--format", format, "Output style")
      ->check(CLI::IsMember({"text", "record"}))
      ->capture_default_str();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the device simulator");
  simulate->add_option("--trajectory", sim.trajectory, "Waypoint CSV (time_ms,angle_deg)")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--model", sim.model, "'paper' or a model file")->capture_default_str();
  simulate->add_option("--listen", sim.listen, "host:port to accept one host on, or 'stdio'")->required();
  simulate->add_flag("--no-pace", sim.no_pace, "Send as fast as possible");
  simulate->add_option("--seed", sim.seed, "Noise seed")->capture_default_str();
  simulate->add_option("--noise", sim.noise, "Gaussian noise sd in counts")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  simulate->add_option("--rate", sim.rate, "Sample rate in Hz")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--actuation-log", sim.actuation_log, "Write received vibrate pulses here");

  std::string config_path;
  auto* monitor = app.add_subcommand("monitor", "Run the monitoring service");
  monitor->add_option("--config", config_path, "Service config JSON")->required()->check(CLI::ExistingFile);

  auto* calibrate = app.add_subcommand("calibrate", "Calibration model tools");
  calibrate->require_subcommand(1);
  std::string fit_in, fit_out;
  auto* fit = calibrate->add_subcommand("fit", "Least-squares cubic fit");
  fit->add_option("--in", fit_in, "Samples CSV (angle_deg,sensor_counts)")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "Model file to write")->required();
  std::string sample_model = "paper", sample_out;
  std::vector<double> sample_angles = {60, 70, 80, 90, 100, 110, 120, 130};
  auto* sample = calibrate->add_subcommand("sample", "Write noiseless samples of a model");
  sample->add_option("--model", sample_model, "'paper' or a model file")->capture_default_str();
  sample->add_option("--angles", sample_angles, "Angles in degrees")->delimiter(',');
  sample->add_option("--out", sample_out, "Samples CSV to write")->required();

  auto* place = app.add_subcommand("placement", "Sensor placement study");
  place->require_subcommand(1);
  std::string study_in, report_out, means_out;
  auto* analyze = place->add_subcommand("analyze", "Select a placement site from study data");
  analyze->add_option("--in", study_in, "Study CSV")->required()->check(CLI::ExistingFile);
  analyze->add_option("--report", report_out, "Report file to write")->required();
  analyze->add_option("--means-csv", means_out, "Also write the angle x site means table");
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  std::size_t synth_subjects = 9;
  double synth_scatter = 3.0;
  auto* synth = place->add_subcommand("synth", "Generate a synthetic study dataset");
  synth->add_option("--out", synth_out, "Study CSV to write")->required();
  synth->add_option("--seed", synth_seed)->capture_default_str();
  synth->add_option("--subjects", synth_subjects)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--scatter", synth_scatter)->check(CLI::NonNegativeNumber)->capture_default_str();

  std::string log_path, session_id;
  auto* rep = app.add_subcommand("replay", "Re-run the engine over a session log");
  rep->add_option("--log", log_path, "Session log")->required()->check(CLI::ExistingFile);
  rep->add_option("--session", session_id, "Only this session");

  std::string capture;
  auto* dec = app.add_subcommand("decode", "Pretty-print a wire capture");
  dec->add_option("--in", capture, "Raw byte capture")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  const Format fmt = format == "record" ? Format::Record : Format::Text;
  install_signals();
  try {
    if (*simulate) return run_simulate(sim, fmt);
    if (*monitor) return run_monitor(config_path);
    if (*fit) return run_calibrate_fit(fit_in, fit_out, fmt);
    if (*sample) return run_calibrate_sample(sample_model, sample_angles, sample_out);
    if (*analyze) return run_placement_analyze(study_in, report_out, means_out, fmt);
    if (*synth) return run_placement_synth(synth_out, synth_seed, synth_subjects, synth_scatter);
    if (*rep) return run_replay(log_path, session_id, fmt);
    if (*dec) return run_decode(capture, fmt);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kInvalid;
}
