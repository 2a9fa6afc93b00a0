#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>

#include "una/client.hpp"
#include "una/frame.hpp"
#include "una/mesh_script.hpp"
#include "una/placement.hpp"
#include "una/service.hpp"
#include "una/testbed.hpp"

namespace fs = std::filesystem;
using namespace una;

namespace {

constexpr int kExitFault = 1;
constexpr int kExitInvalid = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct RunOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool serve = false;
  int port = -1;
  bool headless = true;
  std::optional<int> ticks;
  std::string mode;
  std::string static_dir;
  double speed = 1.0;
  bool until_interrupted = false;
};

void print(const Json& j) { std::cout << j.dump(2) << std::endl; }

int run_scenario(const RunOptions& o) {
  Scenario s;
  try {
    s = load_scenario(o.scenario);
    if (o.seed) s.reseed(*o.seed);
    if (o.ticks)
      s.stop.ticks = *o.ticks;
    else if (o.until_interrupted)
      s.stop = {std::numeric_limits<int>::max(), false};
    if (!o.mode.empty()) s.optimizer.mode = optimizer_mode_from_string(o.mode);
    s.validate(o.scenario);
  } catch (const std::exception& e) {
    std::cerr << "una: " << e.what() << "\n";
    return kExitInvalid;
  }

  Testbed testbed(s);
  std::optional<Service> service;
  if (o.serve) {
    ServiceConfig cfg;
    cfg.port = o.port >= 0 ? o.port : default_port();
    cfg.static_dir = o.static_dir;
    service.emplace(testbed, cfg);
    try {
      service->start();
    } catch (const std::system_error& e) {
      std::cerr << "una: cannot serve: " << e.what() << "\n";
      return kExitFault;
    }
    std::cerr << "una: serving una/1 on " << cfg.host << ":" << service->port() << " (WebSocket at /ws)\n";
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  int code = 0;
  try {
    if (o.serve)
      run_paced(testbed, g_interrupted, o.speed);
    else
      while (!testbed.finished() && !g_interrupted) testbed.step();
  } catch (const std::exception& e) {
    std::cerr << "una: simulation fault at tick " << testbed.tick() << ": " << e.what() << "\n";
    code = kExitFault;
  }
  if (service) service->stop();

  if (!o.out.empty()) testbed.write_artifacts(o.out);
  const auto summary = testbed.summary();
  print(summary);
  if (!summary["faults"].empty()) code = kExitFault;
  return code;
}

struct BenchOptions {
  int trials = 14;
  double noise = 1.0;
  std::vector<double> goal;
  std::uint64_t seed = 1;
  std::string out;
};

int bench(const BenchOptions& o) {
  BenchmarkConfig cfg;
  cfg.trials = o.trials;
  const auto standard = NoiseConfig::standard(o.seed);
  cfg.noise = {standard.compass_std * o.noise, standard.actuation_std * o.noise, standard.render_std * o.noise, o.seed};
  if (!o.goal.empty()) {
    cfg.goal = Pose2D(o.goal[0], o.goal[1], o.goal[2]);
    if (!cfg.arena.bounds().contains(cfg.goal.position())) {
      std::cerr << "una: goal lies outside the arena\n";
      return kExitInvalid;
    }
  }
  const auto rec = run_placement_benchmark(cfg);
  write_benchmark_csv(std::cout, rec);

  int timeouts = 0;
  Json trials = Json::array();
  for (const auto& t : rec.trials) {
    timeouts += t.timed_out;
    trials.push_back({{"trial", t.trial},
                      {"seed", t.seed},
                      {"start", to_json(t.start)},
                      {"goal", to_json(t.goal)},
                      {"final_fix", to_json(t.final_fix.world_position)},
                      {"error_m", t.timed_out ? Json() : Json(t.error)},
                      {"ticks", t.ticks},
                      {"timed_out", t.timed_out}});
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream csv(fs::path(o.out) / "benchmark.csv");
    write_benchmark_csv(csv, rec);
    std::ofstream js(fs::path(o.out) / "benchmark.json");
    js << Json{{"scenario", rec.scenario}, {"seed", rec.seed}, {"config_digest", rec.config_digest}, {"trials", trials}}
              .dump(2)
       << "\n";
  }
  if (timeouts > 0) std::cerr << "una: " << timeouts << " trial(s) did not reach the goal\n";
  return timeouts > 0 ? kExitFault : 0;
}

int vision(const std::string& frame_path, const std::string& cal_path, double time) {
  const Frame frame = read_ppm(frame_path);
  const Calibration cal = load_calibration(cal_path);
  print(to_json(locate_tags(frame, cal, time)));
  return 0;
}

int cover(const std::string& instance_path, const std::string& mode) {
  const auto inst = load_instance(instance_path);
  inst.validate();
  print(to_json(mode == "exhaustive" ? solve_exhaustive(inst) : solve_central(inst)));
  return 0;
}

int mesh(const std::string& script_path, const std::string& out) {
  const auto report = run_mesh_script(load_mesh_script(script_path));
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream csv(fs::path(out) / "packet_trace.csv");
    write_packet_trace_csv(csv, report.trace);
  }
  print(report.json);
  return 0;
}

int plugin(const std::string& host, int port) {
  auto client = Client::connect(host, port >= 0 ? port : default_port(), "optimizer");
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const int answered = serve_plugin(client, greedy_plan, g_interrupted);
  std::cerr << "una: answered " << answered << " plan request(s)\n";
  return 0;
}

void add_run_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--scenario", o.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for every random stream");
  cmd->add_option("--out", o.out, "Artifact directory");
  cmd->add_option("--port", o.port, "Service port (default UNA_PORT or 7447)")->check(CLI::Range(0, 65535));
  cmd->add_option("--ticks", o.ticks, "Stop after this many ticks")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", o.mode, "Optimizer mode override")
      ->check(CLI::IsMember({"central", "distributed", "emulation"}));
  cmd->add_option("--static", o.static_dir, "Directory served over HTTP with --serve")->check(CLI::ExistingDirectory);
  cmd->add_option("--speed", o.speed, "Simulated seconds per wall second with --serve")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"una: simulated UAV testbed"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario to its stop condition");
  add_run_flags(run_cmd, run);
  run_cmd->add_flag("--serve", run.serve, "Open the central service while running (real time)");
  run_cmd->add_flag("--headless,!--no-headless", run.headless, "No interactive display (the default)");

  RunOptions serve;
  serve.serve = true;
  serve.until_interrupted = true;
  auto* serve_cmd = app.add_subcommand("serve", "Run a scenario in real time behind the central service");
  add_run_flags(serve_cmd, serve);

  BenchOptions bench_opts;
  auto* bench_cmd = app.add_subcommand("bench-placement", "Repeated placement trials and their error CDF");
  bench_cmd->add_option("--trials", bench_opts.trials, "Number of trials")->check(CLI::Range(1, 100000));
  bench_cmd->add_option("--noise", bench_opts.noise, "Multiple of the standard noise levels (0 disables)")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--goal", bench_opts.goal, "Goal pose: x y yaw")->expected(3);
  bench_cmd->add_option("--seed", bench_opts.seed, "Base seed; trial i uses seed + i");
  bench_cmd->add_option("--out", bench_opts.out, "Directory for benchmark.csv and benchmark.json");

  std::string frame_path, cal_path;
  double frame_time = 0;
  auto* vision_cmd = app.add_subcommand("vision", "Detect tags in one PPM frame");
  vision_cmd->add_option("--frame", frame_path, "PPM (P6) frame")->required()->check(CLI::ExistingFile);
  vision_cmd->add_option("--cal", cal_path, "Calibration file")->required()->check(CLI::ExistingFile);
  vision_cmd->add_option("--time", frame_time, "Timestamp stamped on detections");

  std::string instance_path, cover_mode = "central";
  auto* cover_cmd = app.add_subcommand("cover", "Solve one coverage instance");
  cover_cmd->add_option("--instance", instance_path, "Instance file")->required()->check(CLI::ExistingFile);
  cover_cmd->add_option("--mode", cover_mode, "Solver")->check(CLI::IsMember({"central", "exhaustive"}));

  std::string script_path, mesh_out;
  auto* mesh_cmd = app.add_subcommand("mesh", "Run a standalone mesh script");
  mesh_cmd->add_option("--script,script", script_path, "Mesh script file")->required()->check(CLI::ExistingFile);
  mesh_cmd->add_option("--out", mesh_out, "Directory for packet_trace.csv");

  std::string host = "127.0.0.1";
  int plugin_port = -1;
  auto* plugin_cmd = app.add_subcommand("plugin", "Connect as the greedy optimizer plugin");
  plugin_cmd->add_option("--host", host, "Service host");
  plugin_cmd->add_option("--port", plugin_port, "Service port")->check(CLI::Range(1, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*run_cmd) return run_scenario(run);
    if (*serve_cmd) return run_scenario(serve);
    if (*bench_cmd) return bench(bench_opts);
    if (*vision_cmd) return vision(frame_path, cal_path, frame_time);
    if (*cover_cmd) return cover(instance_path, cover_mode);
    if (*mesh_cmd) return mesh(script_path, mesh_out);
    if (*plugin_cmd) return plugin(host, plugin_port);
  } catch (const ClientError& e) {
    std::cerr << "una: " << e.what() << "\n";
    return kExitFault;
  } catch (const std::exception& e) {
    std::cerr << "una: " << e.what() << "\n";
    return kExitInvalid;
  }
  return 0;
}
