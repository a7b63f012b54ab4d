#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "doctest.h"
#include "nmor/error.hpp"
#include "nmor/scenarios.hpp"

using namespace nmor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nmor_scenarios_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string validation_path(const Json& config) {
  try {
    scenario_from_json(config);
  } catch (const ValidationError& e) {
    return e.path();
  }
  return "<accepted>";
}

// Every table file in `dir`, by name.
std::map<std::string, std::string> tables(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv" || e.path().extension() == ".jsonl")
      out[e.path().filename().string()] = read_text(e.path());
  return out;
}

int cli(const std::string& args, const fs::path& stderr_file = "/dev/null",
        const fs::path& stdout_file = "/dev/null") {
  const std::string cmd =
      std::string(NMOR_CLI) + " " + args + " > " + stdout_file.string() + " 2> " + stderr_file.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("presets resolve and round-trip through JSON") {
  for (const auto& name : preset_names()) {
    const Scenario s = preset(name);
    const Json j = to_json(s);
    CHECK(to_json(scenario_from_json(j)) == j);
    CHECK(j.contains("seed"));
  }
  CHECK_THROWS_AS(preset("bogus"), ValidationError);
}

TEST_CASE("s3 preset") {
  const Scenario s = preset("s3");
  REQUIRE(s.arms.size() == 2);
  CHECK(s.arms[0].probe.rabi_plus_hz == 1e5);
  CHECK(s.arms[1].probe.rabi_plus_hz == 1e6);
  CHECK(s.medium.rates.ground_decoherence_hz == 10.0);
  CHECK(s.analysis.mode == AnalysisMode::resonance);
}

TEST_CASE("fig4 preset") {
  const Scenario s = preset("fig4");
  REQUIRE(s.waveform);
  CHECK(s.waveform->kind == WaveformKind::square);
  CHECK(s.waveform->amplitude_nt == 5.0);
  CHECK(s.waveform->offset_nt == kEarthFieldNt);
  CHECK(s.instrument.n_scans == 64);
  CHECK(s.waveform->duration_s == 0.225);
}

TEST_CASE("config validation names the offending key") {
  Json base = to_json(preset("fig2"));

  Json j = base;
  j.erase("seed");
  CHECK(validation_path(j) == "seed");

  j = base;
  j["arms"][1]["probe"]["rabi_plus_hz"] = -3.0;
  CHECK(validation_path(j) == "arms[1].probe.rabi_plus_hz");

  j = base;
  j["waveform"]["colour"] = "blue";
  CHECK(validation_path(j) == "waveform.colour");

  j = base;
  j["waveform"]["kind"] = "triangle";
  CHECK(validation_path(j) == "waveform.kind");

  j = base;
  j["instrument"]["n_scans"] = "many";
  CHECK(validation_path(j) == "instrument.n_scans");

  j = base;
  j["analysis"]["enhancement"]["numerator"] = "nobody";
  CHECK(validation_path(j).starts_with("analysis.enhancement"));

  j = base;
  j["waveform"]["sample_rate_hz"] = 300.0;  // < 20 x 40 Hz
  CHECK(validation_path(j) == "waveform.sample_rate_hz");
}

TEST_CASE("fig2 calibration: 2 mV peak at a peak-to-noise ratio of 2") {
  RunOptions opt;
  opt.write_files = false;
  const Scenario s = preset("fig2");
  const auto r = run(s, opt);
  const auto& single = r.arm("single_lambda");
  const double peak = single.noiseless_peak_v.front();
  CHECK(peak == doctest::Approx(2e-3).epsilon(0.01).scale(0.0));
  const double sigma_avg =
      std::hypot(s.noise.scope_noise_rms_v,
                 std::sqrt(s.noise.white_psd_v2_per_hz * s.waveform->sample_rate_hz / 2.0)) /
      std::sqrt(128.0);
  CHECK(peak / sigma_avg == doctest::Approx(2.0).epsilon(0.01).scale(0.0));
  // the max-|x| estimator adds the largest noise excursion to the peak
  CHECK(single.snr.front().snr > 1.5);
  CHECK(single.snr.front().snr < 4.0);
  CHECK(single.averaging_count == 128);
  CHECK(single.acquisition_time_s == doctest::Approx(3.2).epsilon(1e-12).scale(0.0));
}

TEST_CASE("fig4 reports 14.4 s of acquisition") {
  RunOptions opt;
  opt.write_files = false;
  const auto r = run(preset("fig4"), opt);
  for (const auto& a : r.arms) CHECK(a.acquisition_time_s == doctest::Approx(14.4).epsilon(1e-12).scale(0.0));
}

TEST_CASE("fig3 bundle holds log-log fits for both schemes") {
  const auto dir = scratch("fig3");
  RunOptions opt;
  opt.out_dir = dir;
  const auto r = run(preset("fig3"), opt);
  for (const char* label : {"single_lambda", "wave_mixing"}) {
    const auto& a = r.arm(label);
    REQUIRE(a.fit);
    CHECK(std::abs(a.fit->slope - 2.0) <= 0.05);
    CHECK(a.fit->r_squared >= 0.999);
  }
  const std::string fits = read_text(dir / "fits.csv");
  CHECK(fits.starts_with("label,slope,intercept,r_squared\n"));
  CHECK(fits.find("single_lambda,") != std::string::npos);
  CHECK(fits.find("wave_mixing,") != std::string::npos);
  const Json m = Json::parse(read_text(dir / "manifest.json"));
  CHECK(m["status"] == "ok");
  for (const auto& f : m["files"]) CHECK(fs::exists(dir / f.get<std::string>()));
  fs::remove_all(dir);
}

TEST_CASE("same config twice gives byte-identical tables; the manifest reruns it") {
  const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  RunOptions opt;
  opt.out_dir = a;
  run(preset("fig2"), opt);
  opt.out_dir = b;
  run(preset("fig2"), opt);
  opt.out_dir = c;
  run(scenario_from_json(load_config(a / "manifest.json")), opt);

  const auto ta = tables(a);
  CHECK(ta.size() >= 5);
  CHECK(ta == tables(b));
  CHECK(ta == tables(c));
  CHECK(read_text(a / "manifest.json") == read_text(c / "manifest.json"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("a different seed changes the noise") {
  RunOptions opt;
  opt.write_files = false;
  Scenario s = preset("fig2");
  const double first = run(s, opt).arm("single_lambda").snr.front().snr;
  s.seed += 1;
  s.noise.seed = s.seed;
  CHECK(run(s, opt).arm("single_lambda").snr.front().snr != first);
}

TEST_CASE("a failed run leaves a labelled manifest") {
  const auto dir = scratch("failed");
  Json j = to_json(preset("fig2"));
  j["evolve"]["max_substeps"] = 2;
  j["evolve"]["rtol"] = 1e-15;
  j["evolve"]["atol"] = 0.0;
  j["evolve"]["integrator"] = "magnus4";
  RunOptions opt;
  opt.out_dir = dir;
  CHECK_THROWS_AS(run(scenario_from_json(j), opt), NumericalError);
  const Json m = Json::parse(read_text(dir / "manifest.json"));
  CHECK(m["status"] == "failed");
  CHECK(m["error"]["type"] == "numerical");
  CHECK(m["files"].empty());
  fs::remove_all(dir);
}

TEST_CASE("overrides and sweeps") {
  const Json base = to_json(preset("s3"));
  CHECK(with_override(base, "arms.0.probe.rabi_plus_hz", 5e5)["arms"][0]["probe"]["rabi_plus_hz"] == 5e5);
  CHECK_THROWS_AS(with_override(base, "arms.7.probe", 1.0), ValidationError);
  CHECK_THROWS_AS(with_override(base, "medium.nonexistent", 1.0), ValidationError);

  const auto dir = scratch("sweep");
  Json cfg = base;
  cfg["analysis"]["probe_rabi_sweep_hz"] = Json::array();
  RunOptions opt;
  opt.out_dir = dir;
  const auto points = sweep(cfg, "medium.ground_decoherence_hz", {Json(5.0), Json(20.0)}, opt);
  REQUIRE(points.size() == 2);
  CHECK(points[1].result.arms[0].linewidth_hz > points[0].result.arms[0].linewidth_hz);
  CHECK(fs::exists(dir / "point_0" / "manifest.json"));
  CHECK(fs::exists(dir / "point_1" / "manifest.json"));
  CHECK(read_text(dir / "sweep.csv").starts_with("point,value,directory,weak_probe_linewidth_hz"));
  CHECK(fs::exists(dir / "sweep_manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("command line") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto err = dir / "stderr.txt";

  CHECK(cli("preset bogus", err) == 2);
  const Json e = Json::parse(read_text(err));
  CHECK(e["error"] == "validation");
  CHECK(e["path"] == "preset");

  CHECK(cli("preset s3 --emit-config", "/dev/null", dir / "s3.json") == 0);

  Json cfg = Json::parse(read_text(dir / "s3.json"));
  CHECK(cfg["name"] == "s3");
  cfg.erase("seed");
  write_text(dir / "noseed.json", cfg.dump());
  CHECK(cli("run " + (dir / "noseed.json").string(), err) == 2);
  CHECK(Json::parse(read_text(err))["path"] == "seed");

  CHECK(cli("run " + (dir / "s3.json").string() + " --seed 7 --format jsonl --out-dir " +
            (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "linewidths.jsonl"));
  CHECK(Json::parse(read_text(dir / "out" / "manifest.json"))["scenario"]["seed"] == 7);

  CHECK(cli("sweep " + (dir / "s3.json").string() +
            " --param medium.ground_decoherence_hz --values 5,10 --out-dir " + (dir / "sw").string()) == 0);
  CHECK(fs::exists(dir / "sw" / "sweep.csv"));

  CHECK(cli("run " + (dir / "missing.json").string(), err) == 2);
  CHECK(cli("", err) != 0);
  fs::remove_all(dir);
}
