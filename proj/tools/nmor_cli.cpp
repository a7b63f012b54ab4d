// nmor: run scenario files, presets and parameter sweeps.
//
//   nmor run <config.json|manifest.json> [--seed N] [--out-dir DIR] [--format csv|jsonl]
//   nmor preset <name> [--emit-config] [--seed N] [--out-dir DIR] [--format csv|jsonl]
//   nmor sweep <config.json> --param dotted.path --values v1,v2,... [...]
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure, 1 other.
// Errors are printed to stderr as one JSON object.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nmor/error.hpp"
#include "nmor/scenarios.hpp"

namespace {

int report(const std::string& type, const std::string& message, const std::string& path = {}) {
  nmor::Json err = {{"error", type}, {"message", message}};
  if (!path.empty()) err["path"] = path;
  std::cerr << err.dump() << "\n";
  if (type == "validation") return 2;
  if (type == "numerical") return 3;
  return 1;
}

std::vector<nmor::Json> parse_values(const std::string& list) {
  std::vector<nmor::Json> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = list.find(',', pos);
    const std::string item =
        list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item.empty()) throw nmor::ValidationError("empty entry in value list", "values");
    nmor::Json v = nmor::Json::parse(item, nullptr, false);
    out.push_back(v.is_discarded() ? nmor::Json(item) : v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void print_summary(const nmor::RunResult& r, const std::filesystem::path& dir) {
  std::cout << "wrote " << r.files.size() + 1 << " files to " << dir.string() << "\n";
  for (const auto& a : r.arms) {
    std::cout << "  " << a.label << ": integrator " << a.integrator;
    if (!a.snr.empty()) std::cout << ", snr " << a.snr.back().snr;
    if (!a.peaks.empty()) std::cout << ", peak psd " << a.peaks.back().peak_psd << " V^2/Hz";
    if (a.fit) std::cout << ", log-log slope " << a.fit->slope << " (r^2 " << a.fit->r_squared << ")";
    if (a.lineshape) std::cout << ", linewidth " << a.linewidth_hz << " Hz";
    std::cout << "\n";
  }
  for (const auto& [amp, e] : r.enhancement)
    std::cout << "  enhancement at " << amp << " nT: psd x" << e.psd_ratio << ", amplitude x"
              << e.amplitude_ratio << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NMOR magnetometry simulator and measurement-chain harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string format = "csv";
  app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  app.add_option("--format", format, "table format: csv or jsonl")->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "run a scenario file or rerun a manifest");
  std::string config_path;
  run_cmd->add_option("config", config_path, "scenario JSON or manifest.json")->required();

  auto* preset_cmd = app.add_subcommand("preset", "run or print a named preset");
  std::string preset_name;
  bool emit_config = false;
  preset_cmd->add_option("name", preset_name, "fig2 | fig3 | fig4 | s2 | s3 | pumped")->required();
  preset_cmd->add_flag("--emit-config", emit_config, "print the preset as a scenario file");

  auto* sweep_cmd = app.add_subcommand("sweep", "run a config over values of one parameter");
  std::string sweep_config, param, values;
  sweep_cmd->add_option("config", sweep_config, "scenario JSON")->required();
  sweep_cmd->add_option("--param", param, "dotted key path, e.g. waveform.amplitude_nt")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    nmor::RunOptions opt;
    opt.out_dir = out_dir;
    opt.format = nmor::output_format_from_string(format);

    const auto with_seed = [&](nmor::Json cfg) {
      if (seed) cfg["seed"] = *seed;
      return cfg;
    };

    if (*run_cmd) {
      const auto scenario = nmor::scenario_from_json(with_seed(nmor::load_config(config_path)));
      print_summary(nmor::run(scenario, opt), opt.out_dir);
    } else if (*preset_cmd) {
      nmor::Json cfg = with_seed(nmor::to_json(nmor::preset(preset_name)));
      if (emit_config) {
        std::cout << cfg.dump(2) << "\n";
        return 0;
      }
      print_summary(nmor::run(nmor::scenario_from_json(cfg), opt), opt.out_dir);
    } else if (*sweep_cmd) {
      const auto points = nmor::sweep(with_seed(nmor::load_config(sweep_config)), param,
                                      parse_values(values), opt);
      std::cout << "swept " << param << " over " << points.size() << " values into "
                << opt.out_dir.string() << "\n";
    }
  } catch (const nmor::ValidationError& e) {
    return report("validation", e.detail(), e.path());
  } catch (const nmor::NumericalError& e) {
    return report("numerical", e.what());
  } catch (const std::exception& e) {
    return report("runtime", e.what());
  }
  return 0;
}
