#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crimepat/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerify = 4;

struct Globals {
  std::string config_path;
  std::string out;
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

crimepat::RunConfig load(const Globals& g) {
  crimepat::RunConfig c;
  if (!g.config_path.empty()) c = crimepat::load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

int cmd_stability_table(const crimepat::RunConfig& c) {
  const auto tab = crimepat::stability_table(c);
  crimepat::write_stability_table(tab, c.output_dir);
  for (const auto& a : tab.argmax)
    std::cout << "L=" << a.L << " " << crimepat::to_string(a.variant) << " argmax "
              << crimepat::modes_string(a.modes, tab.kind) << " eps_bar=" << a.eps_bar_max << "\n";
  return kExitOk;
}

int cmd_json(const crimepat::RunConfig& c, const crimepat::json& j, const std::string& file) {
  crimepat::fs::create_directories(c.output_dir);
  crimepat::write_json(crimepat::fs::path(c.output_dir) / file, j);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_simulate(const crimepat::RunConfig& c) {
  const auto out = crimepat::simulate(c);
  crimepat::write_simulation(c, out, c.output_dir);
  const auto s = crimepat::summary_json(c, out);
  std::cout << "outcome=" << s["outcome"].get<std::string>() << " t=" << out.run.final_state.t
            << " dominant=" << s["dominant_mode"].dump() << " spikes=" << out.report.spike_count
            << " amplitude=" << out.report.amplitude << "\n";
  if (out.run.outcome == crimepat::Outcome::Blowup) {
    std::cerr << "simulation failed: " << out.run.message << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sweep(const crimepat::RunConfig& c, int threads) {
  const auto res = crimepat::sweep(c, c.output_dir, threads);
  std::cout << res.manifest.dump(2) << "\n";
  for (const auto& r : res.runs)
    if (!r.output || r.output->run.outcome == crimepat::Outcome::Blowup) return kExitNumerical;
  return kExitOk;
}

int cmd_verify(const crimepat::RunConfig& c) {
  const auto rs = crimepat::verify(c);
  const auto j = crimepat::verify_json(rs);
  crimepat::fs::create_directories(c.output_dir);
  crimepat::write_json(crimepat::fs::path(c.output_dir) / "verify.json", j);
  for (const auto& r : rs)
    std::cout << (r.applicable ? (r.passed ? "PASS " : "FAIL ") : "N/A  ") << r.name << " measured=" << r.measured
              << " " << r.detail << "\n";
  return j["all_passed"].get<bool>() ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pattern formation toolkit for urban crime reaction-advection-diffusion models"};
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (section.key = value)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory (overrides output.dir)");
  app.add_option("--threads", g.threads, "Worker threads for sweep")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Random seed (overrides run.seed)");
  app.require_subcommand(1);
  app.fallthrough();

  auto* st = app.add_subcommand("stability-table", "Bifurcation values over the mode range");
  auto* wm = app.add_subcommand("wavemode", "Selected wavemode and instability verdict");
  auto* bf = app.add_subcommand("bifurcation", "Applicability conditions and branch coefficients");
  auto* sim = app.add_subcommand("simulate", "Integrate to steady state and analyse the pattern");
  auto* sw = app.add_subcommand("sweep", "Run one simulation per sweep value");
  auto* ver = app.add_subcommand("verify", "Run the verification oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto c = load(g);
    if (st->parsed()) return cmd_stability_table(c);
    if (wm->parsed()) return cmd_json(c, crimepat::wavemode_report(c), "wavemode.json");
    if (bf->parsed()) return cmd_json(c, crimepat::bifurcation_report(c), "bifurcation.json");
    if (sim->parsed()) return cmd_simulate(c);
    if (sw->parsed()) return cmd_sweep(c, g.threads);
    if (ver->parsed()) return cmd_verify(c);
  } catch (const crimepat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == crimepat::ErrorKind::Config ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
