#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "crimepat/experiments.hpp"

using namespace crimepat;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::NotFound;
}

std::string message_of(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

RunConfig random_config(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RunConfig c;
  c.model.variant = u(gen) < 0.5 ? Variant::Departure : Variant::Arrival;
  c.kinetics = u(gen) < 0.5 ? "paper-default" : "constant-eta-linear-f";
  c.model.A0 = 0.1 + 3.0 * u(gen);
  c.model.Bbar = 0.1 + 10.0 * u(gen);
  c.model.lambda0 = 0.01 + 0.99 * u(gen);
  c.model.eps = 1e-4 + 0.1 * u(gen);
  c.domain.kind = u(gen) < 0.5 ? DomainKind::Interval : DomainKind::Square;
  c.domain.L = 0.5 + 20.0 * u(gen);
  c.n = 8 + static_cast<int>(500 * u(gen));
  c.perturb = {{PerturbField::A, 0.01 * u(gen), 4.0 * u(gen), 0.0}, {PerturbField::Both, 1e-3, 1.0 / 3.0, 2.0}};
  c.noise = 1e-3 * u(gen);
  c.seed = gen();
  c.solver.t_end = 100.0 + 1e4 * u(gen);
  c.solver.t_min = c.solver.t_end * u(gen);
  c.solver.ss_tol = 1e-12 * (1.0 + u(gen));
  c.solver.rtol = 1e-3 * u(gen) + 1e-9;
  c.solver.advection = u(gen) < 0.5 ? AdvectionScheme::Central : AdvectionScheme::Upwind;
  c.solver.face_average = u(gen) < 0.5 ? FaceAverage::Arithmetic : FaceAverage::Harmonic;
  c.solver.integrator = u(gen) < 0.5 ? Integrator::Rosenbrock : Integrator::RK4;
  c.solver.max_steps = 1000 + static_cast<long>(1e6 * u(gen));
  c.analysis.prominence_frac = 0.01 + 0.5 * u(gen);
  c.analysis.include_boundary = u(gen) < 0.5;
  if (u(gen) < 0.5) c.analysis.max_index = 1 + static_cast<int>(30 * u(gen));
  c.table.L_values = {1.0, 2.5, 0.1 * 3};
  c.table.variants = {Variant::Arrival, Variant::Departure};
  if (u(gen) < 0.5) c.table.max_index = 7;
  if (u(gen) < 0.5) c.sweep = {"model.eps", {"0.02", "0.01", "1e-3"}};
  c.verify.mms_n = {16, 32};
  c.verify.broken_flux = u(gen) < 0.5;
  c.output_dir = "out/x y";
  return c;
}

}  // namespace

TEST(ConfigRoundTrip, Defaults) {
  const RunConfig c;
  EXPECT_EQ(parse_config_string(serialize_config(c)), c);
}

TEST(ConfigRoundTrip, RandomConfigs) {
  std::mt19937_64 gen(99);
  for (int i = 0; i < 200; ++i) {
    const auto c = random_config(gen);
    const auto text = serialize_config(c);
    const auto back = parse_config_string(text);
    EXPECT_EQ(back, c) << text;
    EXPECT_EQ(serialize_config(back), text);
  }
}

TEST(ConfigRoundTrip, ShippedConfigs) {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(CRIMEPAT_CONFIG_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    const auto c = load_config(entry.path().string());
    EXPECT_EQ(parse_config_string(serialize_config(c)), c) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 20);
}

TEST(ConfigParse, CommentsAndWhitespace) {
  const auto c = parse_config_string(
      "# leading comment\n\n  model.eps   =  0.05   # trailing\n\tdomain.L=7\nic.perturb = A:0.01:0.25, rho:0.01:2\n");
  EXPECT_DOUBLE_EQ(c.model.eps, 0.05);
  EXPECT_DOUBLE_EQ(c.domain.L, 7.0);
  ASSERT_EQ(c.perturb.size(), 2u);
  EXPECT_EQ(c.perturb[0].field, PerturbField::A);
  EXPECT_DOUBLE_EQ(c.perturb[0].kx, 0.25);
  EXPECT_EQ(c.perturb[1].field, PerturbField::Rho);
  EXPECT_DOUBLE_EQ(c.perturb[1].kx, 2.0);
}

TEST(ConfigParse, Diagnostics) {
  EXPECT_EQ(kind_of("a.b = 1\n"), ErrorKind::Config);
  EXPECT_NE(message_of("a.b = 1\n").find("<config>:1: unknown key 'a.b'"), std::string::npos);
  EXPECT_NE(message_of("model.eps = 0.1\nmodel.eps = 0.2\n").find(":2: duplicate key"), std::string::npos);
  EXPECT_NE(message_of("\nmodel.eps 0.1\n").find(":2: expected"), std::string::npos);
  EXPECT_NE(message_of("grid.n = 1.5\n").find("grid.n"), std::string::npos);
  EXPECT_EQ(kind_of("model.eps = nan\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("model.eps = -1\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("model.variant = sideways\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("model.kinetics = mystery\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("domain.kind = cube\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("grid.n = 4\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("solver.t_min = 5000\nsolver.t_end = 10\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("ic.perturb = Z:1:2\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("sweep.key = model.nope\nsweep.values = 1\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("sweep.key = sweep.values\nsweep.values = 1\n"), ErrorKind::Config);
  EXPECT_EQ(kind_of("analysis.max_index = 0\n"), ErrorKind::Config);
}

TEST(ConfigParse, MissingFile) {
  try {
    load_config("/nonexistent/path.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(InitialState, NoiseIsSeededAndReproducible) {
  RunConfig c;
  c.n = 64;
  c.noise = 1e-3;
  c.seed = 42;
  const auto mesh = make_mesh(c.domain, c.n);
  const auto a = initial_state(c, mesh), b = initial_state(c, mesh);
  EXPECT_EQ(a.A, b.A);
  EXPECT_EQ(a.rho, b.rho);
  c.seed = 43;
  EXPECT_NE(initial_state(c, mesh).A, a.A);
  for (double v : a.A) EXPECT_LE(std::abs(v - c.model.Abar()), 1e-3);
}

TEST(InitialState, InadmissibleIsAConfigError) {
  RunConfig c;
  c.perturb = {{PerturbField::Rho, 5.0, 1.0, 0.0}};
  const auto mesh = make_mesh(c.domain, 32);
  try {
    initial_state(c, mesh);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(UnitUniform, Range) {
  EXPECT_EQ(unit_uniform(0), 0.0);
  EXPECT_LT(unit_uniform(~0ULL), 1.0);
  EXPECT_DOUBLE_EQ(unit_uniform(1ULL << 63), 0.5);
}

TEST(StabilityTableOutput, SquareGridMarksConstantMode) {
  auto c = load_config(std::string(CRIMEPAT_CONFIG_DIR) + "/table3.cfg");
  const auto tab = stability_table(c);
  EXPECT_EQ(tab.rows.size(), 36u);
  const auto dir = fs::temp_directory_path() / "crimepat_table3";
  fs::remove_all(dir);
  write_stability_table(tab, dir);
  std::ifstream in(dir / "stability_table_rounded.csv");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_NE(text.find("undefined"), std::string::npos);
  EXPECT_NE(text.find(",1,1,"), std::string::npos);
  ASSERT_EQ(tab.argmax.size(), 1u);
  EXPECT_EQ(tab.argmax[0].modes, (std::vector<ModeIndex>{{1, 1}}));
  fs::remove_all(dir);
}

TEST(SnapshotCsv, Layouts) {
  RunConfig c;
  auto mesh = make_mesh(DomainSpec{DomainKind::Interval, 2.0}, 8);
  auto s = homogeneous_fields(c.model, mesh);
  auto text = snapshot_csv(s, mesh);
  EXPECT_EQ(text.substr(0, 8), "x,A,rho\n");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  EXPECT_NE(text.find("0.125,3,0.66666666666666663"), std::string::npos);

  mesh = make_mesh(DomainSpec{DomainKind::Square, 1.0}, 8);
  s = homogeneous_fields(c.model, mesh);
  s.t = 2.5;
  text = snapshot_csv(s, mesh);
  EXPECT_EQ(text.substr(0, text.find('\n')), "8 8 1 2.5");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 17);
}

TEST(WavemodeReport, FigureTwoLengths) {
  const int expected[] = {3, 5, 6, 8};
  const char* names[] = {"figure2_L7", "figure2_L11", "figure2_L15", "figure2_L19"};
  for (int i = 0; i < 4; ++i) {
    const auto c = load_config(std::string(CRIMEPAT_CONFIG_DIR) + "/" + names[i] + ".cfg");
    const auto j = wavemode_report(c);
    EXPECT_EQ(j["modes"][0][0].get<int>(), expected[i]);
    EXPECT_TRUE(j["homogeneous_unstable"].get<bool>());
  }
}

TEST(BifurcationReport, FigureOneIsSupercritical) {
  const auto c = load_config(std::string(CRIMEPAT_CONFIG_DIR) + "/figure1.cfg");
  const auto j = bifurcation_report(c);
  const std::string dump = j.dump();
  EXPECT_NE(dump.find("pitchfork-super"), std::string::npos) << dump;
}
