#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "crimepat/pattern.hpp"

using namespace crimepat;
using std::numbers::pi;

namespace {

std::vector<double> sample(const Mesh& mesh, auto&& f) {
  std::vector<double> v(mesh.cells());
  const int ny = mesh.dim() == 1 ? 1 : mesh.n;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < mesh.n; ++i) v[j * mesh.n + i] = f((i + 0.5) * mesh.h, (j + 0.5) * mesh.h);
  return v;
}

}  // namespace

TEST(ModeProjection, RecoversSingleMode) {
  const auto mesh = make_mesh(DomainSpec{DomainKind::Interval, 1.0}, 128);
  const auto phi3 = make_mode(mesh.domain, 3);
  const auto f = sample(mesh, [&](double x, double) { return 3.0 + 0.7 * evaluate_mode(phi3, x); });
  const auto sp = mode_projection(f, mesh, 20);
  ASSERT_TRUE(sp.dominant.has_value());
  EXPECT_EQ(sp.dominant->m, 3);
  for (const auto& e : sp.entries) EXPECT_NEAR(e.coeff, e.index.m == 3 ? 0.7 : 0.0, 1e-12);
}

TEST(ModeProjection, RecoversSquareModeAndMixture) {
  const auto mesh = make_mesh(DomainSpec{DomainKind::Square, 2.0}, 40);
  const auto a = make_mode(mesh.domain, {1, 2}), b = make_mode(mesh.domain, {3, 0});
  const auto f = sample(mesh, [&](double x, double y) {
    return 1.0 - 0.4 * evaluate_mode(a, x, y) + 0.25 * evaluate_mode(b, x, y);
  });
  const auto sp = mode_projection(f, mesh, 6);
  EXPECT_EQ(sp.dominant, (ModeIndex{1, 2}));
  for (const auto& e : sp.entries) {
    const double want = e.index == ModeIndex{1, 2} ? -0.4 : (e.index == ModeIndex{3, 0} ? 0.25 : 0.0);
    EXPECT_NEAR(e.coeff, want, 1e-12);
  }
}

TEST(ModeProjection, ConstantFieldHasNoDominantMode) {
  const auto mesh = make_mesh(DomainSpec{}, 64);
  const std::vector<double> f(mesh.cells(), 4.2);
  const auto sp = mode_projection(f, mesh, 10);
  EXPECT_FALSE(sp.dominant.has_value());
  for (const auto& e : sp.entries) EXPECT_NEAR(e.coeff, 0.0, 1e-13);
}

TEST(ModeProjection, SizeMismatchIsRejected) {
  const auto mesh = make_mesh(DomainSpec{}, 64);
  const std::vector<double> f(10, 1.0);
  EXPECT_THROW(mode_projection(f, mesh, 4), Error);
}

// cos(3 pi x / 7) on (0, 7) peaks at x = 0 and x = 14/3; x = 7 is a trough.
TEST(CountSpikes, CosineOnSevenInterval) {
  const auto mesh = make_mesh(DomainSpec{DomainKind::Interval, 7.0}, 700);
  const auto f = sample(mesh, [](double x, double) { return std::cos(3 * pi * x / 7); });
  const auto inc = count_spikes(f, mesh, 0.1, true);
  EXPECT_EQ(inc.count, 2);
  const auto exc = count_spikes(f, mesh, 0.1, false);
  ASSERT_EQ(exc.count, 1);
  EXPECT_NEAR((exc.cells[0] + 0.5) * mesh.h, 14.0 / 3.0, mesh.h);
}

TEST(CountSpikes, ConstantFieldHasNone) {
  const auto mesh = make_mesh(DomainSpec{}, 32);
  EXPECT_EQ(count_spikes(std::vector<double>(32, 1.5), mesh).count, 0);
  const auto sq = make_mesh(DomainSpec{DomainKind::Square, 1.0}, 12);
  EXPECT_EQ(count_spikes(std::vector<double>(144, -2.0), sq).count, 0);
}

TEST(CountSpikes, ProminenceFiltersRipples) {
  const auto mesh = make_mesh(DomainSpec{DomainKind::Interval, 10.0}, 1000);
  const auto f = sample(mesh, [](double x, double) {
    return std::exp(-std::pow(x - 3.003, 2) / 0.05) + 0.6 * std::exp(-std::pow(x - 7.003, 2) / 0.05) +
           0.01 * std::cos(40 * pi * (x - 0.0123) / 10);
  });
  EXPECT_EQ(count_spikes(f, mesh, 0.1, false).count, 2);
  EXPECT_GT(count_spikes(f, mesh, 0.001, false).count, 10);
  EXPECT_THROW(count_spikes(f, mesh, 0.0), Error);
}

TEST(CountSpikes, InvariantUnderAffineMapsAndReflection) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto mesh = make_mesh(DomainSpec{DomainKind::Interval, 5.0}, 257);
  for (int trial = 0; trial < 50; ++trial) {
    double c[6];
    for (double& v : c) v = u(gen) - 0.5;
    auto f = sample(mesh, [&](double x, double) {
      double s = 0.0;
      for (int k = 0; k < 6; ++k) s += c[k] * std::cos((k + 1) * pi * x / 5.0);
      return s;
    });
    const int base = count_spikes(f, mesh).count;
    auto g = f;
    const double a = 0.1 + 10.0 * u(gen), b = 100.0 * (u(gen) - 0.5);
    for (double& v : g) v = a * v + b;
    EXPECT_EQ(count_spikes(g, mesh).count, base);
    std::reverse(g.begin(), g.end());
    EXPECT_EQ(count_spikes(g, mesh).count, base);
  }
}

TEST(CountSpikes, HotspotsOnTheSquare) {
  const auto mesh = make_mesh(DomainSpec{DomainKind::Square, 1.0}, 60);
  const double cx[] = {0.2, 0.7, 0.5}, cy[] = {0.3, 0.8, 0.5};
  const auto f = sample(mesh, [&](double x, double y) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += std::exp(-(std::pow(x - cx[k], 2) + std::pow(y - cy[k], 2)) / 0.004);
    return s;
  });
  EXPECT_EQ(count_spikes(f, mesh).count, 3);
  auto t = f;
  for (int j = 0; j < 60; ++j)
    for (int i = 0; i < 60; ++i) t[j * 60 + i] = f[i * 60 + j];
  EXPECT_EQ(count_spikes(t, mesh).count, 3);
  const auto corner = sample(mesh, [](double x, double y) { return std::cos(pi * x) * std::cos(pi * y); });
  EXPECT_EQ(count_spikes(corner, mesh, 0.1, true).count, 2);
  EXPECT_EQ(count_spikes(corner, mesh, 0.1, false).count, 0);
}

TEST(Monotonicity, Directions) {
  EXPECT_EQ(monotonicity(std::vector<double>{1, 2, 3}), Monotonicity::Increasing);
  EXPECT_EQ(monotonicity(std::vector<double>{3, 2, 1}), Monotonicity::Decreasing);
  EXPECT_EQ(monotonicity(std::vector<double>{1, 3, 2}), Monotonicity::None);
  EXPECT_EQ(monotonicity(std::vector<double>{1, 1, 2}), Monotonicity::None);
}

TEST(SpikeEvents, LogsEveryChange) {
  const auto mesh = make_mesh(DomainSpec{DomainKind::Interval, 1.0}, 200);
  auto snap = [&](int k, double t) {
    FieldPair s;
    s.A = sample(mesh, [&](double x, double) { return 2.0 + std::cos(k * pi * x); });
    s.rho.assign(mesh.cells(), 0.5);
    s.t = t;
    return s;
  };
  const std::vector<FieldPair> snaps{snap(4, 0), snap(4, 1), snap(2, 2), snap(6, 3)};
  PatternOptions opt;
  opt.include_boundary = false;
  const auto log = spike_events(snaps, mesh, opt);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].before, 1);
  EXPECT_EQ(log[0].after, 0);
  EXPECT_EQ(log[0].t, 2.0);
  EXPECT_EQ(log[1].after, 2);
  const auto rep = analyze_pattern(snaps.back(), snaps, mesh, opt);
  EXPECT_EQ(rep.dominant_mode->m, 6);
  EXPECT_EQ(rep.spike_count, 2);
  EXPECT_NEAR(rep.amplitude, 2.0, 5e-3);
  EXPECT_EQ(rep.monotone, false);
}

TEST(FitExponent, SyntheticSquareRoot) {
  const double a = 0.3, g = 1e-3, eb = 0.05;
  const std::vector<double> eps{eb - g, eb - 2 * g, eb - 4 * g};
  const std::vector<double> amp{a, a * std::sqrt(2.0), 2 * a};
  const auto fit = fit_amplitude_exponent(eb, eps, amp);
  EXPECT_NEAR(fit.p, 0.5, 1e-12);
  EXPECT_NEAR(fit.log_prefactor, std::log(a) - 0.5 * std::log(g), 1e-10);
  EXPECT_EQ(fit.used, 3);
}

TEST(FitExponent, InsufficientData) {
  auto expect_insufficient = [](auto&& call) {
    try {
      call();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
  };
  expect_insufficient([] { fit_amplitude_exponent(0.03, {0.04, 0.05, 0.06}, {1e-12, 1e-12, 1e-12}); });
  expect_insufficient([] { fit_amplitude_exponent(0.03, {0.02, 0.025}, {1.0, 0.5}); });
  expect_insufficient(
      [] { fit_amplitude_exponent(0.03, {0.02, 0.025, 0.028}, {1.0, 0.5, 0.2}, {true, false, false}); });
}

TEST(FitExponent, InvalidRunsAreDroppedWithWarnings) {
  const auto fit = fit_amplitude_exponent(1.0, {0.9, 0.8, 0.6, 0.5, 1.2}, {0.1, 0.2, 0.4, 9.0, 0.0},
                                          {true, true, true, false, true});
  EXPECT_EQ(fit.used, 3);
  EXPECT_EQ(fit.warnings.size(), 2u);
  EXPECT_NEAR(fit.p, 1.0, 1e-12);
}
