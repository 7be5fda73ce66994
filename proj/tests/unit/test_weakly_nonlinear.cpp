#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "crimepat/weakly_nonlinear.hpp"

using namespace crimepat;
using std::numbers::pi;

namespace {

const KineticsPack kDefault = builtin_kinetics("paper-default");

ModelParams table1(Variant v = Variant::Departure) { return {1.0, 2.0, 0.1, 0.029, v}; }

BifurcationPoint point(const ModelParams& p, const DomainSpec& d, ModeIndex idx) {
  return check_bifurcation_conditions(p, kDefault, make_mode(d, idx));
}

BranchCoefficients coeffs(K1Result k1, double K2) {
  BranchCoefficients c;
  c.K1 = k1.K1;
  c.K2 = K2;
  return c;
}

}  // namespace

TEST(K1, VanishesOnRectangles) {
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(compute_K1(point(table1(), DomainSpec{}, {k, 0}), table1(), kDefault).K1, 0.0);
  const ModelParams sq{1.0, 3.0, 0.9, 0.008, Variant::Departure};
  for (ModeIndex idx : {ModeIndex{1, 1}, ModeIndex{0, 2}, ModeIndex{3, 1}})
    EXPECT_EQ(compute_K1(point(sq, DomainSpec{DomainKind::Square, 1.0}, idx), sq, kDefault).K1, 0.0);
}

TEST(K1, BracketDualEvaluation) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> uA0(0.5, 2.0), uB(1.0, 4.0), ul(0.05, 0.9), uL(0.5, 6.0);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const ModelParams p{uA0(gen), uB(gen), ul(gen), 0.01, trial % 2 ? Variant::Arrival : Variant::Departure};
    const DomainSpec d{DomainKind::Interval, uL(gen)};
    const auto bp = point(p, d, {1 + trial % 3, 0});
    if (!bp.conditions.Qk_denominator_nonzero || !(bp.eps_bar > 0.0)) continue;
    const auto t = taylor_data(p, kDefault);
    const auto k1 = compute_K1(bp, p, kDefault, 1.0);
    const double expected = k1_bracket(t, bp.sigma, bp.eps_bar, bp.Qk) / (t.P1 * bp.Qk * bp.sigma);
    EXPECT_NEAR(k1.K1, expected, 1e-10 * std::max(1.0, std::abs(expected)));
    EXPECT_NEAR(bp.Qk * k1.psi1_proj + k1.phi1_proj, 0.0, 1e-14 * std::max(1.0, std::abs(k1.psi1_proj)));
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(K2, FigureOneReference) {
  const auto p = table1();
  const auto bp = point(p, DomainSpec{}, {1, 0});
  const auto c = compute_K2(bp, p, kDefault);
  ASSERT_TRUE(c.K2.has_value());
  EXPECT_NEAR(*c.K2, -0.200035, 1e-6);
  EXPECT_LT(c.residual_4x4, 1e-12);
  EXPECT_LT(c.residual_2x2, 1e-12);
  EXPECT_LT(c.z_residual_first, 1e-12);
  EXPECT_LT(c.z_residual_second, 1e-12);
  const auto v = classify_branch(c, true);
  EXPECT_EQ(v.classification, BranchClass::PitchforkSuper);
  EXPECT_EQ(v.stability, BranchStability::StableBothSides);
}

TEST(K2, ArrivalAndSquareReferences) {
  const auto pa = table1(Variant::Arrival);
  EXPECT_NEAR(*compute_K2(point(pa, DomainSpec{}, {1, 0}), pa, kDefault).K2, -0.284854, 1e-6);
  const ModelParams sq{1.0, 3.0, 0.9, 0.008, Variant::Departure};
  const auto c = compute_K2(point(sq, DomainSpec{DomainKind::Square, 1.0}, {1, 1}), sq, kDefault);
  EXPECT_EQ(c.route, K2Route::Modal);
  EXPECT_NEAR(*c.K2, 0.057896, 1e-6);
}

TEST(K2, ProjectedAndModalRoutesAgree) {
  for (Variant v : {Variant::Departure, Variant::Arrival})
    for (double L : {1.0, 3.0, 7.0, 11.0})
      for (int k = 1; k <= 3; ++k) {
        const ModelParams p{1.0, 2.0, 0.1, 0.05, v};
        const auto bp = point(p, DomainSpec{DomainKind::Interval, L}, {k, 0});
        const auto a = compute_K2(bp, p, kDefault, K2Route::Projection4x4);
        const auto b = compute_K2(bp, p, kDefault, K2Route::Modal);
        EXPECT_NEAR(*a.K2, *b.K2, 1e-10 * std::max(1.0, std::abs(*a.K2))) << "L=" << L << " k=" << k;
        for (int i = 0; i < 4; ++i)
          EXPECT_NEAR(a.first_order_integrals[i], b.first_order_integrals[i],
                      1e-10 * std::max(1.0, std::abs(a.first_order_integrals[i])));
      }
  const ModelParams sq{1.0, 3.0, 0.9, 0.008, Variant::Departure};
  const auto bp = point(sq, DomainSpec{DomainKind::Square, 2.0}, {0, 3});
  EXPECT_NEAR(*compute_K2(bp, sq, kDefault, K2Route::Projection4x4).K2, *compute_K2(bp, sq, kDefault, K2Route::Modal).K2,
              1e-10);
}

TEST(K2, WeakFormReassemblyMatchesClosedForm) {
  for (Variant v : {Variant::Departure, Variant::Arrival}) {
    const auto p = table1(v);
    const auto bp = point(p, DomainSpec{}, {1, 0});
    const auto t = taylor_data(p, kDefault);
    const auto a = k2_system(t, bp.sigma, bp.eps_bar, bp.Qk);
    const auto b = weak_form_rows(t, bp.sigma, bp.eps_bar, bp.Qk);
    const double scale = a.M.cwiseAbs().maxCoeff();
    EXPECT_LT((a.M - b.M).cwiseAbs().maxCoeff(), 1e-12 * scale);
    EXPECT_LT((a.b - b.b).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.b.cwiseAbs().maxCoeff()));
  }
}

TEST(K2, SignFlipOfModeLeavesK2Unchanged) {
  const auto p = table1();
  for (K2Route route : {K2Route::Projection4x4, K2Route::Modal}) {
    auto bp = point(p, DomainSpec{}, {1, 0});
    const double before = *compute_K2(bp, p, kDefault, route).K2;
    bp.mode.norm_const = -bp.mode.norm_const;
    const auto after = compute_K2(bp, p, kDefault, route);
    EXPECT_DOUBLE_EQ(*after.K2, before);
    EXPECT_EQ(classify_branch(after, true).classification, BranchClass::PitchforkSuper);
  }
}

TEST(K2, ProjectedRouteRejectedForTwoAxisModes) {
  const ModelParams sq{1.0, 3.0, 0.9, 0.008, Variant::Departure};
  const auto bp = point(sq, DomainSpec{DomainKind::Square, 1.0}, {1, 1});
  EXPECT_THROW(compute_K2(bp, sq, kDefault, K2Route::Projection4x4), Error);
}

TEST(K2, ResonantSecondHarmonicIsReported) {
  const auto p = table1();
  const double C = chemotactic_gain(p, kDefault), lA = p.lambda0 * p.Abar();
  const double a = 4.0 * C, b = -5.0 * lA, c = -lA * lA;
  const double s1 = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
  const auto bp = point(p, DomainSpec{DomainKind::Interval, pi / std::sqrt(s1)}, {1, 0});
  EXPECT_NEAR(k2_solvability(taylor_data(p, kDefault), bp.sigma), 0.0, 1e-12);
  for (K2Route route : {K2Route::Projection4x4, K2Route::Modal}) {
    try {
      compute_K2(bp, p, kDefault, route);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ResonantK2);
    }
  }
}

TEST(K2, UndefinedQIsDegenerate) {
  const auto p = table1();
  const double A = p.Abar();
  const double target = p.lambda0 * kDefault.f(A) / (2.0 * kDefault.f1(A));
  const auto bp = point(p, DomainSpec{DomainKind::Interval, pi / std::sqrt(target)}, {1, 0});
  try {
    compute_K2(bp, p, kDefault);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateProjection);
  }
}

TEST(ClassifyBranch, TheoremCases) {
  K1Result zero;
  auto v = classify_branch(coeffs(zero, -1.0), true);
  EXPECT_EQ(v.classification, BranchClass::PitchforkSuper);
  EXPECT_EQ(v.stability, BranchStability::StableBothSides);
  v = classify_branch(coeffs(zero, 1.0), true);
  EXPECT_EQ(v.classification, BranchClass::PitchforkSub);
  EXPECT_EQ(v.stability, BranchStability::Unstable);
  v = classify_branch(coeffs(zero, -1.0), false);
  EXPECT_EQ(v.stability, BranchStability::Unstable);
  K1Result neg;
  neg.K1 = -0.5;
  v = classify_branch(coeffs(neg, 0.0), true);
  EXPECT_EQ(v.classification, BranchClass::TranscriticalSuper);
  EXPECT_EQ(v.stability, BranchStability::StablePositiveSide);
  BranchCoefficients none;
  EXPECT_EQ(classify_branch(none, true).classification, BranchClass::Degenerate);
}
