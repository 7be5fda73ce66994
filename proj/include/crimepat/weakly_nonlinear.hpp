#pragma once

// Branch coefficients K1, K2 of eps_k(s) = eps_bar + K1 s + K2 s^2 + ... and the
// stability verdict for the bifurcating steady states.

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "crimepat/error.hpp"
#include "crimepat/kinetics.hpp"
#include "crimepat/linear_stability.hpp"
#include "crimepat/spectral.hpp"

namespace crimepat {

/// Everything the expansion needs from the kinetics, evaluated at Abar.
/// Both variants share one form: the A-flux is eps * Lap(P(A)) with
///   P1 = P'(Abar), P2 = P''(Abar), P3 = P'''(Abar) / 6.
struct TaylorData {
  double Abar = 0.0, Bbar = 0.0, rhobar = 0.0, lambda0 = 0.0;
  double p = 0.0;   // f'/f
  double q = 0.0;   // f''/f - (f'/f)^2
  double r3 = 0.0;  // f'''/f - 3 f' f''/f^2 + 2 (f'/f)^3
  double P1 = 0.0, P2 = 0.0, P3 = 0.0;
  double C = 0.0;   // 2 Bbar f'/f + rhobar - 1
};

inline TaylorData taylor_data(const ModelParams& prm, const KineticsPack& kin) {
  TaylorData t;
  t.Abar = prm.Abar();
  t.Bbar = prm.Bbar;
  t.rhobar = prm.rhobar();
  t.lambda0 = prm.lambda0;
  const double A = t.Abar;
  const double f = kin.f(A), f1 = kin.f1(A), f2 = kin.f2(A), f3 = kin.f3(A);
  t.p = f1 / f;
  t.q = f2 / f - t.p * t.p;
  t.r3 = f3 / f - 3.0 * f1 * f2 / (f * f) + 2.0 * t.p * t.p * t.p;
  const double e1 = kin.eta1(A), e2 = kin.eta2(A), e3 = kin.eta3(A);
  t.P1 = effective_diffusivity(prm, kin);
  if (prm.variant == Variant::Departure) {
    t.P2 = 2.0 * e1 + e2 * t.Bbar;
    t.P3 = e2 / 2.0 + e3 * t.Bbar / 6.0;
  } else {
    t.P2 = -e2 * t.Bbar;
    t.P3 = -(e2 + e3 * t.Bbar) / 6.0;
  }
  t.C = 2.0 * t.Bbar * t.p + t.rhobar - 1.0;
  return t;
}

enum class BranchClass { TranscriticalSub, TranscriticalSuper, PitchforkSub, PitchforkSuper, Degenerate };

inline std::string to_string(BranchClass c) {
  switch (c) {
    case BranchClass::TranscriticalSub: return "transcritical-sub";
    case BranchClass::TranscriticalSuper: return "transcritical-super";
    case BranchClass::PitchforkSub: return "pitchfork-sub";
    case BranchClass::PitchforkSuper: return "pitchfork-super";
    case BranchClass::Degenerate: return "degenerate";
  }
  return "?";
}

enum class BranchStability { StableBothSides, StablePositiveSide, StableNegativeSide, Unstable, Undetermined };

inline std::string to_string(BranchStability s) {
  switch (s) {
    case BranchStability::StableBothSides: return "stable";
    case BranchStability::StablePositiveSide: return "stable for s>0";
    case BranchStability::StableNegativeSide: return "stable for s<0";
    case BranchStability::Unstable: return "unstable";
    case BranchStability::Undetermined: return "undetermined";
  }
  return "?";
}

enum class K2Route { Auto, Projection4x4, Modal };

struct BranchCoefficients {
  double K1 = 0.0;
  std::optional<double> K2;
  // int psi1 |grad Phi|^2, int phi1 |grad Phi|^2, int psi1 Phi^2, int phi1 Phi^2
  std::array<double, 4> first_order_integrals{};
  // int psi2 Phi, int phi2 Phi
  std::array<double, 2> second_order_integrals{};
  // int psi1 Phi, int phi1 Phi
  std::array<double, 2> projections{};
  K2Route route = K2Route::Auto;
  double residual_4x4 = 0.0;
  double rcond_4x4 = 0.0;
  double residual_2x2 = 0.0;
  double z_residual_first = 0.0;
  double z_residual_second = 0.0;
};

namespace detail {

inline void require_usable(const BifurcationPoint& bp) {
  if (!bp.conditions.Qk_denominator_nonzero || !std::isfinite(bp.Qk))
    throw Error(ErrorKind::DegenerateProjection, "Q_k is undefined for this mode");
}

inline double rel_residual(const Eigen::MatrixXd& M, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  const double scale = M.cwiseAbs().rowwise().sum().maxCoeff() * x.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (M * x - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace detail

/// Coefficient of int Phi^3 in (P1 Q sigma) K1, written in closed form.
inline double k1_bracket(const TaylorData& t, double sigma, double eps_bar, double Q) {
  const double a = 2.0 * t.rhobar * t.p * sigma - t.lambda0 * t.rhobar;
  const double den = a + (sigma + t.lambda0 * t.Abar) * Q;
  const double g = t.lambda0 * Q - (t.p + t.rhobar * t.q * Q) * Q * sigma;
  return (t.rhobar - 1.0 - t.P1 * eps_bar * sigma - t.Abar * Q) * g / den +
         (Q - 0.5 * t.P2 * Q * Q * eps_bar * sigma);
}

struct K1Result {
  double K1 = 0.0;
  double psi1_proj = 0.0;  // int psi1 Phi
  double phi1_proj = 0.0;  // int phi1 Phi
  double I3 = 0.0;
};

/// Projections and K1 assembled term by term from the tested s^2 equations.
/// I3 defaults to the closed-form self integral; tests may substitute any value.
inline K1Result compute_K1(const BifurcationPoint& bp, const ModelParams& prm, const KineticsPack& kin,
                           std::optional<double> I3_override = std::nullopt) {
  detail::require_usable(bp);
  const TaylorData t = taylor_data(prm, kin);
  const double s = bp.sigma, e = bp.eps_bar, Q = bp.Qk;
  const double a = 2.0 * t.rhobar * t.p * s - t.lambda0 * t.rhobar;
  const double b = s + t.lambda0 * t.Abar;
  const double den = a + b * Q;
  if (!(std::abs(den) > 1e-14 * (std::abs(a) + std::abs(b * Q))))
    throw Error(ErrorKind::DegenerateProjection, "first-order projection system is singular");

  K1Result r;
  r.I3 = I3_override.value_or(self_integrals(bp.mode).I3);
  const double g = t.lambda0 * Q - (t.p + t.rhobar * t.q * Q) * Q * s;
  r.psi1_proj = g * r.I3 / den;
  r.phi1_proj = -Q * r.psi1_proj;
  const double phi_grad2 = 0.5 * s * r.I3;
  const double rhs = (t.rhobar - 1.0 - t.P1 * e * s) * r.psi1_proj + t.Abar * r.phi1_proj +
                     t.P2 * Q * Q * e * phi_grad2 + (Q - t.P2 * Q * Q * e * s) * r.I3;
  r.K1 = rhs / (t.P1 * Q * s);
  return r;
}

/// Matrix and right-hand side (per unit int Phi^4) of the first-order integral system.
struct K2System {
  Eigen::Matrix4d M;
  Eigen::Vector4d b;
};

inline K2System k2_system(const TaylorData& t, double sigma, double eps_bar, double Q) {
  const double s = sigma, e = eps_bar, r = t.rhobar, l = t.lambda0, A = t.Abar, D = t.P1;
  const double g = 2.0 * t.p * Q + 2.0 * r * t.q * Q * Q;
  K2System sys;
  sys.M << r - 1.0 - 2.0 * D * e * s, A, 2.0 * D * e * s * s, 0.0,
           l * r - 4.0 * r * t.p * s, l * A + 2.0 * s, 4.0 * r * t.p * s * s, -2.0 * s * s,
           2.0 * D * e, 0.0, r - 1.0 - 2.0 * D * e * s, A,
           4.0 * r * t.p, -2.0, l * r - 4.0 * r * t.p * s, l * A + 2.0 * s;
  sys.b << -(2.0 / 3.0 * t.P2 * Q * Q * e * s * s + Q * s / 3.0),
           -(2.0 / 3.0 * g * s * s + l * Q * s / 3.0),
           2.0 / 3.0 * t.P2 * Q * Q * e * s - Q,
           2.0 / 3.0 * g * s - l * Q;
  return sys;
}

/// 4 C sigma^2 - 5 lambda0 Abar sigma - (lambda0 Abar)^2; the system is singular exactly when this vanishes.
inline double k2_solvability(const TaylorData& t, double sigma) {
  const double lA = t.lambda0 * t.Abar;
  return 4.0 * t.C * sigma * sigma - 5.0 * lA * sigma - lA * lA;
}

/// The same four weak-form equations rebuilt from the s^2 equations tested against
/// |grad Phi|^2 (rows 0-1) and Phi^2 (rows 2-3), using only integration-by-parts rules.
/// Valid for modes that vary along one axis.
inline K2System weak_form_rows(const TaylorData& t, double sigma, double eps_bar, double Q) {
  using Lin = Eigen::Matrix<double, 5, 1>;  // coefficients of X1..X4 and int Phi^4
  auto unit = [](int i) {
    Lin v = Lin::Zero();
    v(i) = 1.0;
    return v;
  };
  const double s = sigma;
  const Lin X1 = unit(0), X2 = unit(1), X3 = unit(2), X4 = unit(3), I4 = unit(4);

  struct Tested {
    Lin psi, phi, lap_psi, lap_phi, grad2, phi2;
  };
  // Against w = |grad Phi|^2: grad|grad Phi|^2 = -2 sigma Phi grad Phi for such modes.
  const Tested wg{X1, X2, 2.0 * s * s * X3 - 2.0 * s * X1, 2.0 * s * s * X4 - 2.0 * s * X2,
                  s * s * I4, s / 3.0 * I4};
  // Against w = Phi^2: Lap(Phi^2) = 2|grad Phi|^2 - 2 sigma Phi^2.
  const Tested wp{X3, X4, 2.0 * X1 - 2.0 * s * X3, 2.0 * X2 - 2.0 * s * X4, s / 3.0 * I4, I4};

  const double e = eps_bar, r = t.rhobar, l = t.lambda0, A = t.Abar;
  const double g = (2.0 * t.p + 2.0 * r * t.q * Q) * Q;
  auto a_eq = [&](const Tested& w) -> Lin {
    return t.P1 * e * w.lap_psi + (r - 1.0) * w.psi + A * w.phi + t.P2 * Q * Q * e * w.grad2 +
           (Q - t.P2 * Q * Q * e * s) * w.phi2;
  };
  // rho equation multiplied through by -1.
  auto rho_eq = [&](const Tested& w) -> Lin {
    return -w.lap_phi + 2.0 * r * t.p * w.lap_psi + l * r * w.psi + l * A * w.phi + g * w.grad2 -
           (g * s - l * Q) * w.phi2;
  };
  const std::array<Lin, 4> rows{a_eq(wg), rho_eq(wg), a_eq(wp), rho_eq(wp)};
  K2System sys;
  for (int i = 0; i < 4; ++i) {
    sys.M.row(i) = rows[i].head<4>().transpose();
    sys.b(i) = -rows[i](4);
  }
  return sys;
}

namespace detail {

struct FirstOrder {
  std::array<double, 4> X{};
  double residual = 0.0;
  double rcond = 0.0;
};

inline FirstOrder first_order_projected(const TaylorData& t, const BifurcationPoint& bp, double I4) {
  const double s = bp.sigma;
  const double det_factor = k2_solvability(t, s);
  const double lA = t.lambda0 * t.Abar;
  if (std::abs(det_factor) <= 1e-12 * (4.0 * std::abs(t.C) * s * s + 5.0 * lA * s + lA * lA))
    throw Error(ErrorKind::ResonantK2,
                "first-order system is singular: 2 Bbar f'/f + rhobar - 1 equals lambda0 Abar (lambda0 Abar + "
                "5 sigma_k) / (4 sigma_k^2)");
  const K2System sys = k2_system(t, s, bp.eps_bar, bp.Qk);
  const Eigen::Vector4d rhs = sys.b * I4;
  Eigen::PartialPivLU<Eigen::Matrix4d> lu(sys.M);
  const Eigen::Vector4d x = lu.solve(rhs);
  FirstOrder fo;
  for (int i = 0; i < 4; ++i) fo.X[i] = x(i);
  fo.residual = rel_residual(sys.M, x, rhs);
  fo.rcond = lu.rcond();
  return fo;
}

/// Solves the s^2 problem exactly on the finite cosine support of Phi^2 and |grad Phi|^2.
inline FirstOrder first_order_modal(const TaylorData& t, const BifurcationPoint& bp) {
  const auto& mode = bp.mode;
  const double L = mode.domain.L;
  const bool square = mode.domain.kind == DomainKind::Square;
  const int m = mode.index.m, n = mode.index.n;
  const double a = m * std::numbers::pi / L, b = n * std::numbers::pi / L;
  const double c2 = mode.norm_const * mode.norm_const / 4.0;
  const double s = bp.sigma, e = bp.eps_bar, Q = bp.Qk;
  const double g = (2.0 * t.p + 2.0 * t.rhobar * t.q * Q) * Q;

  // Raw modes cos(i pi x / L) cos(j pi y / L), keyed by (i, j).
  std::map<std::pair<int, int>, std::pair<double, double>> coef;  // (Phi^2, |grad Phi|^2)
  auto add = [&](int i, int j, double p2, double g2) {
    auto& c = coef[{i, j}];
    c.first += c2 * p2;
    c.second += c2 * g2;
  };
  add(0, 0, 1.0, a * a + b * b);
  add(2 * m, 0, 1.0, b * b - a * a);
  add(0, 2 * n, 1.0, a * a - b * b);
  add(2 * m, 2 * n, 1.0, -(a * a + b * b));

  auto norm2 = [&](int i, int j) {
    const double nx = i == 0 ? L : L / 2.0;
    const double ny = square ? (j == 0 ? L : L / 2.0) : 1.0;
    return nx * ny;
  };

  FirstOrder fo;
  double worst = 0.0;
  double rmin = 1.0;
  for (const auto& [key, val] : coef) {
    const auto [i, j] = key;
    const auto [P2c, G2c] = val;
    if (P2c == 0.0 && G2c == 0.0) continue;
    const double sj = std::pow(i * std::numbers::pi / L, 2) + std::pow(j * std::numbers::pi / L, 2);
    Eigen::Matrix2d H;
    H << -t.P1 * e * sj + t.rhobar - 1.0, t.Abar, 2.0 * t.rhobar * t.p * sj - t.lambda0 * t.rhobar,
        -sj - t.lambda0 * t.Abar;
    Eigen::Vector2d rhs;
    rhs << -t.P2 * Q * Q * e * G2c - (Q - t.P2 * Q * Q * e * s) * P2c, g * G2c - (g * s - t.lambda0 * Q) * P2c;
    Eigen::PartialPivLU<Eigen::Matrix2d> lu(H);
    const double rc = lu.rcond();
    if (!(rc > 1e-13))
      throw Error(ErrorKind::ResonantK2, "harmonic (" + std::to_string(i) + "," + std::to_string(j) +
                                             ") of Phi^2 is itself neutrally stable at eps_bar");
    const Eigen::Vector2d x = lu.solve(rhs);
    worst = std::max(worst, rel_residual(H, x, rhs));
    rmin = std::min(rmin, rc);
    const double w = norm2(i, j);
    fo.X[0] += x(0) * G2c * w;
    fo.X[1] += x(1) * G2c * w;
    fo.X[2] += x(0) * P2c * w;
    fo.X[3] += x(1) * P2c * w;
  }
  fo.residual = worst;
  fo.rcond = rmin;
  return fo;
}

}  // namespace detail

/// Solves for the second-order projections and K2 given the four first-order integrals.
inline void finish_K2(const TaylorData& t, const BifurcationPoint& bp, double I4, BranchCoefficients& out) {
  const double s = bp.sigma, e = bp.eps_bar, Q = bp.Qk;
  const auto& X = out.first_order_integrals;
  const double R = (t.lambda0 - 2.0 * t.p * s - 2.0 * t.rhobar * t.q * Q * s) * X[2] + t.lambda0 * Q * X[3] +
                   2.0 * t.p * X[0] - 2.0 * t.p * Q * X[1] -
                   (t.rhobar * t.r3 * Q + 2.0 * t.q) * Q * Q * s * I4 / 3.0;
  const double a = 2.0 * t.rhobar * t.p * s - t.lambda0 * t.rhobar;
  const double b = s + t.lambda0 * t.Abar;
  Eigen::Matrix2d M;
  M << a, -b, Q, 1.0;
  const Eigen::Vector2d rhs(R, 0.0);
  if (!(std::abs(M.determinant()) > 1e-14 * (std::abs(a) + std::abs(b * Q))))
    throw Error(ErrorKind::DegenerateProjection, "second-order projection system is singular");
  const Eigen::Vector2d y = M.partialPivLu().solve(rhs);
  out.second_order_integrals = {y(0), y(1)};
  out.residual_2x2 = detail::rel_residual(M, y, rhs);
  out.z_residual_second = std::abs(Q * y(0) + y(1)) / std::max(1.0, std::abs(Q * y(0)) + std::abs(y(1)));
  const double num = (t.rhobar - 1.0 - t.P1 * e * s) * y(0) + t.Abar * y(1) + (1.0 - t.P2 * Q * e * s) * X[2] +
                     Q * X[3] - t.P3 * Q * Q * Q * e * s * I4;
  out.K2 = num / (t.P1 * Q * s);
}

inline BranchCoefficients compute_K2(const BifurcationPoint& bp, const ModelParams& prm, const KineticsPack& kin,
                                     K2Route route = K2Route::Auto) {
  detail::require_usable(bp);
  const K1Result k1 = compute_K1(bp, prm, kin);
  if (k1.K1 != 0.0) throw Error(ErrorKind::Precondition, "K2 is defined only when K1 = 0");
  const TaylorData t = taylor_data(prm, kin);
  const double I4 = self_integrals(bp.mode).I4;

  if (route == K2Route::Auto) route = is_effectively_1d(bp.mode) ? K2Route::Projection4x4 : K2Route::Modal;
  if (route == K2Route::Projection4x4 && !is_effectively_1d(bp.mode))
    throw Error(ErrorKind::Precondition, "the projected 4x4 system holds only for modes varying along one axis");

  BranchCoefficients out;
  out.K1 = k1.K1;
  out.projections = {k1.psi1_proj, k1.phi1_proj};
  out.z_residual_first = std::abs(bp.Qk * k1.psi1_proj + k1.phi1_proj);
  out.route = route;
  const auto fo = route == K2Route::Modal ? detail::first_order_modal(t, bp) : detail::first_order_projected(t, bp, I4);
  out.first_order_integrals = fo.X;
  out.residual_4x4 = fo.residual;
  out.rcond_4x4 = fo.rcond;
  finish_K2(t, bp, I4, out);
  return out;
}

struct BranchVerdict {
  BranchClass classification = BranchClass::Degenerate;
  BranchStability stability = BranchStability::Undetermined;
};

inline BranchVerdict classify_branch(const BranchCoefficients& c, bool is_principal) {
  BranchVerdict v;
  if (c.K1 < 0.0) {
    v.classification = BranchClass::TranscriticalSuper;
    v.stability = BranchStability::StablePositiveSide;
  } else if (c.K1 > 0.0) {
    v.classification = BranchClass::TranscriticalSub;
    v.stability = BranchStability::StableNegativeSide;
  } else if (c.K2 && *c.K2 < 0.0) {
    v.classification = BranchClass::PitchforkSuper;
    v.stability = BranchStability::StableBothSides;
  } else if (c.K2 && *c.K2 > 0.0) {
    v.classification = BranchClass::PitchforkSub;
    v.stability = BranchStability::Unstable;
  } else {
    v.classification = BranchClass::Degenerate;
    v.stability = BranchStability::Undetermined;
  }
  if (!is_principal) v.stability = BranchStability::Unstable;
  return v;
}

}  // namespace crimepat
