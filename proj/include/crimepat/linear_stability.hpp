#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "crimepat/error.hpp"
#include "crimepat/kinetics.hpp"
#include "crimepat/spectral.hpp"

namespace crimepat {

/// Effective A-diffusivity of the linearization at the homogeneous state:
/// eta + eta' B (departure) or eta - eta' B (arrival).
inline double effective_diffusivity(const ModelParams& p, const KineticsPack& kin) {
  const double A = p.Abar();
  if (p.variant == Variant::Departure) return kin.eta(A) + kin.eta1(A) * p.Bbar;
  const double d = kin.eta(A) - kin.eta1(A) * p.Bbar;
  if (!(d > 0.0))
    throw Error(ErrorKind::HypothesisViolated,
                "arrival model needs eta(Abar) > eta'(Abar) Bbar, got D = " + std::to_string(d));
  return d;
}

/// 2 Bbar f'/f + rhobar - 1, evaluated at Abar.
inline double chemotactic_gain(const ModelParams& p, const KineticsPack& kin) {
  const double A = p.Abar();
  return 2.0 * p.Bbar * kin.f1(A) / kin.f(A) + p.rhobar() - 1.0;
}

inline double bifurcation_value(const ModelParams& p, const KineticsPack& kin, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::ZeroModeExcluded, "bifurcation value needs sigma > 0");
  const double D = effective_diffusivity(p, kin);
  const double lA = p.lambda0 * p.Abar();
  return (chemotactic_gain(p, kin) * sigma - lA) / (D * (sigma + lA) * sigma);
}

/// Continuous maximiser of eps_bar(sigma); empty when the gain C is not positive.
inline std::optional<double> peak_sigma(const ModelParams& p, const KineticsPack& kin) {
  const double C = chemotactic_gain(p, kin);
  if (!(C > 0.0)) return std::nullopt;
  const double lA = p.lambda0 * p.Abar();
  return lA * (1.0 + std::sqrt(1.0 + C)) / C;
}

inline constexpr int kFallbackMaxIndex = 64;

/// Largest per-axis index scanned when the caller gives no cutoff: every mode with
/// sigma <= 100 sigma_peak, or index 64 when no positive bifurcation value exists.
inline int default_max_index(const ModelParams& p, const KineticsPack& kin, const DomainSpec& d) {
  const auto sp = peak_sigma(p, kin);
  if (!sp) return kFallbackMaxIndex;
  const double kmax = d.L * std::sqrt(100.0 * *sp) / std::numbers::pi;
  return std::max(1, static_cast<int>(std::ceil(kmax)));
}

inline std::vector<EigenMode> scan_set(const ModelParams& p, const KineticsPack& kin, const DomainSpec& d,
                                       std::optional<int> mode_cutoff) {
  if (mode_cutoff && *mode_cutoff < 1) throw Error(ErrorKind::Precondition, "mode_cutoff must be >= 1");
  if (mode_cutoff) return enumerate_modes(d, *mode_cutoff);
  const auto sp = peak_sigma(p, kin);
  if (!sp) return enumerate_modes(d, kFallbackMaxIndex);
  return enumerate_modes_below(d, 100.0 * *sp);
}

struct StabilityReport {
  ModeIndex index;
  double sigma = 0.0;
  double eps_bar = 0.0;
  double trace = 0.0;  // Tr of the characteristic polynomial xi^2 + Tr xi + Det
  double det = 0.0;
  bool unstable = false;
};

inline StabilityReport stability_report(const ModelParams& p, const KineticsPack& kin, const EigenMode& mode) {
  const double A = p.Abar();
  const double r = p.rhobar();
  const double D = effective_diffusivity(p, kin);
  const double s = mode.sigma;
  const double a = p.eps * D * s + 1.0 - r;
  StabilityReport rep;
  rep.index = mode.index;
  rep.sigma = s;
  rep.eps_bar = bifurcation_value(p, kin, s);
  rep.trace = a + s + p.lambda0 * A;
  rep.det = a * (s + p.lambda0 * A) - A * (2.0 * r * kin.f1(A) / kin.f(A) * s - p.lambda0 * r);
  rep.unstable = rep.det < 0.0;
  return rep;
}

inline std::vector<StabilityReport> scan_modes(const ModelParams& p, const KineticsPack& kin, const DomainSpec& d,
                                               std::optional<int> mode_cutoff = std::nullopt) {
  std::vector<StabilityReport> out;
  for (const auto& m : scan_set(p, kin, d, mode_cutoff)) out.push_back(stability_report(p, kin, m));
  return out;
}

struct InstabilityResult {
  bool unstable = false;
  std::optional<ModeIndex> witness;
  double eps_bar_max = 0.0;
};

inline InstabilityResult is_homogeneous_unstable(const ModelParams& p, const KineticsPack& kin,
                                                 const DomainSpec& d,
                                                 std::optional<int> mode_cutoff = std::nullopt) {
  InstabilityResult res;
  res.eps_bar_max = -std::numeric_limits<double>::infinity();
  std::optional<ModeIndex> best;
  for (const auto& m : scan_set(p, kin, d, mode_cutoff)) {
    const double e = bifurcation_value(p, kin, m.sigma);
    if (e > res.eps_bar_max) {
      res.eps_bar_max = e;
      best = m.index;
    }
  }
  res.unstable = p.eps < res.eps_bar_max;
  if (res.unstable) res.witness = best;
  return res;
}

struct WavemodeSelection {
  std::vector<ModeIndex> modes;  // every index attaining the maximum
  double sigma = 0.0;
  double eps_bar_max = 0.0;
};

inline constexpr double kTieTolerance = 1e-12;

inline WavemodeSelection select_wavemode(const ModelParams& p, const KineticsPack& kin, const DomainSpec& d,
                                         std::optional<int> mode_cutoff = std::nullopt) {
  const auto modes = scan_set(p, kin, d, mode_cutoff);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> values;
  values.reserve(modes.size());
  for (const auto& m : modes) {
    values.push_back(bifurcation_value(p, kin, m.sigma));
    best = std::max(best, values.back());
  }
  if (!(best > 0.0))
    throw Error(ErrorKind::NoPositiveBifurcation, "no mode has a positive bifurcation value");
  WavemodeSelection sel;
  sel.eps_bar_max = best;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (std::abs(values[i] - best) <= kTieTolerance * std::abs(best)) {
      sel.modes.push_back(modes[i].index);
      sel.sigma = modes[i].sigma;
    }
  }
  return sel;
}

struct BifurcationConditions {
  bool Qk_denominator_nonzero = true;
  bool eps_positive = true;
  bool non_resonant = true;
  bool eps_distinct = true;
  // Reported only: square modes with a symmetric partner have a double eigenvalue.
  bool simple_eigenvalue = true;

  [[nodiscard]] bool all_passed() const {
    return Qk_denominator_nonzero && eps_positive && non_resonant && eps_distinct;
  }
};

struct BifurcationPoint {
  EigenMode mode;
  double sigma = 0.0;
  double eps_bar = 0.0;
  double Qk = std::numeric_limits<double>::quiet_NaN();
  BifurcationConditions conditions;
  std::optional<double> resonant_sigma;  // sigma* paired with this mode, if any
  std::vector<std::string> failures;
};

/// Denominator of Q_k: 2 rhobar (f'/f) sigma - lambda0 rhobar.
inline double q_denominator(const ModelParams& p, const KineticsPack& kin, double sigma) {
  const double A = p.Abar();
  return 2.0 * p.rhobar() * kin.f1(A) / kin.f(A) * sigma - p.lambda0 * p.rhobar();
}

namespace detail {

inline bool near_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)); }

/// Indices != idx whose eigenvalue matches target to 1e-9 relative.
inline std::optional<ModeIndex> eigen_match(const DomainSpec& d, double target, ModeIndex idx) {
  if (!(target > 0.0)) return std::nullopt;
  const double w = std::numbers::pi / d.L;
  const double kk = target / (w * w);  // m^2 + n^2
  if (d.kind == DomainKind::Interval) {
    const double k = std::sqrt(kk);
    for (long c : {static_cast<long>(std::floor(k)), static_cast<long>(std::ceil(k))}) {
      if (c < 1 || c == idx.m) continue;
      if (near_rel(w * w * static_cast<double>(c * c), target, 1e-9)) return ModeIndex{static_cast<int>(c), 0};
    }
    return std::nullopt;
  }
  const long mmax = static_cast<long>(std::ceil(std::sqrt(kk))) + 1;
  for (long m = 0; m <= mmax; ++m) {
    const double rest = kk - static_cast<double>(m * m);
    if (rest < -1.0) break;
    const double nn = std::sqrt(std::max(rest, 0.0));
    for (long n : {static_cast<long>(std::floor(nn)), static_cast<long>(std::ceil(nn))}) {
      if (n < 0 || (m == 0 && n == 0)) continue;
      if (m == idx.m && n == idx.n) continue;
      if (near_rel(w * w * static_cast<double>(m * m + n * n), target, 1e-9))
        return ModeIndex{static_cast<int>(m), static_cast<int>(n)};
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// sigma* resonating with sigma_k: lambda0 Abar (sigma_k + lambda0 Abar) / (C sigma_k - lambda0 Abar).
inline std::optional<double> resonant_partner(const ModelParams& p, const KineticsPack& kin, double sigma_k) {
  const double lA = p.lambda0 * p.Abar();
  const double den = chemotactic_gain(p, kin) * sigma_k - lA;
  if (!(den > 0.0)) return std::nullopt;
  return lA * (sigma_k + lA) / den;
}

inline BifurcationPoint check_bifurcation_conditions(const ModelParams& p, const KineticsPack& kin,
                                                     const EigenMode& mode,
                                                     std::optional<int> mode_cutoff = std::nullopt) {
  const double A = p.Abar();
  const double s = mode.sigma;
  BifurcationPoint bp;
  bp.mode = mode;
  bp.sigma = s;
  bp.eps_bar = bifurcation_value(p, kin, s);
  auto& c = bp.conditions;

  const double qden = q_denominator(p, kin, s);
  const double lA = p.lambda0 * A;
  c.Qk_denominator_nonzero = std::abs(qden) > 1e-12 * (std::abs(s) + lA) * p.rhobar();
  if (c.Qk_denominator_nonzero) {
    bp.Qk = (s + lA) / qden;
  } else {
    bp.failures.push_back("sigma_k equals lambda0 f(Abar) / (2 f'(Abar)); Q_k is undefined");
  }

  const double lhs = (lA + (1.0 - p.rhobar()) * s) / (2.0 * s * p.Bbar);
  c.eps_positive = bp.eps_bar > 0.0 && lhs < kin.f1(A) / kin.f(A);
  if (!c.eps_positive) bp.failures.push_back("bifurcation value is not positive");

  bp.resonant_sigma = resonant_partner(p, kin, s);
  if (bp.resonant_sigma) {
    if (auto hit = detail::eigen_match(mode.domain, *bp.resonant_sigma, mode.index)) {
      c.non_resonant = false;
      bp.failures.push_back("resonant with mode " + to_string(*hit, mode.domain.kind));
    }
  }

  for (const auto& other : scan_set(p, kin, mode.domain, mode_cutoff)) {
    if (other.index == mode.index) continue;
    if (detail::near_rel(other.sigma, s, 1e-14)) {
      c.simple_eigenvalue = false;
      continue;
    }
    const double e = bifurcation_value(p, kin, other.sigma);
    if (std::abs(e - bp.eps_bar) <= kTieTolerance * std::max(std::abs(e), std::abs(bp.eps_bar))) {
      c.eps_distinct = false;
      bp.failures.push_back("bifurcation value coincides with mode " + to_string(other.index, mode.domain.kind));
      break;
    }
  }
  return bp;
}

}  // namespace crimepat
