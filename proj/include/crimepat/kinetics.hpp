#pragma once

// Model parameters, the nonlinear function pack (eta, f and derivatives) and
// the spatially homogeneous equilibrium shared by both model variants.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crimepat/error.hpp"

namespace crimepat {

using ScalarFn = std::function<double(double)>;

/// Pointwise evaluators for the diffusion heterogeneity eta(A) and the
/// perception function f(A), each with derivatives up to third order.
/// Packs must be pure; they are shared freely across threads.
struct KineticsPack {
  std::string name;
  ScalarFn eta, eta1, eta2, eta3;
  ScalarFn f, f1, f2, f3;
};

/// Departure: eta depends on the source site, A-flux is eps*Lap(eta(A)(A-A0)).
/// Arrival: eta depends on the destination, A-flux is eps*div(eta^2 grad((A-A0)/eta)).
enum class Variant { Departure, Arrival };

inline std::string_view to_string(Variant v) {
  return v == Variant::Departure ? "departure" : "arrival";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "departure" || s == "12") return Variant::Departure;
  if (s == "arrival" || s == "13") return Variant::Arrival;
  throw Error(ErrorKind::Config, "unknown model variant '" + std::string(s) + "'");
}

struct HomogeneousState {
  double Abar;
  double rhobar;
};

struct ModelParams {
  double A0 = 1.0;
  double Bbar = 2.0;
  double lambda0 = 0.1;
  double eps = 0.029;
  Variant variant = Variant::Departure;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

  [[nodiscard]] double Abar() const { return A0 + Bbar; }
  [[nodiscard]] double rhobar() const { return Bbar / (A0 + Bbar); }

  void validate() const {
    if (!(A0 > 0.0)) throw Error(ErrorKind::Precondition, "A0 must be > 0");
    if (!(Bbar > 0.0)) throw Error(ErrorKind::Precondition, "Bbar must be > 0");
    if (!(lambda0 > 0.0 && lambda0 <= 1.0))
      throw Error(ErrorKind::Precondition, "lambda0 must lie in (0,1]");
    if (!(eps > 0.0)) throw Error(ErrorKind::Precondition, "eps must be > 0");
  }
};

/// (A0 + Bbar, Bbar / (A0 + Bbar)); a zero of both reaction terms.
inline HomogeneousState homogeneous_state(const ModelParams& p) {
  return {p.A0 + p.Bbar, p.Bbar / (p.A0 + p.Bbar)};
}

inline std::vector<std::string> builtin_kinetics_names() {
  return {"paper-default", "constant-eta-linear-f"};
}

/// "paper-default": eta = 1 - exp(-A), f = log(1 + A).
/// "constant-eta-linear-f": eta = 1, f = A (the classical constant-diffusion model).
inline KineticsPack builtin_kinetics(std::string_view name) {
  if (name == "paper-default") {
    return KineticsPack{
        std::string(name),
        [](double a) { return -std::expm1(-a); },
        [](double a) { return std::exp(-a); },
        [](double a) { return -std::exp(-a); },
        [](double a) { return std::exp(-a); },
        [](double a) { return std::log1p(a); },
        [](double a) { return 1.0 / (1.0 + a); },
        [](double a) { return -1.0 / ((1.0 + a) * (1.0 + a)); },
        [](double a) { return 2.0 / ((1.0 + a) * (1.0 + a) * (1.0 + a)); },
    };
  }
  if (name == "constant-eta-linear-f") {
    return KineticsPack{
        std::string(name),
        [](double) { return 1.0; },
        [](double) { return 0.0; },
        [](double) { return 0.0; },
        [](double) { return 0.0; },
        [](double a) { return a; },
        [](double) { return 1.0; },
        [](double) { return 0.0; },
        [](double) { return 0.0; },
    };
  }
  throw Error(ErrorKind::NotFound, "no builtin kinetics named '" + std::string(name) + "'");
}

struct Interval {
  double lo;
  double hi;
};

/// [1e-3, 10*Abar]
inline Interval default_validation_range(const ModelParams& p) {
  return {1e-3, 10.0 * p.Abar()};
}

struct KineticsCheck {
  std::string assumption;
  bool passed = true;
  std::optional<double> first_violation;
  // Informational checks are reported but do not affect all_passed().
  bool informational = false;
};

struct KineticsReport {
  std::vector<KineticsCheck> checks;

  [[nodiscard]] bool all_passed() const {
    for (const auto& c : checks)
      if (!c.informational && !c.passed) return false;
    return true;
  }

  [[nodiscard]] const KineticsCheck* find(std::string_view assumption) const {
    for (const auto& c : checks)
      if (c.assumption == assumption) return &c;
    return nullptr;
  }
};

namespace detail {

inline bool derivative_agrees(const ScalarFn& lower, const ScalarFn& deriv, double a) {
  constexpr double step = 1e-5;
  const double fd = (lower(a + step) - lower(a - step)) / (2.0 * step);
  const double exact = deriv(a);
  return std::abs(fd - exact) <= 1e-6 * std::max(std::abs(exact), 1e-3);
}

}  // namespace detail

/// Samples the pack on [range.lo, range.hi] and reports each standing
/// assumption separately. Nothing throws; failures carry the first bad sample.
inline KineticsReport validate_kinetics(const KineticsPack& pack, Interval range, int samples) {
  if (!(range.lo > 0.0) || !(range.hi > range.lo) || samples < 2)
    throw Error(ErrorKind::Precondition, "validation range must lie in (0,inf) with >= 2 samples");

  KineticsReport report;
  report.checks = {
      {"eta_positive", true, std::nullopt, false},
      {"eta1_positive", true, std::nullopt, false},
      {"eta_ge_eta1_A", true, std::nullopt, false},
      {"f_positive", true, std::nullopt, false},
      {"f1_nonnegative", true, std::nullopt, false},
      {"derivative_consistency", true, std::nullopt, false},
      {"f_le_A", true, std::nullopt, true},
  };
  auto record = [&](std::size_t idx, bool ok, double a) {
    auto& c = report.checks[idx];
    if (!ok && c.passed) {
      c.passed = false;
      c.first_violation = a;
    }
  };

  for (int i = 0; i < samples; ++i) {
    const double a = range.lo + (range.hi - range.lo) * i / (samples - 1);
    const double eta = pack.eta(a);
    const double eta1 = pack.eta1(a);
    record(0, eta > 0.0, a);
    record(1, eta1 > 0.0, a);
    record(2, eta >= eta1 * a, a);
    record(3, pack.f(a) > 0.0, a);
    record(4, pack.f1(a) >= 0.0, a);
    const bool consistent = detail::derivative_agrees(pack.eta, pack.eta1, a) &&
                            detail::derivative_agrees(pack.eta1, pack.eta2, a) &&
                            detail::derivative_agrees(pack.eta2, pack.eta3, a) &&
                            detail::derivative_agrees(pack.f, pack.f1, a) &&
                            detail::derivative_agrees(pack.f1, pack.f2, a) &&
                            detail::derivative_agrees(pack.f2, pack.f3, a);
    record(5, consistent, a);
    record(6, pack.f(a) <= a, a);
  }
  return report;
}

}  // namespace crimepat
