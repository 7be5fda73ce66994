#pragma once

// Neumann Laplacian eigenpairs on (0,L) and (0,L)^2: eigenvalues, sampled
// eigenfunctions, closed-form self-integrals and deterministic enumeration.

#include <algorithm>
#include <cmath>
#include <compare>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "crimepat/error.hpp"

namespace crimepat {

enum class DomainKind { Interval, Square };

struct DomainSpec {
  DomainKind kind = DomainKind::Interval;
  double L = 1.0;

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;

  [[nodiscard]] int dim() const { return kind == DomainKind::Interval ? 1 : 2; }

  void validate() const {
    if (!(L > 0.0) || !std::isfinite(L)) throw Error(ErrorKind::Precondition, "domain length must be > 0");
  }
};

/// Interval modes use {k, 0}; square modes use {m, n}.
struct ModeIndex {
  int m = 1;
  int n = 0;

  friend auto operator<=>(const ModeIndex&, const ModeIndex&) = default;
};

inline std::string to_string(const ModeIndex& idx, DomainKind kind) {
  if (kind == DomainKind::Interval) return std::to_string(idx.m);
  return "(" + std::to_string(idx.m) + "," + std::to_string(idx.n) + ")";
}

struct EigenMode {
  DomainSpec domain;
  ModeIndex index;
  double sigma = 0.0;
  double norm_const = 0.0;
};

namespace detail {

inline void check_index(const DomainSpec& d, ModeIndex idx) {
  if (idx.m < 0 || idx.n < 0) throw Error(ErrorKind::Precondition, "mode indices must be >= 0");
  if (d.kind == DomainKind::Interval && idx.n != 0)
    throw Error(ErrorKind::Precondition, "interval modes carry a single index");
  if (idx.m == 0 && idx.n == 0)
    throw Error(ErrorKind::ZeroModeExcluded, "the constant mode (sigma = 0) is excluded");
}

}  // namespace detail

inline double eigenvalue(const DomainSpec& d, ModeIndex idx) {
  d.validate();
  detail::check_index(d, idx);
  const double w = std::numbers::pi / d.L;
  return w * w * (static_cast<double>(idx.m) * idx.m + static_cast<double>(idx.n) * idx.n);
}

inline EigenMode make_mode(const DomainSpec& d, ModeIndex idx) {
  EigenMode mode{d, idx, eigenvalue(d, idx), 0.0};
  if (d.kind == DomainKind::Interval) {
    mode.norm_const = std::sqrt(2.0 / d.L);
  } else if (idx.m > 0 && idx.n > 0) {
    mode.norm_const = 2.0 / d.L;
  } else {
    mode.norm_const = std::sqrt(2.0) / d.L;
  }
  return mode;
}

inline EigenMode make_mode(const DomainSpec& d, int k) { return make_mode(d, ModeIndex{k, 0}); }

/// Phi(x, y); y is ignored on intervals.
inline double evaluate_mode(const EigenMode& mode, double x, double y = 0.0) {
  const double w = std::numbers::pi / mode.domain.L;
  double v = mode.norm_const * std::cos(mode.index.m * w * x);
  if (mode.domain.kind == DomainKind::Square) v *= std::cos(mode.index.n * w * y);
  return v;
}

inline std::vector<double> evaluate_mode(const EigenMode& mode, std::span<const double> xs) {
  std::vector<double> out(xs.size());
  std::transform(xs.begin(), xs.end(), out.begin(), [&](double x) { return evaluate_mode(mode, x); });
  return out;
}

/// Tensor grid, row-major with y as the slow index: out[j * xs.size() + i].
inline std::vector<double> evaluate_mode(const EigenMode& mode, std::span<const double> xs,
                                         std::span<const double> ys) {
  std::vector<double> out(xs.size() * ys.size());
  for (std::size_t j = 0; j < ys.size(); ++j)
    for (std::size_t i = 0; i < xs.size(); ++i) out[j * xs.size() + i] = evaluate_mode(mode, xs[i], ys[j]);
  return out;
}

/// Closed-form integrals of powers of Phi over the domain.
struct SelfIntegrals {
  double I3 = 0.0;      // int Phi^3
  double I4 = 0.0;      // int Phi^4
  double Igrad4 = 0.0;  // int |grad Phi|^4
  // int Phi^2 |grad Phi|^2 = (sigma/3) I4 and int Phi |grad Phi|^2 = (sigma/2) I3 hold on any domain.
  double phi2_grad2 = 0.0;
  double phi_grad2 = 0.0;
};

/// Igrad4 equals sigma^2 * I4 only when one factor is constant (intervals and
/// square modes with a zero index). For m, n >= 1 the cross term survives:
/// int |grad Phi|^4 = (9(a^4 + b^4) + 2 a^2 b^2) / (4 L^2), a = m pi/L, b = n pi/L.
inline SelfIntegrals self_integrals(const EigenMode& mode) {
  const double L = mode.domain.L;
  SelfIntegrals s;
  s.I3 = 0.0;
  if (mode.domain.kind == DomainKind::Interval) {
    s.I4 = 1.5 / L;
    s.Igrad4 = mode.sigma * mode.sigma * s.I4;
  } else if (mode.index.m > 0 && mode.index.n > 0) {
    const double a = mode.index.m * std::numbers::pi / L;
    const double b = mode.index.n * std::numbers::pi / L;
    s.I4 = 2.25 / (L * L);
    s.Igrad4 = (9.0 * (a * a * a * a + b * b * b * b) + 2.0 * a * a * b * b) / (4.0 * L * L);
  } else {
    s.I4 = 1.5 / (L * L);
    s.Igrad4 = mode.sigma * mode.sigma * s.I4;
  }
  s.phi2_grad2 = mode.sigma / 3.0 * s.I4;
  s.phi_grad2 = mode.sigma / 2.0 * s.I3;
  return s;
}

/// True when |grad Phi|^2 + sigma Phi^2 is constant, i.e. the mode varies in one direction only.
inline bool is_effectively_1d(const EigenMode& mode) {
  return mode.domain.kind == DomainKind::Interval || mode.index.m == 0 || mode.index.n == 0;
}

namespace detail {

inline void sort_modes(std::vector<EigenMode>& modes) {
  std::sort(modes.begin(), modes.end(), [](const EigenMode& a, const EigenMode& b) {
    const auto ka = a.index.m * a.index.m + a.index.n * a.index.n;
    const auto kb = b.index.m * b.index.m + b.index.n * b.index.n;
    if (ka != kb) return ka < kb;
    return a.index < b.index;
  });
}

}  // namespace detail

/// All nonzero modes with every index <= max_index, ordered by sigma then (m,n).
inline std::vector<EigenMode> enumerate_modes(const DomainSpec& d, int max_index) {
  d.validate();
  std::vector<EigenMode> modes;
  if (d.kind == DomainKind::Interval) {
    for (int k = 1; k <= max_index; ++k) modes.push_back(make_mode(d, ModeIndex{k, 0}));
  } else {
    for (int m = 0; m <= max_index; ++m)
      for (int n = 0; n <= max_index; ++n)
        if (m != 0 || n != 0) modes.push_back(make_mode(d, ModeIndex{m, n}));
  }
  detail::sort_modes(modes);
  return modes;
}

/// All nonzero modes with sigma <= sigma_max, ordered by sigma then (m,n).
inline std::vector<EigenMode> enumerate_modes_below(const DomainSpec& d, double sigma_max) {
  d.validate();
  const double w = std::numbers::pi / d.L;
  const int kmax = static_cast<int>(std::floor(std::sqrt(std::max(sigma_max, 0.0)) / w)) + 1;
  std::vector<EigenMode> modes;
  for (const auto& m : enumerate_modes(d, kmax))
    if (m.sigma <= sigma_max) modes.push_back(m);
  return modes;
}

}  // namespace crimepat
