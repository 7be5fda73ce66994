#pragma once

// Cell-centred finite-volume method of lines for both model variants on uniform
// 1D/2D grids with zero-flux boundaries. Two time integrators are provided:
// classical RK4 under a CFL bound, and an adaptive two-stage Rosenbrock scheme
// with a finite-difference Jacobian for long runs to steady state.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "crimepat/error.hpp"
#include "crimepat/kinetics.hpp"
#include "crimepat/spectral.hpp"

namespace crimepat {

struct Mesh {
  DomainSpec domain;
  int n = 0;      // cells per side
  double h = 0.0;

  [[nodiscard]] int dim() const { return domain.dim(); }
  [[nodiscard]] std::size_t cells() const {
    return dim() == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
  }
  [[nodiscard]] double volume() const { return dim() == 1 ? h : h * h; }
  [[nodiscard]] std::vector<double> centers() const {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = (i + 0.5) * h;
    return x;
  }
};

inline Mesh make_mesh(const DomainSpec& d, int n) {
  d.validate();
  if (n < 8) throw Error(ErrorKind::Precondition, "mesh needs at least 8 cells per side");
  return Mesh{d, n, d.L / n};
}

/// Cell-centred fields; 2D arrays are row-major with y as the slow index.
struct FieldPair {
  std::vector<double> A;
  std::vector<double> rho;
  double t = 0.0;
};

inline FieldPair homogeneous_fields(const ModelParams& p, const Mesh& mesh) {
  return {std::vector<double>(mesh.cells(), p.Abar()), std::vector<double>(mesh.cells(), p.rhobar()), 0.0};
}

enum class AdvectionScheme { Central, Upwind };
enum class FaceAverage { Arithmetic, Harmonic };
enum class Integrator { Rosenbrock, RK4 };

struct SolveConfig {
  double dt_init = 1e-3;
  double dt_min = 1e-10;
  double dt_max = 50.0;
  double safety = 0.9;
  double t_end = 1000.0;
  double ss_tol = 1e-9;
  double t_min = 0.0;  // steady state is not declared before this time
  double snapshot_every = 50.0;
  AdvectionScheme advection = AdvectionScheme::Central;
  FaceAverage face_average = FaceAverage::Arithmetic;
  Integrator integrator = Integrator::Rosenbrock;
  double rtol = 1e-5;
  double atol = 1e-8;
  long max_steps = 5'000'000;

  friend bool operator==(const SolveConfig&, const SolveConfig&) = default;

  void validate() const {
    if (!(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max))
      throw Error(ErrorKind::Precondition, "need 0 < dt_min <= dt_init <= dt_max");
    if (!(safety > 0.0 && safety <= 1.0)) throw Error(ErrorKind::Precondition, "safety must lie in (0,1]");
    if (!(ss_tol > 0.0)) throw Error(ErrorKind::Precondition, "ss_tol must be > 0");
    if (!(t_end > 0.0)) throw Error(ErrorKind::Precondition, "t_end must be > 0");
    if (!(t_min >= 0.0 && t_min <= t_end)) throw Error(ErrorKind::Precondition, "need 0 <= t_min <= t_end");
    if (!(snapshot_every > 0.0)) throw Error(ErrorKind::Precondition, "snapshot_every must be > 0");
    if (!(rtol > 0.0 && atol > 0.0)) throw Error(ErrorKind::Precondition, "tolerances must be > 0");
  }
};

/// Extra terms added to the time derivative, evaluated at cell centres.
using SourceFn = std::function<void(double t, const Mesh& mesh, std::span<double> dA, std::span<double> drho)>;

struct RhsOptions {
  bool reactions = true;
  SourceFn source;
  // Test fixture: flips the sign of one interior face's A-flux contribution to one cell.
  bool broken_flux_sign = false;
};

/// Time derivative split into the flux divergence and the pointwise remainder.
struct RhsParts {
  std::vector<double> divA, divRho;
  std::vector<double> reactA, reactRho;
  double flux_norm_A = 0.0;    // max |face flux|
  double flux_norm_rho = 0.0;
};

namespace detail {

struct CellData {
  std::vector<double> pot;   // u (departure) or w (arrival)
  std::vector<double> eta2;  // eta^2 (arrival only)
  std::vector<double> g;     // log f(A)
};

inline CellData cell_data(const FieldPair& s, const ModelParams& p, const KineticsPack& kin) {
  const std::size_t N = s.A.size();
  CellData c;
  c.pot.resize(N);
  c.g.resize(N);
  if (p.variant == Variant::Arrival) c.eta2.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double a = s.A[i];
    const double eta = kin.eta(a);
    if (p.variant == Variant::Departure) {
      c.pot[i] = eta * (a - p.A0);
    } else {
      c.pot[i] = (a - p.A0) / eta;
      c.eta2[i] = eta * eta;
    }
    c.g[i] = std::log(kin.f(a));
  }
  return c;
}

inline double face_eta2(const CellData& c, std::size_t i, std::size_t j, FaceAverage avg) {
  if (avg == FaceAverage::Arithmetic) return 0.5 * (c.eta2[i] + c.eta2[j]);
  return 2.0 * c.eta2[i] * c.eta2[j] / (c.eta2[i] + c.eta2[j]);
}

inline bool all_finite(const FieldPair& s) {
  for (double v : s.A)
    if (!std::isfinite(v)) return false;
  for (double v : s.rho)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool admissible(const FieldPair& s) {
  for (double v : s.A)
    if (!(v > 0.0) || !std::isfinite(v)) return false;
  for (double v : s.rho)
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

inline RhsParts rhs_parts(const FieldPair& s, const ModelParams& p, const KineticsPack& kin, const Mesh& mesh,
                          const SolveConfig& cfg, const RhsOptions& opt = {}) {
  const std::size_t N = mesh.cells();
  if (s.A.size() != N || s.rho.size() != N) throw Error(ErrorKind::Precondition, "field size does not match mesh");
  if (!detail::all_finite(s)) throw Error(ErrorKind::NumericalBlowup, "non-finite state passed to rhs");

  const auto c = detail::cell_data(s, p, kin);
  RhsParts r;
  r.divA.assign(N, 0.0);
  r.divRho.assign(N, 0.0);
  r.reactA.assign(N, 0.0);
  r.reactRho.assign(N, 0.0);
  const double h = mesh.h;
  bool broken_done = !opt.broken_flux_sign;

  // Face between cell i and its upper neighbour j; fluxes are oriented along +x (or +y).
  auto face = [&](std::size_t i, std::size_t j) {
    double FA;
    if (p.variant == Variant::Departure) {
      FA = p.eps * (c.pot[j] - c.pot[i]) / h;
    } else {
      FA = p.eps * detail::face_eta2(c, i, j, cfg.face_average) * (c.pot[j] - c.pot[i]) / h;
    }
    const double dg = (c.g[j] - c.g[i]) / h;
    double rf;
    if (cfg.advection == AdvectionScheme::Central) {
      rf = 0.5 * (s.rho[i] + s.rho[j]);
    } else {
      rf = dg > 0.0 ? s.rho[i] : s.rho[j];
    }
    const double FR = (s.rho[j] - s.rho[i]) / h - 2.0 * rf * dg;
    r.divA[i] += FA / h;
    if (!broken_done) {
      r.divA[j] += FA / h;
      broken_done = true;
    } else {
      r.divA[j] -= FA / h;
    }
    r.divRho[i] += FR / h;
    r.divRho[j] -= FR / h;
    r.flux_norm_A = std::max(r.flux_norm_A, std::abs(FA));
    r.flux_norm_rho = std::max(r.flux_norm_rho, std::abs(FR));
  };

  const int n = mesh.n;
  if (mesh.dim() == 1) {
    for (int i = 0; i + 1 < n; ++i) face(i, i + 1);
  } else {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i + 1 < n; ++i) face(static_cast<std::size_t>(j) * n + i, static_cast<std::size_t>(j) * n + i + 1);
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i < n; ++i)
        face(static_cast<std::size_t>(j) * n + i, static_cast<std::size_t>(j + 1) * n + i);
  }

  if (opt.reactions) {
    for (std::size_t i = 0; i < N; ++i) {
      r.reactA[i] = -s.A[i] + p.A0 + s.rho[i] * s.A[i];
      r.reactRho[i] = -p.lambda0 * s.rho[i] * s.A[i] + p.lambda0 * p.Bbar;
    }
  }
  if (opt.source) opt.source(s.t, mesh, r.reactA, r.reactRho);
  return r;
}

struct Rates {
  std::vector<double> A, rho;
};

inline Rates rhs(const FieldPair& s, const ModelParams& p, const KineticsPack& kin, const Mesh& mesh,
                 const SolveConfig& cfg, const RhsOptions& opt = {}) {
  auto parts = rhs_parts(s, p, kin, mesh, cfg, opt);
  Rates out{std::move(parts.divA), std::move(parts.divRho)};
  for (std::size_t i = 0; i < out.A.size(); ++i) {
    out.A[i] += parts.reactA[i];
    out.rho[i] += parts.reactRho[i];
  }
  return out;
}

/// Volume-weighted sums of the flux divergence; zero up to rounding for a conservative scheme.
struct FluxBalance {
  double sum_A = 0.0, sum_rho = 0.0;
  double flux_norm_A = 0.0, flux_norm_rho = 0.0;
};

inline FluxBalance flux_balance(const FieldPair& s, const ModelParams& p, const KineticsPack& kin, const Mesh& mesh,
                                const SolveConfig& cfg, const RhsOptions& opt = {}) {
  const auto parts = rhs_parts(s, p, kin, mesh, cfg, opt);
  FluxBalance b;
  for (std::size_t i = 0; i < parts.divA.size(); ++i) {
    b.sum_A += parts.divA[i] * mesh.volume();
    b.sum_rho += parts.divRho[i] * mesh.volume();
  }
  b.flux_norm_A = parts.flux_norm_A;
  b.flux_norm_rho = parts.flux_norm_rho;
  return b;
}

/// ||rhs||_inf / (1 + ||state||_inf)
inline double steady_residual(const FieldPair& s, const Rates& r) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.A.size(); ++i) {
    num = std::max({num, std::abs(r.A[i]), std::abs(r.rho[i])});
    den = std::max({den, std::abs(s.A[i]), std::abs(s.rho[i])});
  }
  return num / (1.0 + den);
}

/// Explicit stability bound: parabolic limit from the largest diffusivity and advective CFL.
inline double cfl_dt(const FieldPair& s, const ModelParams& p, const KineticsPack& kin, const Mesh& mesh,
                     const SolveConfig& cfg) {
  const std::size_t N = s.A.size();
  std::vector<double> deff(N), g(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double a = s.A[i];
    const double eta = kin.eta(a), eta1 = kin.eta1(a);
    if (p.variant == Variant::Departure) {
      deff[i] = std::abs(eta + eta1 * (a - p.A0));
    } else {
      // eta^2 d/dA[(A - A0)/eta]
      deff[i] = std::abs(eta - (a - p.A0) * eta1);
    }
    g[i] = std::log(kin.f(a));
  }
  double dmax = 0.0, vmax = 0.0;
  auto face = [&](std::size_t i, std::size_t j) {
    double d = std::max(deff[i], deff[j]);
    if (p.variant == Variant::Arrival) {
      const double e2i = std::pow(kin.eta(s.A[i]), 2), e2j = std::pow(kin.eta(s.A[j]), 2);
      const double fe = cfg.face_average == FaceAverage::Arithmetic ? 0.5 * (e2i + e2j) : 2.0 * e2i * e2j / (e2i + e2j);
      d = std::max(deff[i] / e2i, deff[j] / e2j) * fe;
    }
    dmax = std::max(dmax, d);
    vmax = std::max(vmax, 2.0 * std::abs(g[j] - g[i]) / mesh.h);
  };
  const int n = mesh.n;
  if (mesh.dim() == 1) {
    for (int i = 0; i + 1 < n; ++i) face(i, i + 1);
  } else {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i + 1 < n; ++i) face(static_cast<std::size_t>(j) * n + i, static_cast<std::size_t>(j) * n + i + 1);
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i < n; ++i) face(static_cast<std::size_t>(j) * n + i, static_cast<std::size_t>(j + 1) * n + i);
  }
  const double diff = std::max(p.eps * dmax, 1.0);
  double dt = std::min(cfg.dt_max, cfg.safety * mesh.h * mesh.h / (2.0 * mesh.dim() * diff));
  if (vmax > 0.0) dt = std::min(dt, cfg.safety * mesh.h / vmax);
  return dt;
}

class BlowupError : public Error {
 public:
  BlowupError(const std::string& what, FieldPair last) : Error(ErrorKind::NumericalBlowup, what), last_(std::move(last)) {}
  [[nodiscard]] const FieldPair& last_state() const { return last_; }

 private:
  FieldPair last_;
};

namespace detail {

inline FieldPair axpy(const FieldPair& s, double a, const Rates& k, double dt_t) {
  FieldPair out = s;
  for (std::size_t i = 0; i < s.A.size(); ++i) {
    out.A[i] += a * k.A[i];
    out.rho[i] += a * k.rho[i];
  }
  out.t += dt_t;
  return out;
}

inline std::optional<FieldPair> rk4_attempt(const FieldPair& s, double dt, const ModelParams& p,
                                            const KineticsPack& kin, const Mesh& mesh, const SolveConfig& cfg,
                                            const RhsOptions& opt) {
  try {
    const Rates k1 = rhs(s, p, kin, mesh, cfg, opt);
    const Rates k2 = rhs(axpy(s, 0.5 * dt, k1, 0.5 * dt), p, kin, mesh, cfg, opt);
    const Rates k3 = rhs(axpy(s, 0.5 * dt, k2, 0.5 * dt), p, kin, mesh, cfg, opt);
    const Rates k4 = rhs(axpy(s, dt, k3, dt), p, kin, mesh, cfg, opt);
    FieldPair out = s;
    for (std::size_t i = 0; i < s.A.size(); ++i) {
      out.A[i] += dt / 6.0 * (k1.A[i] + 2.0 * k2.A[i] + 2.0 * k3.A[i] + k4.A[i]);
      out.rho[i] += dt / 6.0 * (k1.rho[i] + 2.0 * k2.rho[i] + 2.0 * k3.rho[i] + k4.rho[i]);
    }
    out.t = s.t + dt;
    if (!admissible(out)) return std::nullopt;
    return out;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// One RK4 step with dt = min(dt_cap, CFL bound), halved on rejection down to dt_min.
inline FieldPair step(const FieldPair& s, const ModelParams& p, const KineticsPack& kin, const Mesh& mesh,
                      const SolveConfig& cfg, const RhsOptions& opt = {},
                      double dt_cap = std::numeric_limits<double>::infinity()) {
  double dt = std::min(cfl_dt(s, p, kin, mesh, cfg), dt_cap);
  while (dt >= cfg.dt_min) {
    if (auto out = detail::rk4_attempt(s, dt, p, kin, mesh, cfg, opt)) return *out;
    dt *= 0.5;
  }
  throw BlowupError("step rejected down to dt_min at t = " + std::to_string(s.t), s);
}

/// Adaptive linearly implicit two-stage Rosenbrock (ROS2, gamma = 1 + 1/sqrt 2).
/// Interleaved unknowns y[2c] = A_c, y[2c+1] = rho_c.
class RosenbrockStepper {
 public:
  RosenbrockStepper(const ModelParams& p, const KineticsPack& kin, const Mesh& mesh, const SolveConfig& cfg,
                    RhsOptions opt = {})
      : p_(p), kin_(kin), mesh_(mesh), cfg_(cfg), opt_(std::move(opt)) {}

  struct Result {
    FieldPair state;
    double dt_used = 0.0;
    double dt_next = 0.0;
    int rejected = 0;
  };

  Result advance(const FieldPair& s, double dt, double dt_cap) {
    const Rates f0 = eval(s);
    dt = std::min(dt, dt_cap);
    bool fresh = false;
    if (!have_w_ || age_ >= kMaxAge) {
      build_jacobian(s, f0);
      fresh = true;
    }
    int rejected = 0;
    while (dt >= cfg_.dt_min) {
      if (!have_w_ || dt > 2.0 * dt_w_ || dt < 0.5 * dt_w_) factor(dt);
      auto attempt = try_step(s, f0, dt);
      if (attempt.ok && attempt.err <= 1.0) {
        ++age_;
        const double fac = std::clamp(0.9 / std::sqrt(std::max(attempt.err, 1e-10)), 0.2, 5.0);
        return {std::move(attempt.state), dt, std::min(dt * fac, cfg_.dt_max), rejected};
      }
      ++rejected;
      if (attempt.ok) {
        dt *= std::clamp(0.9 / std::sqrt(attempt.err), 0.2, 0.5);
      } else {
        dt *= 0.5;
      }
      if (!fresh) {
        // A rejection with a reused matrix: retry with the Jacobian of the current state.
        build_jacobian(s, f0);
        fresh = true;
      }
    }
    throw BlowupError("Rosenbrock step rejected down to dt_min at t = " + std::to_string(s.t), s);
  }

 private:
  static constexpr double kGamma = 1.0 + 0.70710678118654752440;
  // ROS2 keeps order two with any matrix in place of the Jacobian, so W = I - gamma dt_w J
  // is reused across steps while dt stays within a factor 2 of dt_w and J is younger than kMaxAge.
  static constexpr int kMaxAge = 8;

  const ModelParams& p_;
  const KineticsPack& kin_;
  const Mesh& mesh_;
  const SolveConfig& cfg_;
  RhsOptions opt_;
  Eigen::SparseMatrix<double> J_;
  Eigen::SparseMatrix<double> W_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool analysed_ = false;
  bool have_w_ = false;
  double dt_w_ = 0.0;
  int age_ = 0;

  struct Attempt {
    bool ok = false;
    double err = 0.0;
    FieldPair state;
  };

  Rates eval(const FieldPair& s) { return rhs(s, p_, kin_, mesh_, cfg_, opt_); }

  std::vector<std::size_t> neighbours(std::size_t c) const {
    const int n = mesh_.n;
    std::vector<std::size_t> out{c};
    if (mesh_.dim() == 1) {
      if (c > 0) out.push_back(c - 1);
      if (c + 1 < static_cast<std::size_t>(n)) out.push_back(c + 1);
    } else {
      const int i = static_cast<int>(c % n), j = static_cast<int>(c / n);
      if (i > 0) out.push_back(c - 1);
      if (i + 1 < n) out.push_back(c + 1);
      if (j > 0) out.push_back(c - n);
      if (j + 1 < n) out.push_back(c + n);
    }
    return out;
  }

  int colour(std::size_t c) const {
    if (mesh_.dim() == 1) return static_cast<int>(c % 3);
    const int n = mesh_.n;
    return static_cast<int>((c % n + 2 * (c / n)) % 5);
  }

  void build_jacobian(const FieldPair& s, const Rates& f0) {
    const std::size_t N = mesh_.cells();
    const int ncol = mesh_.dim() == 1 ? 3 : 5;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(N * 2 * (mesh_.dim() == 1 ? 6 : 10));
    for (int field = 0; field < 2; ++field) {
      for (int col = 0; col < ncol; ++col) {
        FieldPair q = s;
        std::vector<double> delta(N, 0.0);
        for (std::size_t c = 0; c < N; ++c) {
          if (colour(c) != col) continue;
          auto& v = field == 0 ? q.A[c] : q.rho[c];
          const double d = 1.4901161193847656e-08 * std::max(std::abs(v), 1.0);
          v += d;
          delta[c] = (v - (field == 0 ? s.A[c] : s.rho[c]));
        }
        const Rates fq = eval(q);
        for (std::size_t c = 0; c < N; ++c) {
          if (colour(c) != col) continue;
          const std::size_t jcol = 2 * c + field;
          for (std::size_t r : neighbours(c)) {
            trip.emplace_back(2 * r, jcol, (fq.A[r] - f0.A[r]) / delta[c]);
            trip.emplace_back(2 * r + 1, jcol, (fq.rho[r] - f0.rho[r]) / delta[c]);
          }
        }
      }
    }
    J_.resize(2 * N, 2 * N);
    J_.setFromTriplets(trip.begin(), trip.end());
    age_ = 0;
    have_w_ = false;
  }

  void factor(double dt) {
    const std::size_t N = mesh_.cells();
    W_.resize(2 * N, 2 * N);
    W_.setIdentity();
    W_ -= (kGamma * dt) * J_;
    W_.makeCompressed();
    if (!analysed_) {
      lu_.analyzePattern(W_);
      analysed_ = true;
    }
    lu_.factorize(W_);
    have_w_ = lu_.info() == Eigen::Success;
    dt_w_ = dt;
  }

  Attempt try_step(const FieldPair& s, const Rates& f0, double dt) {
    Attempt a;
    if (!have_w_) return a;
    const std::size_t N = mesh_.cells();

    Eigen::VectorXd b(2 * N);
    for (std::size_t c = 0; c < N; ++c) {
      b(2 * c) = f0.A[c];
      b(2 * c + 1) = f0.rho[c];
    }
    const Eigen::VectorXd k1 = lu_.solve(b);
    FieldPair mid = s;
    for (std::size_t c = 0; c < N; ++c) {
      mid.A[c] += dt * k1(2 * c);
      mid.rho[c] += dt * k1(2 * c + 1);
    }
    mid.t = s.t + dt;
    if (!detail::all_finite(mid)) return a;
    Rates f1;
    try {
      f1 = eval(mid);
    } catch (const Error&) {
      return a;
    }
    for (std::size_t c = 0; c < N; ++c) {
      b(2 * c) = f1.A[c] - 2.0 * k1(2 * c);
      b(2 * c + 1) = f1.rho[c] - 2.0 * k1(2 * c + 1);
    }
    const Eigen::VectorXd k2 = lu_.solve(b);
    a.state = s;
    double err = 0.0;
    for (std::size_t c = 0; c < N; ++c) {
      for (int f = 0; f < 2; ++f) {
        const std::size_t k = 2 * c + f;
        double& y = f == 0 ? a.state.A[c] : a.state.rho[c];
        const double y0 = y;
        y += dt * (1.5 * k1(k) + 0.5 * k2(k));
        const double est = 0.5 * dt * std::abs(k1(k) + k2(k));
        err = std::max(err, est / (cfg_.atol + cfg_.rtol * std::max(std::abs(y0), std::abs(y))));
      }
    }
    a.state.t = s.t + dt;
    a.ok = detail::admissible(a.state);
    a.err = err;
    return a;
  }
};

enum class Outcome { SteadyState, TEndReached, Blowup };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::SteadyState: return "SteadyState";
    case Outcome::TEndReached: return "TEndReached";
    case Outcome::Blowup: return "Blowup";
  }
  return "?";
}

struct RunResult {
  FieldPair final_state;
  std::vector<FieldPair> snapshots;
  Outcome outcome = Outcome::TEndReached;
  double residual = 0.0;
  long steps = 0;
  long rejected = 0;
  std::string message;
};

/// Integrates until the normalised residual drops below ss_tol (once t >= t_min) or t reaches t_end.
/// Snapshots land exactly on multiples of snapshot_every, plus the initial and final states.
inline RunResult run_to_steady(const FieldPair& state0, const ModelParams& p, const KineticsPack& kin,
                               const Mesh& mesh, const SolveConfig& cfg, const RhsOptions& opt = {}) {
  cfg.validate();
  p.validate();
  RunResult res;
  FieldPair s = state0;
  res.snapshots.push_back(s);
  double next_snap = s.t + cfg.snapshot_every;

  auto residual_of = [&](const FieldPair& st) { return steady_residual(st, rhs(st, p, kin, mesh, cfg, opt)); };

  try {
    res.residual = residual_of(s);
  } catch (const Error& e) {
    res.outcome = Outcome::Blowup;
    res.final_state = s;
    res.message = e.what();
    return res;
  }
  if (res.residual < cfg.ss_tol && s.t >= cfg.t_min) {
    res.outcome = Outcome::SteadyState;
    res.final_state = s;
    res.snapshots.push_back(s);
    return res;
  }

  RosenbrockStepper ros(p, kin, mesh, cfg, opt);
  double dt = cfg.dt_init;
  try {
    while (s.t < cfg.t_end && res.steps < cfg.max_steps) {
      const double cap = std::min(next_snap, cfg.t_end) - s.t;
      if (cfg.integrator == Integrator::RK4) {
        s = step(s, p, kin, mesh, cfg, opt, cap);
      } else {
        auto r = ros.advance(s, dt, cap);
        res.rejected += r.rejected;
        s = std::move(r.state);
        // Keep the controller's proposal when the step was shortened only to hit a snapshot time.
        dt = r.dt_used < cap * (1.0 - 1e-12) ? r.dt_next : std::max(dt, r.dt_next);
      }
      ++res.steps;
      if (s.t >= next_snap - 1e-9 * cfg.snapshot_every) {
        s.t = next_snap;
        res.snapshots.push_back(s);
        next_snap += cfg.snapshot_every;
      }
      res.residual = residual_of(s);
      if (res.residual < cfg.ss_tol && s.t >= cfg.t_min) {
        res.outcome = Outcome::SteadyState;
        break;
      }
    }
  } catch (const BlowupError& e) {
    res.outcome = Outcome::Blowup;
    res.final_state = e.last_state();
    res.message = e.what();
    res.snapshots.push_back(res.final_state);
    return res;
  } catch (const Error& e) {
    res.outcome = Outcome::Blowup;
    res.final_state = s;
    res.message = e.what();
    res.snapshots.push_back(s);
    return res;
  }
  if (res.outcome != Outcome::SteadyState) res.outcome = Outcome::TEndReached;
  res.final_state = s;
  if (res.snapshots.back().t != s.t) res.snapshots.push_back(s);
  return res;
}

}  // namespace crimepat
