#pragma once

// Pattern descriptors for simulation output: cosine spectra, dominant mode,
// spike counts by topographic prominence, monotonicity and amplitude fits.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crimepat/error.hpp"
#include "crimepat/solver.hpp"
#include "crimepat/spectral.hpp"

namespace crimepat {

struct SpectrumEntry {
  ModeIndex index;
  double coeff = 0.0;
};

struct Spectrum {
  std::vector<SpectrumEntry> entries;
  std::optional<ModeIndex> dominant;  // empty when every coefficient vanishes
};

/// Midpoint-rule projections of (field - mean) onto normalised modes with every index <= max_index.
/// Cell-centre sampling makes distinct cosines exactly orthogonal.
inline Spectrum mode_projection(std::span<const double> field, const Mesh& mesh, int max_index) {
  if (field.size() != mesh.cells()) throw Error(ErrorKind::Precondition, "field size does not match mesh");
  const int n = mesh.n;
  const double L = mesh.domain.L;
  max_index = std::max(1, max_index);
  const double mean = std::accumulate(field.begin(), field.end(), 0.0) / static_cast<double>(field.size());
  const auto x = mesh.centers();
  std::vector<double> cosv(static_cast<std::size_t>(max_index + 1) * n);
  for (int k = 0; k <= max_index; ++k)
    for (int i = 0; i < n; ++i) cosv[static_cast<std::size_t>(k) * n + i] = std::cos(k * std::numbers::pi * x[i] / L);

  Spectrum sp;
  double spread = 0.0;
  for (double v : field) spread = std::max(spread, std::abs(v - mean));
  // A flat field up to round-off has no dominant mode.
  double best = spread <= 1e-14 * std::max(1.0, std::abs(mean)) ? std::numeric_limits<double>::infinity() : 0.0;
  if (mesh.dim() == 1) {
    for (int k = 1; k <= max_index; ++k) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += (field[i] - mean) * cosv[static_cast<std::size_t>(k) * n + i];
      const double c = acc * mesh.h * make_mode(mesh.domain, ModeIndex{k, 0}).norm_const;
      sp.entries.push_back({ModeIndex{k, 0}, c});
    }
  } else {
    // G(m, j) = sum_i (f_ij - mean) cos(m pi x_i / L)
    std::vector<double> G(static_cast<std::size_t>(max_index + 1) * n, 0.0);
    for (int m = 0; m <= max_index; ++m)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
          acc += (field[static_cast<std::size_t>(j) * n + i] - mean) * cosv[static_cast<std::size_t>(m) * n + i];
        G[static_cast<std::size_t>(m) * n + j] = acc;
      }
    for (const auto& mode : enumerate_modes(mesh.domain, max_index)) {
      const int m = mode.index.m, k = mode.index.n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += G[static_cast<std::size_t>(m) * n + j] * cosv[static_cast<std::size_t>(k) * n + j];
      sp.entries.push_back({mode.index, acc * mesh.volume() * mode.norm_const});
    }
  }
  for (const auto& e : sp.entries) {
    if (std::abs(e.coeff) > best) {
      best = std::abs(e.coeff);
      sp.dominant = e.index;
    }
  }
  return sp;
}

/// Default spectral window: all resolvable modes, capped at 64 per axis.
inline int default_projection_index(const Mesh& mesh) { return std::min(mesh.n / 2, 64); }

struct SpikeResult {
  int count = 0;
  std::vector<std::size_t> cells;    // cell index of each counted peak
  std::vector<double> prominences;
};

/// Strict local maxima whose topographic prominence exceeds prominence_frac * (max - min).
/// 1D uses the two face neighbours, 2D the 8-neighbourhood. Boundary cells compare
/// one-sided and are counted unless include_boundary is false.
inline SpikeResult count_spikes(std::span<const double> field, const Mesh& mesh, double prominence_frac = 0.1,
                                bool include_boundary = true) {
  if (!(prominence_frac > 0.0 && prominence_frac < 1.0))
    throw Error(ErrorKind::Precondition, "prominence_frac must lie in (0,1)");
  if (field.size() != mesh.cells()) throw Error(ErrorKind::Precondition, "field size does not match mesh");
  const std::size_t N = field.size();
  const int n = mesh.n;
  const bool two_d = mesh.dim() == 2;
  const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
  const double lo = *lo_it, hi = *hi_it;
  SpikeResult res;
  if (!(hi - lo > 1e-14 * std::max(1.0, std::abs(hi)))) return res;

  auto neighbours = [&](std::size_t c, std::vector<std::size_t>& out) {
    out.clear();
    if (!two_d) {
      if (c > 0) out.push_back(c - 1);
      if (c + 1 < N) out.push_back(c + 1);
      return;
    }
    const int i = static_cast<int>(c % n), j = static_cast<int>(c / n);
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        const int ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= n || jj >= n) continue;
        out.push_back(static_cast<std::size_t>(jj) * n + ii);
      }
  };
  auto on_boundary = [&](std::size_t c) {
    if (!two_d) return c == 0 || c + 1 == N;
    const int i = static_cast<int>(c % n), j = static_cast<int>(c / n);
    return i == 0 || j == 0 || i == n - 1 || j == n - 1;
  };

  // Flood from the top: each component remembers its peak; when two meet at a saddle the
  // lower peak's prominence is its height above the saddle.
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
  std::vector<std::ptrdiff_t> parent(N, -1);
  std::vector<std::size_t> peak(N);
  std::vector<double> prom(N, -1.0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t c) -> std::size_t {
    std::size_t r = c;
    while (static_cast<std::size_t>(parent[r]) != r) r = static_cast<std::size_t>(parent[r]);
    while (static_cast<std::size_t>(parent[c]) != r) {
      const auto next = static_cast<std::size_t>(parent[c]);
      parent[c] = static_cast<std::ptrdiff_t>(r);
      c = next;
    }
    return r;
  };
  std::vector<std::size_t> nb;
  for (std::size_t c : order) {
    parent[c] = static_cast<std::ptrdiff_t>(c);
    peak[c] = c;
    neighbours(c, nb);
    for (std::size_t o : nb) {
      if (parent[o] < 0) continue;
      const std::size_t a = find(c), b = find(o);
      if (a == b) continue;
      const std::size_t pa = peak[a], pb = peak[b];
      const bool a_high = field[pa] > field[pb] || (field[pa] == field[pb] && pa < pb);
      const std::size_t winner = a_high ? a : b, loser = a_high ? b : a;
      prom[peak[loser]] = field[peak[loser]] - field[c];
      parent[loser] = static_cast<std::ptrdiff_t>(winner);
    }
  }
  prom[peak[find(order.front())]] = hi - lo;

  const double threshold = prominence_frac * (hi - lo);
  for (std::size_t c = 0; c < N; ++c) {
    if (prom[c] <= threshold) continue;
    neighbours(c, nb);
    bool strict = true;
    for (std::size_t o : nb) strict = strict && field[c] > field[o];
    if (!strict) continue;
    if (!include_boundary && on_boundary(c)) continue;
    res.cells.push_back(c);
    res.prominences.push_back(prom[c]);
  }
  res.count = static_cast<int>(res.cells.size());
  return res;
}

enum class Monotonicity { Increasing, Decreasing, None };

inline Monotonicity monotonicity(std::span<const double> field) {
  bool inc = true, dec = true;
  for (std::size_t i = 1; i < field.size(); ++i) {
    inc = inc && field[i] > field[i - 1];
    dec = dec && field[i] < field[i - 1];
  }
  if (field.size() < 2) return Monotonicity::None;
  return inc ? Monotonicity::Increasing : (dec ? Monotonicity::Decreasing : Monotonicity::None);
}

struct SpikeEvent {
  double t = 0.0;
  int before = 0;
  int after = 0;
};

struct PatternReport {
  std::optional<ModeIndex> dominant_mode;
  Spectrum mode_spectrum;
  int spike_count = 0;
  std::vector<std::size_t> spike_cells;
  double amplitude = 0.0;                  // max - min of A
  std::optional<bool> monotone;            // 1D only
  Monotonicity direction = Monotonicity::None;
  std::vector<SpikeEvent> event_log;
};

struct PatternOptions {
  double prominence_frac = 0.1;
  bool include_boundary = true;
  std::optional<int> max_index;

  friend bool operator==(const PatternOptions&, const PatternOptions&) = default;
};

/// Spike counts along a snapshot sequence; every change is logged with the later snapshot's time.
inline std::vector<SpikeEvent> spike_events(const std::vector<FieldPair>& snaps, const Mesh& mesh,
                                            const PatternOptions& opt = {}) {
  std::vector<SpikeEvent> log;
  std::optional<int> prev;
  for (const auto& s : snaps) {
    const int c = count_spikes(s.A, mesh, opt.prominence_frac, opt.include_boundary).count;
    if (prev && c != *prev) log.push_back({s.t, *prev, c});
    prev = c;
  }
  return log;
}

inline PatternReport analyze_pattern(const FieldPair& final_state, const std::vector<FieldPair>& snapshots,
                                     const Mesh& mesh, const PatternOptions& opt = {}) {
  PatternReport rep;
  rep.mode_spectrum = mode_projection(final_state.A, mesh, opt.max_index.value_or(default_projection_index(mesh)));
  rep.dominant_mode = rep.mode_spectrum.dominant;
  const auto spikes = count_spikes(final_state.A, mesh, opt.prominence_frac, opt.include_boundary);
  rep.spike_count = spikes.count;
  rep.spike_cells = spikes.cells;
  const auto [lo, hi] = std::minmax_element(final_state.A.begin(), final_state.A.end());
  rep.amplitude = *hi - *lo;
  if (mesh.dim() == 1) {
    rep.direction = monotonicity(final_state.A);
    rep.monotone = rep.direction != Monotonicity::None;
  }
  rep.event_log = spike_events(snapshots, mesh, opt);
  return rep;
}

struct ExponentFit {
  double p = 0.0;
  double log_prefactor = 0.0;
  int used = 0;
  std::vector<std::string> warnings;
};

/// Least-squares slope of log(amplitude) against log(eps_bar - eps).
/// Points with eps >= eps_bar, non-positive amplitude or flagged invalid are dropped.
inline ExponentFit fit_amplitude_exponent(double eps_bar, const std::vector<double>& eps,
                                          const std::vector<double>& amplitude,
                                          const std::vector<bool>& valid = {}, double amplitude_floor = 1e-8) {
  if (eps.size() != amplitude.size()) throw Error(ErrorKind::Precondition, "eps and amplitude lists differ in length");
  ExponentFit fit;
  std::vector<double> X, Y;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!valid.empty() && !valid[i]) {
      fit.warnings.push_back("eps=" + std::to_string(eps[i]) + " excluded: run did not reach steady state");
      continue;
    }
    const double gap = eps_bar - eps[i];
    if (!(gap > 0.0) || !(amplitude[i] > amplitude_floor)) {
      fit.warnings.push_back("eps=" + std::to_string(eps[i]) + " excluded: no pattern below threshold");
      continue;
    }
    X.push_back(std::log(gap));
    Y.push_back(std::log(amplitude[i]));
  }
  fit.used = static_cast<int>(X.size());
  if (fit.used < 3) throw Error(ErrorKind::InsufficientData, "fewer than 3 usable amplitude points");
  const double mx = std::accumulate(X.begin(), X.end(), 0.0) / fit.used;
  const double my = std::accumulate(Y.begin(), Y.end(), 0.0) / fit.used;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < fit.used; ++i) {
    sxx += (X[i] - mx) * (X[i] - mx);
    sxy += (X[i] - mx) * (Y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::InsufficientData, "amplitude points share one eps gap");
  fit.p = sxy / sxx;
  fit.log_prefactor = my - fit.p * mx;
  return fit;
}

using InitialState = std::function<FieldPair(const ModelParams&, const Mesh&)>;

struct AmplitudeScan {
  std::vector<double> eps;
  std::vector<double> amplitude;
  std::vector<bool> valid;
  std::vector<Outcome> outcomes;
  ExponentFit fit;
};

/// Runs one simulation per eps (all other parameters from the template) and fits the exponent.
inline AmplitudeScan amplitude_vs_eps(const ModelParams& tmpl, const KineticsPack& kin, const Mesh& mesh,
                                      double eps_bar, const std::vector<double>& eps_list, const SolveConfig& cfg,
                                      const InitialState& init) {
  AmplitudeScan scan;
  for (double e : eps_list) {
    ModelParams p = tmpl;
    p.eps = e;
    const auto run = run_to_steady(init(p, mesh), p, kin, mesh, cfg);
    const auto [lo, hi] = std::minmax_element(run.final_state.A.begin(), run.final_state.A.end());
    scan.eps.push_back(e);
    scan.amplitude.push_back(*hi - *lo);
    scan.valid.push_back(run.outcome == Outcome::SteadyState);
    scan.outcomes.push_back(run.outcome);
  }
  scan.fit = fit_amplitude_exponent(eps_bar, scan.eps, scan.amplitude, scan.valid);
  return scan;
}

}  // namespace crimepat
