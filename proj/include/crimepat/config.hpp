#pragma once

// Flat `section.key = value` run configuration with round-trip serialisation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "crimepat/error.hpp"
#include "crimepat/kinetics.hpp"
#include "crimepat/pattern.hpp"
#include "crimepat/solver.hpp"
#include "crimepat/spectral.hpp"

namespace crimepat {

enum class PerturbField { A, Rho, Both };

/// amp * cos(kx pi x) * cos(ky pi y); wavenumbers are in units of pi and need not be integers.
struct Perturbation {
  PerturbField field = PerturbField::Both;
  double amp = 0.0;
  double kx = 0.0;
  double ky = 0.0;

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

struct TableConfig {
  std::vector<double> L_values;  // empty: use domain.L only
  std::vector<Variant> variants{Variant::Departure};
  std::optional<int> max_index;

  friend bool operator==(const TableConfig&, const TableConfig&) = default;
};

struct SweepConfig {
  std::string key;
  std::vector<std::string> values;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct VerifyConfig {
  std::vector<int> mms_n{64, 128, 256};
  std::vector<int> mms_n_2d{32, 64, 128};
  int agreement_steps = 1000;
  int conservation_states = 100;
  bool broken_flux = false;

  friend bool operator==(const VerifyConfig&, const VerifyConfig&) = default;
};

struct RunConfig {
  ModelParams model;
  std::string kinetics = "paper-default";
  DomainSpec domain;
  int n = 256;
  std::vector<Perturbation> perturb;
  double noise = 0.0;
  std::uint64_t seed = 0;
  SolveConfig solver;
  PatternOptions analysis;
  TableConfig table;
  SweepConfig sweep;
  VerifyConfig verify;
  std::string output_dir = "out";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace cfgio {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double to_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw Error(ErrorKind::Config, "expected a finite number, got '" + s + "'");
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error(ErrorKind::Config, "expected an integer, got '" + s + "'");
  return v;
}

inline bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(ErrorKind::Config, "expected true/false, got '" + s + "'");
}

/// Shortest representation that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Fixed 17 significant digits, for numeric artifacts.
inline std::string fmt17(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

inline std::vector<std::string> list_items(const std::string& v, char sep = ',') {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  for (auto& s : split(v, sep)) {
    if (s.empty()) throw Error(ErrorKind::Config, "empty list item in '" + v + "'");
    out.push_back(s);
  }
  return out;
}

inline Perturbation parse_perturbation(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 3 && parts.size() != 4)
    throw Error(ErrorKind::Config, "perturbation '" + s + "' must read field:amp:kx[:ky]");
  Perturbation p;
  if (parts[0] == "A") p.field = PerturbField::A;
  else if (parts[0] == "rho") p.field = PerturbField::Rho;
  else if (parts[0] == "both") p.field = PerturbField::Both;
  else throw Error(ErrorKind::Config, "perturbation field must be A, rho or both, got '" + parts[0] + "'");
  p.amp = to_double(parts[1]);
  p.kx = to_double(parts[2]);
  if (parts.size() == 4) p.ky = to_double(parts[3]);
  return p;
}

inline std::string format_perturbation(const Perturbation& p) {
  const char* f = p.field == PerturbField::A ? "A" : p.field == PerturbField::Rho ? "rho" : "both";
  std::string out = std::string(f) + ":" + fmt(p.amp) + ":" + fmt(p.kx);
  if (p.ky != 0.0) out += ":" + fmt(p.ky);
  return out;
}

inline std::optional<int> to_opt_index(const std::string& s) {
  if (s == "auto") return std::nullopt;
  const int v = to_int<int>(s);
  if (v < 1) throw Error(ErrorKind::Config, "index cutoff must be >= 1 or 'auto'");
  return v;
}

inline std::string fmt_opt_index(const std::optional<int>& v) { return v ? std::to_string(*v) : "auto"; }

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CRIMEPAT_DKEY(NAME, FIELD)                                                   \
  Key{NAME, [](RunConfig& c, const std::string& v) { c.FIELD = to_double(v); }, \
      [](const RunConfig& c) { return fmt(c.FIELD); }}

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"model.variant", [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.variant)); }},
      {"model.kinetics",
       [](RunConfig& c, const std::string& v) {
         const auto names = builtin_kinetics_names();
         if (std::find(names.begin(), names.end(), v) == names.end())
           throw Error(ErrorKind::Config, "unknown kinetics '" + v + "'");
         c.kinetics = v;
       },
       [](const RunConfig& c) { return c.kinetics; }},
      CRIMEPAT_DKEY("model.A0", model.A0),
      CRIMEPAT_DKEY("model.Bbar", model.Bbar),
      CRIMEPAT_DKEY("model.lambda0", model.lambda0),
      CRIMEPAT_DKEY("model.eps", model.eps),
      {"domain.kind",
       [](RunConfig& c, const std::string& v) {
         if (v == "interval") c.domain.kind = DomainKind::Interval;
         else if (v == "square") c.domain.kind = DomainKind::Square;
         else throw Error(ErrorKind::Config, "domain.kind must be interval or square");
       },
       [](const RunConfig& c) { return std::string(c.domain.kind == DomainKind::Interval ? "interval" : "square"); }},
      CRIMEPAT_DKEY("domain.L", domain.L),
      {"grid.n", [](RunConfig& c, const std::string& v) { c.n = to_int<int>(v); },
       [](const RunConfig& c) { return std::to_string(c.n); }},
      {"ic.perturb",
       [](RunConfig& c, const std::string& v) {
         c.perturb.clear();
         for (const auto& item : list_items(v)) c.perturb.push_back(parse_perturbation(item));
       },
       [](const RunConfig& c) { return join(c.perturb, format_perturbation); }},
      CRIMEPAT_DKEY("ic.noise", noise),
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_int<std::uint64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      CRIMEPAT_DKEY("solver.dt_init", solver.dt_init),
      CRIMEPAT_DKEY("solver.dt_min", solver.dt_min),
      CRIMEPAT_DKEY("solver.dt_max", solver.dt_max),
      CRIMEPAT_DKEY("solver.safety", solver.safety),
      CRIMEPAT_DKEY("solver.t_end", solver.t_end),
      CRIMEPAT_DKEY("solver.t_min", solver.t_min),
      CRIMEPAT_DKEY("solver.ss_tol", solver.ss_tol),
      CRIMEPAT_DKEY("solver.snapshot_every", solver.snapshot_every),
      {"solver.advection",
       [](RunConfig& c, const std::string& v) {
         if (v == "central") c.solver.advection = AdvectionScheme::Central;
         else if (v == "upwind") c.solver.advection = AdvectionScheme::Upwind;
         else throw Error(ErrorKind::Config, "solver.advection must be central or upwind");
       },
       [](const RunConfig& c) {
         return std::string(c.solver.advection == AdvectionScheme::Central ? "central" : "upwind");
       }},
      {"solver.face_average",
       [](RunConfig& c, const std::string& v) {
         if (v == "arithmetic") c.solver.face_average = FaceAverage::Arithmetic;
         else if (v == "harmonic") c.solver.face_average = FaceAverage::Harmonic;
         else throw Error(ErrorKind::Config, "solver.face_average must be arithmetic or harmonic");
       },
       [](const RunConfig& c) {
         return std::string(c.solver.face_average == FaceAverage::Arithmetic ? "arithmetic" : "harmonic");
       }},
      {"solver.integrator",
       [](RunConfig& c, const std::string& v) {
         if (v == "rosenbrock") c.solver.integrator = Integrator::Rosenbrock;
         else if (v == "rk4") c.solver.integrator = Integrator::RK4;
         else throw Error(ErrorKind::Config, "solver.integrator must be rosenbrock or rk4");
       },
       [](const RunConfig& c) { return std::string(c.solver.integrator == Integrator::RK4 ? "rk4" : "rosenbrock"); }},
      CRIMEPAT_DKEY("solver.rtol", solver.rtol),
      CRIMEPAT_DKEY("solver.atol", solver.atol),
      {"solver.max_steps", [](RunConfig& c, const std::string& v) { c.solver.max_steps = to_int<long>(v); },
       [](const RunConfig& c) { return std::to_string(c.solver.max_steps); }},
      CRIMEPAT_DKEY("analysis.prominence_frac", analysis.prominence_frac),
      {"analysis.include_boundary",
       [](RunConfig& c, const std::string& v) { c.analysis.include_boundary = to_bool(v); },
       [](const RunConfig& c) { return std::string(c.analysis.include_boundary ? "true" : "false"); }},
      {"analysis.max_index", [](RunConfig& c, const std::string& v) { c.analysis.max_index = to_opt_index(v); },
       [](const RunConfig& c) { return fmt_opt_index(c.analysis.max_index); }},
      {"table.L_values",
       [](RunConfig& c, const std::string& v) {
         c.table.L_values.clear();
         for (const auto& item : list_items(v)) c.table.L_values.push_back(to_double(item));
       },
       [](const RunConfig& c) { return join(c.table.L_values, fmt); }},
      {"table.variants",
       [](RunConfig& c, const std::string& v) {
         c.table.variants.clear();
         for (const auto& item : list_items(v)) c.table.variants.push_back(parse_variant(item));
         if (c.table.variants.empty()) throw Error(ErrorKind::Config, "table.variants must not be empty");
       },
       [](const RunConfig& c) {
         return join(c.table.variants, [](Variant v) { return std::string(to_string(v)); });
       }},
      {"table.max_index", [](RunConfig& c, const std::string& v) { c.table.max_index = to_opt_index(v); },
       [](const RunConfig& c) { return fmt_opt_index(c.table.max_index); }},
      {"sweep.key", [](RunConfig& c, const std::string& v) { c.sweep.key = v; },
       [](const RunConfig& c) { return c.sweep.key; }},
      // Semicolon-separated, since a value may itself be a comma list.
      {"sweep.values", [](RunConfig& c, const std::string& v) { c.sweep.values = list_items(v, ';'); },
       [](const RunConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.sweep.values.size(); ++i) out += (i ? "; " : "") + c.sweep.values[i];
         return out;
       }},
      {"verify.mms_n",
       [](RunConfig& c, const std::string& v) {
         c.verify.mms_n.clear();
         for (const auto& item : list_items(v)) c.verify.mms_n.push_back(to_int<int>(item));
       },
       [](const RunConfig& c) { return join(c.verify.mms_n, [](int n) { return std::to_string(n); }); }},
      {"verify.mms_n_2d",
       [](RunConfig& c, const std::string& v) {
         c.verify.mms_n_2d.clear();
         for (const auto& item : list_items(v)) c.verify.mms_n_2d.push_back(to_int<int>(item));
       },
       [](const RunConfig& c) { return join(c.verify.mms_n_2d, [](int n) { return std::to_string(n); }); }},
      {"verify.agreement_steps", [](RunConfig& c, const std::string& v) { c.verify.agreement_steps = to_int<int>(v); },
       [](const RunConfig& c) { return std::to_string(c.verify.agreement_steps); }},
      {"verify.conservation_states",
       [](RunConfig& c, const std::string& v) { c.verify.conservation_states = to_int<int>(v); },
       [](const RunConfig& c) { return std::to_string(c.verify.conservation_states); }},
      {"verify.broken_flux", [](RunConfig& c, const std::string& v) { c.verify.broken_flux = to_bool(v); },
       [](const RunConfig& c) { return std::string(c.verify.broken_flux ? "true" : "false"); }},
      {"output.dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir; }},
  };
  return table;
}

#undef CRIMEPAT_DKEY

inline const Key* find_key(std::string_view name) {
  for (const auto& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace cfgio

/// Checks cross-field constraints after all keys are applied.
inline void validate(const RunConfig& c) {
  try {
    c.model.validate();
    c.domain.validate();
    c.solver.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.message());
  }
  if (c.n < 8) throw Error(ErrorKind::Config, "grid.n must be >= 8");
  if (!(c.noise >= 0.0)) throw Error(ErrorKind::Config, "ic.noise must be >= 0");
  if (!(c.analysis.prominence_frac > 0.0 && c.analysis.prominence_frac < 1.0))
    throw Error(ErrorKind::Config, "analysis.prominence_frac must lie in (0,1)");
  for (double L : c.table.L_values)
    if (!(L > 0.0)) throw Error(ErrorKind::Config, "table.L_values entries must be > 0");
  for (int n : c.verify.mms_n)
    if (n < 8) throw Error(ErrorKind::Config, "verify.mms_n entries must be >= 8");
  for (int n : c.verify.mms_n_2d)
    if (n < 8) throw Error(ErrorKind::Config, "verify.mms_n_2d entries must be >= 8");
  if (c.verify.agreement_steps < 1 || c.verify.conservation_states < 1)
    throw Error(ErrorKind::Config, "verify step and state counts must be >= 1");
  if (!c.sweep.key.empty() && !cfgio::find_key(c.sweep.key))
    throw Error(ErrorKind::Config, "sweep.key names unknown key '" + c.sweep.key + "'");
  if (c.sweep.key.rfind("sweep.", 0) == 0) throw Error(ErrorKind::Config, "sweep.key cannot target sweep.*");
}

/// Applies one key, prefixing failures with the key name.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  const auto* k = cfgio::find_key(key);
  if (!k) throw Error(ErrorKind::Config, "unknown key '" + key + "'");
  try {
    k->set(c, value);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, "key '" + key + "': " + e.message());
  }
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig c;
  std::vector<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = cfgio::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, where + "expected 'key = value'");
    const auto key = cfgio::trim(body.substr(0, eq));
    const auto value = cfgio::trim(body.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw Error(ErrorKind::Config, where + "duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      set_key(c, key, value);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, where + e.message());
    }
  }
  validate(c);
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");
  return parse_config(in, path);
}

/// Every key, one per line, in canonical order.
inline std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& k : cfgio::keys()) out += k.name + " = " + k.get(c) + "\n";
  return out;
}

/// Uniform deviate in [0,1) from the top 53 bits, independent of the standard library's distributions.
inline double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace crimepat
