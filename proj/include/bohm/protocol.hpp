#pragma once

// Weak-velocity measurement on a particle (x) and pointer (y) composite:
// weak position coupling, free evolution of the particle, post-selection on
// a strong position measurement, and comparison of the operational velocity
// with the phase gradient and with backtracked guidance flows.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "bohm/common.hpp"
#include "bohm/ensemble.hpp"
#include "bohm/error.hpp"
#include "bohm/fft.hpp"
#include "bohm/guidance.hpp"
#include "bohm/wavefield.hpp"
#include "json.hpp"

namespace bohm {

struct ProtocolConfig {
  double pointer_sigma = 8.0;
  double tau = 0.02;
  double postselect_bin = 0.0;  // 0: two particle-grid spacings
  size_t ensemble_n = 100000;
  std::uint64_t seed = 1;
  bool richardson = true;
  int pointer_points = 256;
  std::optional<Axis> pointer_axis;  // default: particle extent widened by 8 sigma each side
  Potential potential = Potential::free();
  PhysicalConstants constants;

  void validate(const Grid& particle) const {
    require(pointer_sigma > 0.0 && std::isfinite(pointer_sigma), Errc::config, "pointer_sigma must be positive");
    require(tau > 0.0 && std::isfinite(tau), Errc::config, "tau must be positive");
    require(postselect_bin == 0.0 || postselect_bin >= particle.axis(0).spacing(), Errc::config,
            "postselect_bin must be at least one particle grid spacing");
    require(pointer_points >= 8, Errc::config, "pointer_points must be >= 8");
    constants.validate();
  }
  Axis pointer_axis_for(const Axis& x) const {
    if (pointer_axis) return *pointer_axis;
    return {x.min - 8.0 * pointer_sigma, x.max + 8.0 * pointer_sigma, pointer_points};
  }
};

/// Psi(x, y) on a plane grid with x along axis 0 and the pointer y along axis 1.
struct CompositeState {
  WaveFunction psi;
  double sigma;

  const Grid& grid() const { return psi.grid(); }
  double time() const { return psi.time(); }
};

/// psi(x) N exp(-(y - x)^2 / 4 sigma^2), normalized on the joint grid.
inline CompositeState prepare_composite(const WaveFunction& psi, double sigma, std::optional<Axis> pointer = {},
                                        int pointer_points = 256) {
  require(psi.dims() == 1, Errc::invalid_argument, "the protocol particle is one-dimensional");
  require(sigma > 0.0, Errc::invalid_argument, "pointer sigma must be positive");
  const Axis& ax = psi.grid().axis(0);
  const Axis ay = pointer ? *pointer : Axis{ax.min - 8.0 * sigma, ax.max + 8.0 * sigma, pointer_points};
  require(sigma >= 3.0 * ay.spacing(), Errc::resolution, "pointer grid does not resolve sigma");
  require(ay.min <= ax.min - 5.0 * sigma && ay.max >= ax.max + 5.0 * sigma, Errc::resolution,
          "pointer grid must extend 5 sigma past the particle grid");
  const Grid g = Grid::plane(ax, ay);
  std::vector<cplx> a(g.size());
  for (int iy = 0; iy < ay.points; ++iy)
    for (int ix = 0; ix < ax.points; ++ix) {
      const double d = ay.coord(iy) - ax.coord(ix);
      a[g.index(ix, iy)] = psi[static_cast<size_t>(ix)] * std::exp(-d * d / (4.0 * sigma * sigma));
    }
  return {normalize(WaveFunction(g, std::move(a), psi.time())), sigma};
}

/// Schrodinger evolution acting on x only; the pointer has no Hamiltonian.
inline CompositeState evolve_composite(const CompositeState& s, double tau, const Potential& V = Potential::free(),
                                       const PhysicalConstants& c = {}) {
  require(tau >= 0.0 && std::isfinite(tau), Errc::invalid_argument, "tau must be nonnegative");
  if (tau == 0.0) return s;
  const Grid& g = s.grid();
  const Grid line = Grid::line(g.axis(0));
  const double bound = detail::kinetic_phase_bound(line, c, tau);
  const int steps = std::max(1, static_cast<int>(std::floor(bound / 3.0)) + 1);
  const double dt = tau / steps;
  require(detail::kinetic_phase_bound(line, c, dt) < std::numbers::pi, Errc::stability_violation,
          "composite step violates the stability bound");

  const int nx = g.nx(), ny = g.ny();
  const auto k = line.wavenumbers(0);
  std::vector<cplx> kinetic(static_cast<size_t>(nx));
  for (int i = 0; i < nx; ++i)
    kinetic[static_cast<size_t>(i)] = std::polar(1.0, -c.hbar * k[static_cast<size_t>(i)] * k[static_cast<size_t>(i)] * dt / (2.0 * c.mass));
  std::vector<cplx> half_kick;
  if (!V.is_free()) {
    const auto v = V.sample(line, c);
    for (double vi : v) half_kick.push_back(std::polar(1.0, -vi * dt / (2.0 * c.hbar)));
  }

  std::vector<cplx> a(s.psi.amplitudes().begin(), s.psi.amplitudes().end());
  auto kick = [&] {
    if (half_kick.empty()) return;
    for (size_t i = 0; i < a.size(); ++i) a[i] *= half_kick[i % static_cast<size_t>(nx)];
  };
  const double inv = 1.0 / nx;
  for (int step = 0; step < steps; ++step) {
    kick();
    detail::fft_inplace(a, 1, nx, 1, ny, true);
    for (size_t i = 0; i < a.size(); ++i) a[i] *= kinetic[i % static_cast<size_t>(nx)] * inv;
    detail::fft_inplace(a, 1, nx, 1, ny, false);
    kick();
  }
  for (const cplx& z : a)
    require(std::isfinite(z.real()) && std::isfinite(z.imag()), Errc::nan_detected, "composite evolution produced NaN");
  return {WaveFunction(g, std::move(a), s.time() + tau), s.sigma};
}

namespace detail {

inline int nearest_column(const Grid& g, double X) {
  const Axis& ax = g.axis(0);
  require(X >= ax.min && X < ax.max, Errc::out_of_bounds, "post-selection position outside the particle grid");
  return static_cast<int>(std::lround((X - ax.min) / ax.spacing())) % ax.points;
}

// Sum over y of |Psi|^2 per x column, times dy.
inline std::vector<double> x_marginal(const CompositeState& s) {
  const Grid& g = s.grid();
  std::vector<double> m(static_cast<size_t>(g.nx()), 0.0);
  for (int iy = 0; iy < g.ny(); ++iy)
    for (int ix = 0; ix < g.nx(); ++ix) m[static_cast<size_t>(ix)] += std::norm(s.psi[g.index(ix, iy)]);
  for (double& v : m) v *= g.axis(1).spacing();
  return m;
}

inline double column_mean(const CompositeState& s, int ix, double& mass) {
  const Grid& g = s.grid();
  double num = 0.0;
  mass = 0.0;
  for (int iy = 0; iy < g.ny(); ++iy) {
    const double r = std::norm(s.psi[g.index(ix, iy)]);
    num += g.axis(1).coord(iy) * r;
    mass += r;
  }
  return num / mass;
}

}  // namespace detail

/// Particle position density, integrating out the pointer.
inline std::vector<double> particle_marginal(const CompositeState& s) { return detail::x_marginal(s); }

/// Pointer position density, integrating out the particle.
inline std::vector<double> pointer_marginal(const CompositeState& s) {
  const Grid& g = s.grid();
  std::vector<double> m(static_cast<size_t>(g.ny()), 0.0);
  for (int iy = 0; iy < g.ny(); ++iy)
    for (int ix = 0; ix < g.nx(); ++ix) m[static_cast<size_t>(iy)] += std::norm(s.psi[g.index(ix, iy)]);
  for (double& v : m) v *= g.axis(0).spacing();
  return m;
}

/// Grid x coordinate that a post-selection at X snaps to.
inline double snap_to_column(const CompositeState& s, double X) {
  return s.grid().axis(0).coord(detail::nearest_column(s.grid(), X));
}

/// E(y | x = X) = sum_y y |Psi(X, y)|^2 / sum_y |Psi(X, y)|^2, X snapped to the nearest grid column.
inline double conditional_pointer_mean(const CompositeState& s, double X) {
  const int ix = detail::nearest_column(s.grid(), X);
  const auto m = detail::x_marginal(s);
  double mass = 0.0;
  const double mean = detail::column_mean(s, ix, mass);
  require(m[static_cast<size_t>(ix)] >= node_threshold * *std::max_element(m.begin(), m.end()) && mass > 0.0,
          Errc::node_proximity, "post-selected column is at a node of the particle density");
  return mean;
}

struct OperationalVelocitySample {
  double X_tau;
  double weak_mean;
  double v_op;
  double tau;
};

/// (X_tau - E(y | x = X_tau)) / tau on an evolved composite, X_tau snapped to the grid.
inline OperationalVelocitySample operational_velocity(const CompositeState& evolved, double X, double tau) {
  require(tau > 0.0, Errc::invalid_argument, "tau must be positive");
  OperationalVelocitySample s;
  s.X_tau = snap_to_column(evolved, X);
  s.weak_mean = conditional_pointer_mean(evolved, s.X_tau);
  s.tau = tau;
  s.v_op = (s.X_tau - s.weak_mean) / tau;
  return s;
}

struct FieldPoint {
  double X = 0.0;
  double density = 0.0;     // |psi(X)|^2 of the prepared state
  double weak_mean = 0.0;   // E(y | x = X) at tau
  double v_tau = 0.0;       // operational velocity at tau
  double v_half = 0.0;      // operational velocity at tau / 2 (Richardson only)
  double v_op = 0.0;        // reported estimate: Richardson 2 v_half - v_tau, else v_tau
  double v_standard = 0.0;  // (hbar / m) Im(psi' / psi)
  bool skipped = false;     // node: no estimate

  double abs_err() const { return std::abs(v_op - v_standard); }
};

struct WeakVelocityField {
  double tau = 0.0;
  double sigma = 0.0;
  bool richardson = false;
  std::vector<FieldPoint> points;

  /// max |v_op - v_standard| / max |v_standard| over points with density >= floor * max density.
  double max_relative_error(double floor = 1e-3) const {
    double rmax = 0.0, vmax = 0.0, emax = 0.0;
    for (const auto& p : points) rmax = std::max(rmax, p.density);
    for (const auto& p : points)
      if (!p.skipped && p.density >= floor * rmax) {
        vmax = std::max(vmax, std::abs(p.v_standard));
        emax = std::max(emax, p.abs_err());
      }
    return vmax > 0.0 ? emax / vmax : emax;
  }
};

/// Runs the protocol for every X: prepare, evolve by tau (and tau / 2 with
/// Richardson), post-select at X, compare with the phase gradient.
inline WeakVelocityField weak_velocity_field(const WaveFunction& psi, const ProtocolConfig& cfg,
                                             const std::vector<double>& xs) {
  cfg.validate(psi.grid());
  const CompositeState s0 = prepare_composite(psi, cfg.pointer_sigma, cfg.pointer_axis_for(psi.grid().axis(0)));
  const CompositeState full = evolve_composite(s0, cfg.tau, cfg.potential, cfg.constants);
  std::optional<CompositeState> half;
  if (cfg.richardson) half = evolve_composite(s0, 0.5 * cfg.tau, cfg.potential, cfg.constants);
  const auto rho = density(psi);
  const SnapshotField field(psi, cfg.constants);

  WeakVelocityField out;
  out.tau = cfg.tau;
  out.sigma = cfg.pointer_sigma;
  out.richardson = cfg.richardson;
  for (double x : xs) {
    FieldPoint p;
    p.X = snap_to_column(s0, x);
    p.density = rho[static_cast<size_t>(detail::nearest_column(s0.grid(), x))];
    Vec2 v;
    if (detail::drift(field, GuidanceLaw::standard(), {p.X}, psi.time(), v) != StepStatus::ok) {
      p.skipped = true;
      out.points.push_back(p);
      continue;
    }
    p.v_standard = v.x;
    try {
      const auto a = operational_velocity(full, p.X, cfg.tau);
      p.weak_mean = a.weak_mean;
      p.v_tau = p.v_op = a.v_op;
      if (half) {
        p.v_half = operational_velocity(*half, p.X, 0.5 * cfg.tau).v_op;
        p.v_op = 2.0 * p.v_half - p.v_tau;
      }
    } catch (const Error& e) {
      if (e.code() != Errc::node_proximity) throw;
      p.skipped = true;
    }
    out.points.push_back(p);
  }
  return out;
}

inline void write_csv(std::ostream& os, const WeakVelocityField& f) {
  os << "X,E_y,v_op,v_standard_oracle,abs_err\n";
  for (const auto& p : f.points) {
    if (p.skipped) continue;
    os << detail::fmt(p.X) << ',' << detail::fmt(p.weak_mean) << ',' << detail::fmt(p.v_op) << ','
       << detail::fmt(p.v_standard) << ',' << detail::fmt(p.abs_err()) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Monte Carlo post-selection

struct McBin {
  double x_lo = 0.0, x_hi = 0.0;
  size_t count = 0;
  double mean_y = 0.0;
  double std_error = 0.0;
  double analytic = 0.0;  // exact conditional mean of the bin from Psi
  double z = 0.0;
  bool flagged = false;  // too few samples or a node bin: no estimate
};

struct MonteCarloResult {
  std::vector<McBin> bins;
  size_t samples = 0;

  std::vector<const McBin*> usable() const {
    std::vector<const McBin*> out;
    for (const auto& b : bins)
      if (!b.flagged) out.push_back(&b);
    return out;
  }
  double fraction_within(double k) const {
    const auto u = usable();
    if (u.empty()) return 0.0;
    return static_cast<double>(std::count_if(u.begin(), u.end(), [k](const McBin* b) { return std::abs(b->z) <= k; })) /
           static_cast<double>(u.size());
  }
};

/// Draws (x, y) pairs from |Psi(x, y, tau)|^2, bins them by x, and compares the
/// per-bin mean pointer reading with the exact conditional mean. Bins with
/// fewer than `min_count` samples or a node-level density are flagged.
inline MonteCarloResult monte_carlo_protocol(const WaveFunction& psi, const ProtocolConfig& cfg, size_t min_count = 30) {
  cfg.validate(psi.grid());
  require(cfg.ensemble_n >= 1000, Errc::config, "ensemble_n must be >= 1000");
  const CompositeState evolved = evolve_composite(
      prepare_composite(psi, cfg.pointer_sigma, cfg.pointer_axis_for(psi.grid().axis(0))), cfg.tau, cfg.potential,
      cfg.constants);
  const Grid& g = evolved.grid();
  const Axis& ax = g.axis(0);
  const int per_bin = std::max(1, static_cast<int>(std::lround((cfg.postselect_bin > 0.0 ? cfg.postselect_bin : 2.0 * ax.spacing()) / ax.spacing())));
  const int nbins = (ax.points + per_bin - 1) / per_bin;

  const auto marginal = detail::x_marginal(evolved);
  const double mmax = *std::max_element(marginal.begin(), marginal.end());
  MonteCarloResult r;
  r.bins.resize(static_cast<size_t>(nbins));
  std::vector<double> sum_y(r.bins.size(), 0.0), sum_y2(r.bins.size(), 0.0), mass(r.bins.size(), 0.0),
      first(r.bins.size(), 0.0);
  for (int b = 0; b < nbins; ++b) {
    auto& bin = r.bins[static_cast<size_t>(b)];
    bin.x_lo = ax.coord(b * per_bin) - 0.5 * ax.spacing();
    bin.x_hi = bin.x_lo + per_bin * ax.spacing();
    double num = 0.0;
    for (int ix = b * per_bin; ix < std::min(ax.points, (b + 1) * per_bin); ++ix) {
      double col = 0.0;
      num += detail::column_mean(evolved, ix, col) * col;
      mass[static_cast<size_t>(b)] += col;
    }
    bin.analytic = mass[static_cast<size_t>(b)] > 0.0 ? num / mass[static_cast<size_t>(b)] : 0.0;
  }

  const Ensemble e = born_sample(evolved.psi, cfg.ensemble_n, cfg.seed);
  r.samples = e.size();
  for (const Vec2& q : e.positions) {
    const int ix = detail::nearest_column(g, q.x);
    const size_t b = static_cast<size_t>(ix / per_bin);
    // Shift by the bin's analytic mean for a numerically stable variance.
    const double d = q.y - r.bins[b].analytic;
    ++r.bins[b].count;
    sum_y[b] += d;
    sum_y2[b] += d * d;
  }
  for (size_t b = 0; b < r.bins.size(); ++b) {
    auto& bin = r.bins[b];
    double bin_marginal = 0.0;
    for (int ix = static_cast<int>(b) * per_bin; ix < std::min(ax.points, (static_cast<int>(b) + 1) * per_bin); ++ix)
      bin_marginal = std::max(bin_marginal, marginal[static_cast<size_t>(ix)]);
    bin.flagged = bin.count < std::max<size_t>(min_count, 2) || bin_marginal < node_threshold * mmax;
    if (bin.count == 0) continue;
    const double n = static_cast<double>(bin.count);
    const double md = sum_y[b] / n;
    bin.mean_y = bin.analytic + md;
    if (bin.count >= 2) {
      const double var = std::max(0.0, (sum_y2[b] - n * md * md) / (n - 1.0));
      bin.std_error = std::sqrt(var / n);
      bin.z = bin.std_error > 0.0 ? md / bin.std_error : 0.0;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Correspondence test

struct CorReport {
  double X_tau = 0.0;
  double weak_mean = 0.0;
  double backtracked = 0.0;
  double discrepancy = 0.0;
  std::string law;

  nlohmann::json to_json() const {
    return {{"X_tau", X_tau}, {"weak_mean", weak_mean}, {"backtracked", backtracked}, {"discrepancy", discrepancy},
            {"law", law}};
  }
};

/// Shared state for COR runs at fixed (psi, tau, sigma): the evolved composite
/// and the wavefunction history over [t0, t0 + tau].
class CorExperiment {
 public:
  CorExperiment(const WaveFunction& psi, const ProtocolConfig& cfg)
      : cfg_(validated(cfg, psi)),
        evolved_(evolve_composite(prepare_composite(psi, cfg.pointer_sigma, cfg.pointer_axis_for(psi.grid().axis(0))),
                                  cfg.tau, cfg.potential, cfg.constants)),
        history_(record_history(psi, cfg.potential, psi.time() + cfg.tau, cfg.tau / 8.0, cfg.constants)),
        t0_(psi.time()) {}

  /// |E(y | x = X_tau) - T_{-tau} X_tau| under a deterministic law.
  CorReport report(const GuidanceLaw& law, double X) const {
    require(law.deterministic(), Errc::invalid_argument, "COR needs a deterministic law");
    CorReport r;
    r.law = law.name();
    r.X_tau = snap_to_column(evolved_, X);
    r.weak_mean = conditional_pointer_mean(evolved_, r.X_tau);
    const double dt = std::min(1e-3, cfg_.tau / 50.0);
    r.backtracked = flow_map(history_, law, {r.X_tau}, t0_ + cfg_.tau, -cfg_.tau, dt).x;
    r.discrepancy = std::abs(r.weak_mean - r.backtracked);
    return r;
  }

  const CompositeState& evolved() const { return evolved_; }
  const History& history() const { return history_; }

 private:
  static ProtocolConfig validated(const ProtocolConfig& cfg, const WaveFunction& psi) {
    cfg.validate(psi.grid());
    return cfg;
  }

  ProtocolConfig cfg_;
  CompositeState evolved_;
  History history_;
  double t0_;
};

inline CorReport cor_discrepancy(const WaveFunction& psi, const ProtocolConfig& cfg, const GuidanceLaw& law, double X) {
  return CorExperiment(psi, cfg).report(law, X);
}

/// tol(tau, sigma) = c1 tau^2 + c2 / sigma^2.
struct CorTolerance {
  double c1 = 0.0;
  double c2 = 0.0;
  double operator()(double tau, double sigma) const { return c1 * tau * tau + c2 / (sigma * sigma); }
  nlohmann::json to_json() const { return {{"c1", c1}, {"c2", c2}}; }
};

/// Grid positions where the density of psi is at least `floor` times its maximum.
inline std::vector<double> populated_points(const WaveFunction& psi, double floor, size_t count) {
  const auto rho = density(psi);
  const double rmax = *std::max_element(rho.begin(), rho.end());
  std::vector<double> xs;
  for (size_t i = 0; i < rho.size(); ++i)
    if (rho[i] >= floor * rmax) xs.push_back(psi.grid().point(i).x);
  if (xs.size() <= count) return xs;
  std::vector<double> out;
  for (size_t k = 0; k < count; ++k) out.push_back(xs[k * (xs.size() - 1) / (count - 1)]);
  return out;
}

/// Least-squares fit of the worst Standard-law discrepancy over `points`
/// positions of the control state at every (tau, sigma), then both constants
/// scaled up so the fitted bound covers every measured worst case.
inline CorTolerance calibrate_cor_tolerance(const WaveFunction& control, const std::vector<double>& taus,
                                            const std::vector<double>& sigmas, ProtocolConfig cfg = {},
                                            size_t points = 21) {
  const auto xs = populated_points(control, 0.1, points);
  std::vector<std::array<double, 3>> rows;  // tau^2, 1/sigma^2, worst discrepancy
  for (double tau : taus)
    for (double sigma : sigmas) {
      cfg.tau = tau;
      cfg.pointer_sigma = sigma;
      const CorExperiment ex(control, cfg);
      double worst = 0.0;
      for (double x : xs) worst = std::max(worst, ex.report(GuidanceLaw::standard(), x).discrepancy);
      rows.push_back({tau * tau, 1.0 / (sigma * sigma), worst});
    }
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (const auto& r : rows) {
    a11 += r[0] * r[0];
    a12 += r[0] * r[1];
    a22 += r[1] * r[1];
    b1 += r[0] * r[2];
    b2 += r[1] * r[2];
  }
  const double det = a11 * a22 - a12 * a12;
  require(std::abs(det) > 0.0, Errc::invalid_argument, "calibration needs at least two distinct tau and sigma");
  CorTolerance t{std::max(0.0, (b1 * a22 - b2 * a12) / det), std::max(0.0, (a11 * b2 - a12 * b1) / det)};
  double scale = 1.0;
  for (const auto& r : rows) {
    const double fit = t.c1 * r[0] + t.c2 * r[1];
    scale = std::max(scale, fit > 0.0 ? r[2] / fit : 1.0);
  }
  t.c1 *= scale;
  t.c2 *= scale;
  return t;
}

inline nlohmann::json to_json(const std::vector<CorReport>& reports) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : reports) a.push_back(r.to_json());
  return a;
}

}  // namespace bohm
