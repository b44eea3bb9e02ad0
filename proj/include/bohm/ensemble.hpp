#pragma once

// Born-distributed ensembles, ensemble transport through guidance flows, and
// two-sample Kolmogorov-Smirnov statistics for equivariance and
// indistinguishability.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "bohm/common.hpp"
#include "bohm/error.hpp"
#include "bohm/guidance.hpp"
#include "bohm/wavefield.hpp"
#include "json.hpp"

namespace bohm {

struct Ensemble {
  std::vector<Vec2> positions;
  std::shared_ptr<const WaveFunction> source;
  std::uint64_t seed = 0;
  std::string law = "born";
  double time = 0.0;
  int dims = 1;
  size_t truncated = 0;  // members dropped during the last push

  size_t size() const { return positions.size(); }
  std::vector<double> coordinate(int axis) const {
    std::vector<double> out(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) out[i] = positions[i][axis];
    return out;
  }
};

struct KSReport {
  double statistic = 0.0;
  double p_value = 1.0;
  size_t n = 0;
  size_t m = 0;

  bool passes(double alpha) const { return p_value >= alpha; }
  nlohmann::json to_json() const { return {{"statistic", statistic}, {"p_value", p_value}, {"n", n}, {"m", m}}; }
};

namespace detail {

/// Runs f(i) for i in [0, n) on up to hardware_concurrency threads. Results
/// must depend only on i for determinism.
template <class F>
void parallel_for(size_t n, F&& f) {
  const size_t workers = std::min<size_t>(std::max(1u, std::thread::hardware_concurrency()), std::max<size_t>(n, 1));
  if (workers <= 1 || n < 64) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Cumulative sums normalized to end at 1.
inline std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double s = 0.0;
  for (size_t i = 0; i < w.size(); ++i) c[i] = (s += w[i]);
  require(s > 0.0, Errc::zero_vector, "cannot sample from zero density");
  for (double& v : c) v /= s;
  c.back() = 1.0;
  return c;
}

inline size_t pick(const std::vector<double>& cdf, double u) {
  return static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

// Uniform position inside the periodic cell centred on grid index i.
inline double jitter(const Axis& ax, int i, double u) {
  double x = ax.coord(i) + (u - 0.5) * ax.spacing();
  if (x < ax.min) x += ax.length();
  if (x >= ax.max) x -= ax.length();
  return x;
}

}  // namespace detail

/// n i.i.d. draws from the gridded |psi|^2: inverse CDF over cells in 1D,
/// x-marginal then conditional column in 2D, uniform within the chosen cell.
inline Ensemble born_sample(const WaveFunction& psi, size_t n, std::uint64_t seed) {
  require(n >= 1, Errc::invalid_argument, "ensemble size must be >= 1");
  require(std::abs(norm_squared(psi) - 1.0) <= 1e-9, Errc::invalid_argument, "born_sample needs a normalized state");
  const Grid& g = psi.grid();
  const std::vector<double> rho = density(psi);
  Ensemble e;
  e.source = std::make_shared<const WaveFunction>(psi);
  e.seed = seed;
  e.time = psi.time();
  e.dims = g.dims();
  e.positions.resize(n);

  const int nx = g.nx(), ny = g.ny();
  std::vector<double> marginal(static_cast<size_t>(nx), 0.0);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) marginal[static_cast<size_t>(ix)] += rho[g.index(ix, iy)];
  const std::vector<double> cdf_x = detail::cumulative(marginal);
  std::vector<std::vector<double>> cdf_y;
  if (g.dims() == 2) {
    cdf_y.resize(static_cast<size_t>(nx));
    for (int ix = 0; ix < nx; ++ix) {
      if (marginal[static_cast<size_t>(ix)] <= 0.0) continue;
      std::vector<double> col(static_cast<size_t>(ny));
      for (int iy = 0; iy < ny; ++iy) col[static_cast<size_t>(iy)] = rho[g.index(ix, iy)];
      cdf_y[static_cast<size_t>(ix)] = detail::cumulative(col);
    }
  }

  detail::parallel_for(n, [&](size_t i) {
    std::mt19937_64 rng(detail::mix_seed(seed, i));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const size_t ix = detail::pick(cdf_x, u(rng));
    Vec2 q{detail::jitter(g.axis(0), static_cast<int>(ix), u(rng)), 0.0};
    if (g.dims() == 2) {
      const size_t iy = detail::pick(cdf_y[ix], u(rng));
      q.y = detail::jitter(g.axis(1), static_cast<int>(iy), u(rng));
    }
    e.positions[i] = q;
  });
  return e;
}

struct PushOptions {
  double dt = 1e-3;
  double max_truncation = 0.01;  // fraction; above it push_ensemble raises Errc::quality
  std::optional<std::uint64_t> noise_seed;  // stochastic laws; defaults to the ensemble seed
};

/// Moves every member from e.time to t under `law`. Members whose path stops
/// early are dropped and counted in `truncated`.
template <WaveHistory H>
Ensemble push_ensemble(const Ensemble& e, const H& h, const GuidanceLaw& law, double t, const PushOptions& opt = {}) {
  Ensemble out = e;
  out.law = law.name();
  out.time = t;
  out.truncated = 0;
  if (t == e.time) return out;
  const std::uint64_t noise = detail::mix_seed(opt.noise_seed.value_or(e.seed), 0x6e6f697365ULL);
  std::vector<Vec2> ends(e.size());
  std::vector<char> ok(e.size(), 0);
  detail::parallel_for(e.size(), [&](size_t i) {
    IntegrationOptions io;
    io.dt = opt.dt;
    io.record_every = 1 << 30;
    if (!law.deterministic()) io.seed = detail::mix_seed(noise, i);
    const Trajectory tr = integrate_trajectory(h, law, e.positions[i], e.time, t, io);
    ends[i] = tr.end();
    ok[i] = tr.complete() ? 1 : 0;
  });
  out.positions.clear();
  for (size_t i = 0; i < ends.size(); ++i) {
    if (ok[i]) out.positions.push_back(ends[i]);
    else ++out.truncated;
  }
  const double rate = static_cast<double>(out.truncated) / static_cast<double>(e.size());
  require(rate <= opt.max_truncation, Errc::quality,
          "truncation rate " + detail::fmt(rate) + " exceeds " + detail::fmt(opt.max_truncation));
  require(!out.positions.empty(), Errc::quality, "every member was truncated");
  return out;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// Survival function of the Kolmogorov distribution, P(K > lambda).
inline double kolmogorov_q(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // Jacobi-transformed series, fast for small lambda.
    const double pi = std::numbers::pi;
    const double a = -pi * pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 40; ++k) {
      const double term = std::exp(a * (2 * k - 1) * (2 * k - 1));
      s += term;
      if (term < 1e-18 * s) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

/// Two-sample KS: sup |F_a - F_b| and the asymptotic p-value with
/// lambda = D sqrt(nm / (n + m)).
inline KSReport ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), Errc::invalid_argument, "KS needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KSReport r;
  r.statistic = d;
  r.n = a.size();
  r.m = b.size();
  r.p_value = kolmogorov_q(d * std::sqrt(n * m / (n + m)));
  return r;
}

inline KSReport ks_two_sample(const Ensemble& a, const Ensemble& b, int axis = 0) {
  return ks_two_sample(a.coordinate(axis), b.coordinate(axis));
}

// ---------------------------------------------------------------------------
// Tests built from the pieces above

struct EnsembleRun {
  double snapshot_interval = 0.02;  // rounded down so it divides t
  PushOptions push;
  Potential potential = Potential::free();
  PhysicalConstants constants;
  int axis = 0;  // marginal compared by KS
};

struct EquivarianceResult {
  KSReport ks;
  Ensemble pushed;
  Ensemble reference;
};

namespace detail {

inline History history_to(const WaveFunction& psi0, double t, const EnsembleRun& run) {
  require(t > psi0.time(), Errc::invalid_argument, "target time must be after the initial state");
  const double span = t - psi0.time();
  const double interval = span / std::ceil(span / run.snapshot_interval - 1e-9);
  return record_history(psi0, run.potential, t, interval, run.constants);
}

}  // namespace detail

/// Pushes a Born sample of psi0 to t and compares it, on `run.axis`, with an
/// independent Born sample of psi(t).
inline EquivarianceResult equivariance_test(const WaveFunction& psi0, const GuidanceLaw& law, double t, size_t n,
                                            std::uint64_t seed, const EnsembleRun& run = {}) {
  const History h = detail::history_to(psi0, t, run);
  EquivarianceResult r;
  r.pushed = push_ensemble(born_sample(psi0, n, seed), h, law, t, run.push);
  r.reference = born_sample(normalize(h.snapshot(h.size() - 1)), n, detail::mix_seed(seed, 0x726566ULL));
  r.ks = ks_two_sample(r.pushed, r.reference, run.axis);
  return r;
}

/// Same Born sample of psi0 pushed under two laws; KS between their
/// marginals at t. Stochastic laws draw noise from the respective seed.
inline KSReport indistinguishability_test(const GuidanceLaw& a, const GuidanceLaw& b, const WaveFunction& psi0,
                                          double t, size_t n, std::uint64_t seed_a, std::uint64_t seed_b,
                                          const EnsembleRun& run = {}) {
  const History h = detail::history_to(psi0, t, run);
  const Ensemble start = born_sample(psi0, n, seed_a);
  PushOptions pa = run.push, pb = run.push;
  pa.noise_seed = seed_a;
  pb.noise_seed = seed_b;
  const Ensemble ea = push_ensemble(start, h, a, t, pa);
  const Ensemble eb = push_ensemble(seed_a == seed_b ? start : born_sample(psi0, n, seed_b), h, b, t, pb);
  return ks_two_sample(ea, eb, run.axis);
}

struct PathDivergence {
  double mean = 0.0;
  double max = 0.0;
  size_t pairs = 0;
};

/// Distance between the t1 endpoints of paired paths started at the same
/// points under two deterministic laws. Pairs where either path truncates are
/// skipped; more than 1% skipped raises Errc::quality.
template <WaveHistory H>
PathDivergence path_divergence(const H& h, const GuidanceLaw& a, const GuidanceLaw& b, const std::vector<Vec2>& q0,
                               double t0, double t1, double dt = 1e-3) {
  require(a.deterministic() && b.deterministic(), Errc::invalid_argument, "path_divergence needs deterministic laws");
  std::vector<double> dist(q0.size(), -1.0);
  detail::parallel_for(q0.size(), [&](size_t i) {
    IntegrationOptions io;
    io.dt = dt;
    io.record_every = 1 << 30;
    const Trajectory ta = integrate_trajectory(h, a, q0[i], t0, t1, io);
    const Trajectory tb = integrate_trajectory(h, b, q0[i], t0, t1, io);
    if (ta.complete() && tb.complete()) dist[i] = norm(ta.end() - tb.end());
  });
  PathDivergence r;
  double sum = 0.0;
  for (double d : dist) {
    if (d < 0.0) continue;
    ++r.pairs;
    sum += d;
    r.max = std::max(r.max, d);
  }
  require(r.pairs > 0 && static_cast<double>(q0.size() - r.pairs) <= 0.01 * static_cast<double>(q0.size()),
          Errc::quality, "too many truncated pairs");
  r.mean = sum / static_cast<double>(r.pairs);
  return r;
}

/// Largest |q0 - T_{-s} T_s q0| over the starting points: the integrator's
/// forward-backward round-trip error under a deterministic law.
template <WaveHistory H>
double round_trip_error(const H& h, const GuidanceLaw& law, const std::vector<Vec2>& q0, double t0, double t1,
                        double dt = 1e-3) {
  std::vector<double> err(q0.size(), 0.0);
  detail::parallel_for(q0.size(), [&](size_t i) {
    const Vec2 there = flow_map(h, law, q0[i], t0, t1 - t0, dt);
    err[i] = norm(flow_map(h, law, there, t1, t0 - t1, dt) - q0[i]);
  });
  return *std::max_element(err.begin(), err.end());
}

inline void write_csv(std::ostream& os, const Ensemble& e) {
  os << (e.dims == 1 ? "index,t,x\n" : "index,t,x,y\n");
  for (size_t i = 0; i < e.positions.size(); ++i) {
    os << i << ',' << detail::fmt(e.time) << ',' << detail::fmt(e.positions[i].x);
    if (e.dims == 2) os << ',' << detail::fmt(e.positions[i].y);
    os << '\n';
  }
}

}  // namespace bohm
