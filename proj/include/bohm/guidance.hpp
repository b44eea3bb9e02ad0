#pragma once

// Velocity fields of the de Broglie-Bohm family (standard, divergence-free
// modified, Nelson-stochastic) and trajectory integration through a recorded
// wavefunction history.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "bohm/common.hpp"
#include "bohm/error.hpp"
#include "bohm/wavefield.hpp"
#include "json.hpp"

namespace bohm {

/// Velocity evaluation refuses where |psi|^2 < node_threshold * max |psi|^2.
inline constexpr double node_threshold = 1e-10;

/// Wavefunction value and gradient at one configuration-space point.
struct LocalWave {
  cplx psi;
  cplx dx;
  cplx dy;
  double max_density = 0.0;  // max |psi|^2 over the grid at the same time
};

/// Anything that can report psi and grad psi at (q, t).
template <class H>
concept WaveHistory = requires(const H& h, Vec2 q, double t) {
  { h.sample(q, t) } -> std::same_as<LocalWave>;
  { h.contains(q) } -> std::convertible_to<bool>;
  { h.dims() } -> std::convertible_to<int>;
  { h.constants() } -> std::convertible_to<PhysicalConstants>;
  { h.t_begin() } -> std::convertible_to<double>;
  { h.t_end() } -> std::convertible_to<double>;
};

namespace detail {

// Lagrange weights for equispaced nodes 0..W-1 evaluated at offset s.
template <int W>
inline std::array<double, W> lagrange_weights(double s) {
  std::array<double, W> w{};
  for (int j = 0; j < W; ++j) {
    double p = 1.0;
    for (int m = 0; m < W; ++m)
      if (m != j) p *= (s - m) / static_cast<double>(j - m);
    w[static_cast<size_t>(j)] = p;
  }
  return w;
}

inline std::array<double, 4> lagrange4(const double* nodes, int count, double t) {
  std::array<double, 4> w{};
  for (int j = 0; j < count; ++j) {
    double p = 1.0;
    for (int m = 0; m < count; ++m)
      if (m != j) p *= (t - nodes[m]) / (nodes[j] - nodes[m]);
    w[static_cast<size_t>(j)] = p;
  }
  return w;
}

}  // namespace detail

/// Snapshots of psi and its spectral gradient at uniform times. Sampling is
/// cubic Lagrange in time (over the 4 snapshots around the enclosing interval)
/// and `Stencil`-point Lagrange in space with periodic wrap.
template <int Stencil = 6>
class BasicHistory {
  static_assert(Stencil % 2 == 0 && Stencil >= 2);

 public:
  BasicHistory(Grid grid, PhysicalConstants c, double t0, double interval)
      : grid_(std::move(grid)), c_(c), t0_(t0), interval_(interval) {}

  void push(const WaveFunction& psi) {
    require(psi.grid() == grid_, Errc::grid_mismatch, "history snapshot grid mismatch");
    Snapshot s;
    s.psi.assign(psi.amplitudes().begin(), psi.amplitudes().end());
    s.dx = spectral_gradient(psi, 0);
    if (grid_.dims() == 2) s.dy = spectral_gradient(psi, 1);
    for (const cplx& z : s.psi) s.max_density = std::max(s.max_density, std::norm(z));
    snaps_.push_back(std::move(s));
  }

  const Grid& grid() const { return grid_; }
  int dims() const { return grid_.dims(); }
  PhysicalConstants constants() const { return c_; }
  double t_begin() const { return t0_; }
  double t_end() const { return t0_ + interval_ * static_cast<double>(snaps_.empty() ? 0 : snaps_.size() - 1); }
  double interval() const { return interval_; }
  size_t size() const { return snaps_.size(); }
  bool contains(const Vec2& q) const { return grid_.contains(q); }

  /// Snapshot k as a WaveFunction.
  WaveFunction snapshot(size_t k) const {
    return WaveFunction(grid_, snaps_.at(k).psi, t0_ + interval_ * static_cast<double>(k));
  }

  LocalWave sample(const Vec2& q, double t) const {
    require(!snaps_.empty(), Errc::invalid_argument, "empty history");
    const int count_t = std::min<int>(4, static_cast<int>(snaps_.size()));
    int first = 0;
    double tnodes[4] = {0, 0, 0, 0};
    if (snaps_.size() > 1) {
      const double u = (t - t0_) / interval_;
      const int last_interval = static_cast<int>(snaps_.size()) - 2;
      const int k = std::clamp(static_cast<int>(std::floor(u)), 0, last_interval);
      first = std::clamp(k - 1, 0, static_cast<int>(snaps_.size()) - count_t);
    }
    for (int a = 0; a < count_t; ++a) tnodes[a] = t0_ + interval_ * (first + a);
    const auto wt = count_t == 1 ? std::array<double, 4>{1, 0, 0, 0} : detail::lagrange4(tnodes, count_t, t);

    const Axis& ax = grid_.axis(0);
    const double sx = (q.x - ax.min) / ax.spacing();
    const int ix0 = static_cast<int>(std::floor(sx)) - Stencil / 2 + 1;
    const auto wx = detail::lagrange_weights<Stencil>(sx - ix0);
    std::array<size_t, Stencil> colx{};
    for (int i = 0; i < Stencil; ++i) colx[static_cast<size_t>(i)] = static_cast<size_t>(wrap(ix0 + i, ax.points));

    LocalWave out;
    if (grid_.dims() == 1) {
      for (int a = 0; a < count_t; ++a) {
        const Snapshot& s = snaps_[static_cast<size_t>(first + a)];
        cplx p{}, d{};
        for (int i = 0; i < Stencil; ++i) {
          const size_t idx = colx[static_cast<size_t>(i)];
          p += wx[static_cast<size_t>(i)] * s.psi[idx];
          d += wx[static_cast<size_t>(i)] * s.dx[idx];
        }
        out.psi += wt[static_cast<size_t>(a)] * p;
        out.dx += wt[static_cast<size_t>(a)] * d;
        out.max_density += wt[static_cast<size_t>(a)] * s.max_density;
      }
      return out;
    }

    const Axis& ay = grid_.axis(1);
    const double sy = (q.y - ay.min) / ay.spacing();
    const int iy0 = static_cast<int>(std::floor(sy)) - Stencil / 2 + 1;
    const auto wy = detail::lagrange_weights<Stencil>(sy - iy0);
    for (int a = 0; a < count_t; ++a) {
      const Snapshot& s = snaps_[static_cast<size_t>(first + a)];
      cplx p{}, gx{}, gy{};
      for (int j = 0; j < Stencil; ++j) {
        const size_t row = static_cast<size_t>(wrap(iy0 + j, ay.points)) * static_cast<size_t>(ax.points);
        cplx rp{}, rx{}, ry{};
        for (int i = 0; i < Stencil; ++i) {
          const size_t idx = row + colx[static_cast<size_t>(i)];
          const double w = wx[static_cast<size_t>(i)];
          rp += w * s.psi[idx];
          rx += w * s.dx[idx];
          ry += w * s.dy[idx];
        }
        const double w = wy[static_cast<size_t>(j)];
        p += w * rp;
        gx += w * rx;
        gy += w * ry;
      }
      const double w = wt[static_cast<size_t>(a)];
      out.psi += w * p;
      out.dx += w * gx;
      out.dy += w * gy;
      out.max_density += w * s.max_density;
    }
    return out;
  }

 private:
  struct Snapshot {
    std::vector<cplx> psi, dx, dy;
    double max_density = 0.0;
  };

  static int wrap(int i, int n) { return ((i % n) + n) % n; }

  Grid grid_;
  PhysicalConstants c_;
  double t0_;
  double interval_;
  std::vector<Snapshot> snaps_;
};

using History = BasicHistory<6>;

/// Propagates psi0 from its own time past `t_end`, storing a snapshot every
/// `interval`; the covered span is rounded up to whole intervals.
template <int Stencil = 6>
BasicHistory<Stencil> record_history(const WaveFunction& psi0, const Potential& V, double t_end, double interval,
                                     const PhysicalConstants& c = {}, double max_substep = 0.0) {
  require(interval > 0.0, Errc::invalid_argument, "snapshot interval must be positive");
  require(t_end >= psi0.time(), Errc::invalid_argument, "history must run forward");
  const int count = static_cast<int>(std::ceil((t_end - psi0.time()) / interval - 1e-9));
  BasicHistory<Stencil> h(psi0.grid(), c, psi0.time(), interval);
  WaveFunction psi = psi0;
  h.push(psi);
  int sub = max_substep > 0.0 ? static_cast<int>(std::ceil(interval / max_substep - 1e-9)) : 1;
  // Respect the propagator's stability bound even when the free step would be exact.
  sub = std::max({sub, 1, static_cast<int>(std::floor(detail::kinetic_phase_bound(psi0.grid(), c, interval) / 3.0)) + 1});
  for (int k = 0; k < count; ++k) {
    psi = propagate(psi, V, interval / sub, sub, c);
    h.push(psi);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Guidance laws

/// Velocity-density field j(q, t) added as |psi|^-2 j to the standard velocity.
class DivFreeField {
 public:
  using Evaluator = std::function<Vec2(const Vec2&, double)>;

  DivFreeField(std::string name, int dims, Evaluator f, std::vector<Vec2> singular_points = {},
               double exclusion_radius = 0.0)
      : name_(std::move(name)), dims_(dims), f_(std::move(f)), singular_(std::move(singular_points)),
        exclusion_(exclusion_radius) {
    require(dims_ == 1 || dims_ == 2, Errc::invalid_argument, "field dims must be 1 or 2");
  }

  static DivFreeField zero(int dims = 2) {
    return DivFreeField("zero", dims, [](const Vec2&, double) { return Vec2{}; });
  }

  /// Constant offset c. In 1D this is the only divergence-free choice.
  static DivFreeField constant(const Vec2& c, int dims = 1) {
    const Vec2 v = dims == 1 ? Vec2{c.x, 0.0} : c;
    return DivFreeField("constant", dims, [v](const Vec2&, double) { return v; });
  }

  /// strength * (-(y-y0), x-x0) / r^2, a point vortex at `center`.
  static DivFreeField swirl(double strength = 1.0, const Vec2& center = {}, double exclusion_radius = 0.05) {
    return DivFreeField(
        "swirl", 2,
        [strength, center](const Vec2& q, double) {
          const double dx = q.x - center.x, dy = q.y - center.y;
          const double r2 = dx * dx + dy * dy;
          return Vec2{-strength * dy / r2, strength * dx / r2};
        },
        {center}, exclusion_radius);
  }

  const std::string& name() const { return name_; }
  int dims() const { return dims_; }
  const std::vector<Vec2>& singular_points() const { return singular_; }
  double exclusion_radius() const { return exclusion_; }

  bool near_singularity(const Vec2& q) const {
    return std::any_of(singular_.begin(), singular_.end(),
                       [&](const Vec2& s) { return norm(q - s) <= exclusion_; });
  }

  Vec2 operator()(const Vec2& q, double t = 0.0) const { return f_(q, t); }

 private:
  std::string name_;
  int dims_;
  Evaluator f_;
  std::vector<Vec2> singular_;
  double exclusion_;
};

/// max |div j| over the region's grid points by central differences, skipping
/// points within 3 spacings of a singular point and points rejected by `include`.
inline double check_divergence_free(const DivFreeField& j, const Grid& region,
                                    const std::function<bool(const Vec2&)>& include = {}) {
  const double h = 1e-4 * region.min_spacing();
  const double keep_out = 3.0 * region.min_spacing();
  double worst = 0.0;
  for (size_t i = 0; i < region.size(); ++i) {
    const Vec2 q = region.point(i);
    if (include && !include(q)) continue;
    if (std::any_of(j.singular_points().begin(), j.singular_points().end(),
                    [&](const Vec2& s) { return norm(q - s) < keep_out; }))
      continue;
    double div = (j({q.x + h, q.y}).x - j({q.x - h, q.y}).x) / (2.0 * h);
    if (region.dims() == 2 && j.dims() == 2) div += (j({q.x, q.y + h}).y - j({q.x, q.y - h}).y) / (2.0 * h);
    worst = std::max(worst, std::abs(div));
  }
  return worst;
}

class GuidanceLaw {
 public:
  struct Standard {};
  struct Modified { DivFreeField j; };
  struct Stochastic { double diffusion; };
  // v -> factor * v. Not equivariant unless factor == 1; exists as a negative control.
  struct Scaled { double factor; };
  using Variant = std::variant<Standard, Modified, Stochastic, Scaled>;

  static GuidanceLaw standard() { return GuidanceLaw(Standard{}); }

  /// Rejects fields whose divergence exceeds 1e-6 on a probe grid away from singular points.
  static GuidanceLaw modified(DivFreeField j) {
    const Grid probe = j.dims() == 1 ? Grid::line(-5.0, 5.0, 64) : Grid::plane({-5.0, 5.0, 40}, {-5.0, 5.0, 40});
    require(check_divergence_free(j, probe) <= 1e-6, Errc::invalid_argument, "field is not divergence-free");
    return GuidanceLaw(Modified{std::move(j)});
  }

  /// Nelson diffusion: drift v + nu grad(rho)/rho, noise sqrt(2 nu) dW.
  static GuidanceLaw stochastic(double diffusion) {
    require(diffusion > 0.0 && std::isfinite(diffusion), Errc::invalid_argument, "diffusion must be positive");
    return GuidanceLaw(Stochastic{diffusion});
  }
  static GuidanceLaw nelson(const PhysicalConstants& c = {}) { return stochastic(c.hbar / (2.0 * c.mass)); }

  static GuidanceLaw scaled(double factor) { return GuidanceLaw(Scaled{factor}); }

  const Variant& variant() const { return v_; }
  bool deterministic() const { return !std::holds_alternative<Stochastic>(v_); }

  std::string name() const {
    return std::visit(
        [](const auto& x) -> std::string {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Standard>) return "standard";
          else if constexpr (std::is_same_v<T, Modified>) return "modified:" + x.j.name();
          else if constexpr (std::is_same_v<T, Stochastic>) return "stochastic";
          else return "scaled";
        },
        v_);
  }

  nlohmann::json describe() const {
    nlohmann::json j{{"law", name()}};
    if (const auto* s = std::get_if<Stochastic>(&v_)) j["diffusion"] = s->diffusion;
    if (const auto* s = std::get_if<Scaled>(&v_)) j["factor"] = s->factor;
    return j;
  }

 private:
  explicit GuidanceLaw(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

// ---------------------------------------------------------------------------
// Velocity evaluation

enum class StepStatus { ok, node, out_of_bounds, singular };

inline std::string_view to_string(StepStatus s) {
  switch (s) {
    case StepStatus::ok: return "complete";
    case StepStatus::node: return "node";
    case StepStatus::out_of_bounds: return "out-of-bounds";
    case StepStatus::singular: return "singular-point";
  }
  return "unknown";
}

namespace detail {

inline Vec2 phase_velocity(const LocalWave& w, double hbar_m, int dims) {
  const double rho = std::norm(w.psi);
  const cplx cx = std::conj(w.psi) * w.dx;
  const cplx cy = std::conj(w.psi) * w.dy;
  return {hbar_m * cx.imag() / rho, dims == 2 ? hbar_m * cy.imag() / rho : 0.0};
}

inline Vec2 osmotic_direction(const LocalWave& w, int dims) {
  // grad(rho)/rho = 2 Re(conj(psi) grad psi) / |psi|^2
  const double rho = std::norm(w.psi);
  const cplx cx = std::conj(w.psi) * w.dx;
  const cplx cy = std::conj(w.psi) * w.dy;
  return {2.0 * cx.real() / rho, dims == 2 ? 2.0 * cy.real() / rho : 0.0};
}

/// Drift of `law` at (q, t). For the stochastic law this is the Nelson forward drift.
template <WaveHistory H>
StepStatus drift(const H& h, const GuidanceLaw& law, const Vec2& q, double t, Vec2& out) {
  if (!h.contains(q) || !finite(q)) return StepStatus::out_of_bounds;
  const LocalWave w = h.sample(q, t);
  const double rho = std::norm(w.psi);
  if (!(rho >= node_threshold * w.max_density) || rho == 0.0) return StepStatus::node;
  const int dims = h.dims();
  const double hm = h.constants().hbar_over_m();
  const Vec2 v = phase_velocity(w, hm, dims);
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, GuidanceLaw::Standard>) {
          out = v;
        } else if constexpr (std::is_same_v<T, GuidanceLaw::Modified>) {
          if (x.j.near_singularity(q)) return StepStatus::singular;
          Vec2 j = x.j(q, t);
          if (dims == 1) j.y = 0.0;
          out = v + (1.0 / rho) * j;
        } else if constexpr (std::is_same_v<T, GuidanceLaw::Stochastic>) {
          out = v + x.diffusion * osmotic_direction(w, dims);
        } else {
          out = x.factor * v;
        }
        return StepStatus::ok;
      },
      law.variant());
}

[[noreturn]] inline void raise(StepStatus s, const Vec2& q) {
  const std::string where = "(" + fmt(q.x) + ", " + fmt(q.y) + ")";
  switch (s) {
    case StepStatus::node: fail(Errc::node_proximity, "density below node threshold at " + where);
    case StepStatus::out_of_bounds: fail(Errc::out_of_bounds, "position outside grid at " + where);
    case StepStatus::singular: fail(Errc::singular_point, "inside exclusion radius of j at " + where);
    case StepStatus::ok: break;
  }
  fail(Errc::invalid_argument, "unexpected status");
}

}  // namespace detail

/// A single wavefunction viewed as a time-independent history.
class SnapshotField {
 public:
  explicit SnapshotField(const WaveFunction& psi, PhysicalConstants c = {})
      : h_(psi.grid(), c, psi.time(), 1.0) {
    h_.push(psi);
  }
  LocalWave sample(const Vec2& q, double t) const { return h_.sample(q, t); }
  bool contains(const Vec2& q) const { return h_.contains(q); }
  int dims() const { return h_.dims(); }
  PhysicalConstants constants() const { return h_.constants(); }
  double t_begin() const { return h_.t_begin(); }
  double t_end() const { return h_.t_end(); }

 private:
  History h_;
};

/// Velocity of `law` at q, t; throws on node, out-of-bounds or singular point.
template <WaveHistory H>
Vec2 velocity(const H& h, const GuidanceLaw& law, const Vec2& q, double t) {
  Vec2 v;
  const StepStatus s = detail::drift(h, law, q, t, v);
  if (s != StepStatus::ok) detail::raise(s, q);
  return v;
}

/// (hbar/m) Im(grad psi / psi) at q, gradient spectral on the grid and interpolated to q.
inline Vec2 standard_velocity(const WaveFunction& psi, const Vec2& q, const PhysicalConstants& c = {}) {
  const SnapshotField f(psi, c);
  return velocity(f, GuidanceLaw::standard(), q, psi.time());
}

/// standard_velocity + j(q) / |psi(q)|^2.
inline Vec2 modified_velocity(const WaveFunction& psi, const DivFreeField& j, const Vec2& q,
                              const PhysicalConstants& c = {}) {
  const SnapshotField f(psi, c);
  if (j.near_singularity(q)) detail::raise(StepStatus::singular, q);
  const Vec2 v = velocity(f, GuidanceLaw::standard(), q, psi.time());
  Vec2 jj = j(q, psi.time());
  if (psi.dims() == 1) jj.y = 0.0;
  return v + (1.0 / std::norm(f.sample(q, psi.time()).psi)) * jj;
}

// ---------------------------------------------------------------------------
// Trajectories

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec2> positions;
  std::string law;
  std::optional<std::uint64_t> seed;
  StepStatus status = StepStatus::ok;

  bool complete() const { return status == StepStatus::ok; }
  const Vec2& end() const { return positions.back(); }
};

struct IntegrationOptions {
  double dt = 1e-3;
  int record_every = 1;  // store every n-th step (endpoints always stored)
  std::optional<std::uint64_t> seed;
};

namespace detail {

template <WaveHistory H>
StepStatus rk4_step(const H& h, const GuidanceLaw& law, Vec2& q, double t, double dt) {
  Vec2 k1, k2, k3, k4;
  StepStatus s;
  if ((s = drift(h, law, q, t, k1)) != StepStatus::ok) return s;
  if ((s = drift(h, law, q + 0.5 * dt * k1, t + 0.5 * dt, k2)) != StepStatus::ok) return s;
  if ((s = drift(h, law, q + 0.5 * dt * k2, t + 0.5 * dt, k3)) != StepStatus::ok) return s;
  if ((s = drift(h, law, q + dt * k3, t + dt, k4)) != StepStatus::ok) return s;
  const Vec2 next = q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!h.contains(next) || !finite(next)) return StepStatus::out_of_bounds;
  q = next;
  return StepStatus::ok;
}

template <WaveHistory H, class Rng>
StepStatus euler_maruyama_step(const H& h, const GuidanceLaw& law, Vec2& q, double t, double dt, double diffusion,
                               Rng& rng) {
  Vec2 b;
  if (const StepStatus s = drift(h, law, q, t, b); s != StepStatus::ok) return s;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double amp = std::sqrt(2.0 * diffusion * dt);
  Vec2 noise{amp * normal(rng), 0.0};
  if (h.dims() == 2) noise.y = amp * normal(rng);
  const Vec2 next = q + dt * b + noise;
  if (!h.contains(next) || !finite(next)) return StepStatus::out_of_bounds;
  q = next;
  return StepStatus::ok;
}

}  // namespace detail

/// Integrates one path from (q0, t0) to t1; t1 < t0 integrates backwards
/// (deterministic laws only). Deterministic laws use classical RK4, the
/// stochastic law Euler-Maruyama. A path that meets a node, leaves the grid or
/// enters a singular region stops there with the corresponding status.
template <WaveHistory H>
Trajectory integrate_trajectory(const H& h, const GuidanceLaw& law, Vec2 q0, double t0, double t1,
                                const IntegrationOptions& opt) {
  require(opt.dt > 0.0, Errc::invalid_argument, "dt must be positive");
  require(opt.record_every >= 1, Errc::invalid_argument, "record_every must be >= 1");
  if (h.dims() == 1) q0.y = 0.0;
  require(h.contains(q0), Errc::out_of_bounds, "initial position outside grid");
  const auto* stoch = std::get_if<GuidanceLaw::Stochastic>(&law.variant());
  require(!stoch || opt.seed.has_value(), Errc::invalid_argument, "stochastic law needs a seed");
  require(!stoch || t1 >= t0, Errc::invalid_argument, "stochastic paths run forward only");

  Trajectory tr;
  tr.law = law.name();
  tr.seed = stoch ? opt.seed : std::nullopt;
  tr.times.push_back(t0);
  tr.positions.push_back(q0);
  if (t1 == t0) return tr;

  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / opt.dt - 1e-9)));
  const double step = (t1 - t0) / n;
  std::mt19937_64 rng(opt.seed.value_or(0));
  Vec2 q = q0;
  for (int i = 0; i < n; ++i) {
    const double t = t0 + step * i;
    const StepStatus s = stoch ? detail::euler_maruyama_step(h, law, q, t, step, stoch->diffusion, rng)
                               : detail::rk4_step(h, law, q, t, step);
    if (s != StepStatus::ok) {
      tr.status = s;
      if (tr.times.back() != t) {
        tr.times.push_back(t);
        tr.positions.push_back(q);
      }
      return tr;
    }
    if ((i + 1) % opt.record_every == 0 || i + 1 == n) {
      tr.times.push_back(i + 1 == n ? t1 : t0 + step * (i + 1));
      tr.positions.push_back(q);
    }
  }
  return tr;
}

/// Endpoint of the deterministic flow from (q, t_start) over a signed duration tau.
template <WaveHistory H>
Vec2 flow_map(const H& h, const GuidanceLaw& law, const Vec2& q, double t_start, double tau, double dt = 1e-3) {
  require(law.deterministic(), Errc::invalid_argument, "flow_map needs a deterministic law");
  if (tau == 0.0) return q;
  IntegrationOptions opt;
  opt.dt = dt;
  opt.record_every = 1 << 30;
  const Trajectory tr = integrate_trajectory(h, law, q, t_start, t_start + tau, opt);
  if (!tr.complete()) detail::raise(tr.status, tr.end());
  return tr.end();
}

inline void write_csv(std::ostream& os, const Trajectory& tr, int dims) {
  os << (dims == 1 ? "t,x\n" : "t,x,y\n");
  for (size_t i = 0; i < tr.times.size(); ++i) {
    os << detail::fmt(tr.times[i]) << ',' << detail::fmt(tr.positions[i].x);
    if (dims == 2) os << ',' << detail::fmt(tr.positions[i].y);
    os << '\n';
  }
}

/// Manifest entry for a bundle of trajectories sharing one law.
inline nlohmann::json bundle_manifest(const GuidanceLaw& law, double dt, std::optional<std::uint64_t> seed,
                                      const std::vector<std::string>& files) {
  nlohmann::json j = law.describe();
  j["dt"] = dt;
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  j["files"] = files;
  return j;
}

}  // namespace bohm
