#pragma once

// Wavefunctions on uniform periodic grids and their evolution under the
// time-dependent Schroedinger equation (split-step spectral propagator).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bohm/common.hpp"
#include "bohm/error.hpp"
#include "bohm/fft.hpp"

namespace bohm {

struct PhysicalConstants {
  double hbar = 1.0;
  double mass = 1.0;

  void validate() const {
    require(hbar > 0.0 && std::isfinite(hbar), Errc::invalid_argument, "hbar must be positive");
    require(mass > 0.0 && std::isfinite(mass), Errc::invalid_argument, "mass must be positive");
  }
  double hbar_over_m() const { return hbar / mass; }
};

/// One periodic axis: `points` samples at min + i*spacing, spacing = (max-min)/points.
struct Axis {
  double min = -1.0;
  double max = 1.0;
  int points = 8;

  double spacing() const { return (max - min) / points; }
  double length() const { return max - min; }
  double coord(int i) const { return min + i * spacing(); }
  friend bool operator==(const Axis&, const Axis&) = default;
};

class Grid {
 public:
  static Grid line(double min, double max, int points) { return Grid({min, max, points}); }
  static Grid line(const Axis& x) { return Grid(x); }
  static Grid plane(const Axis& x, const Axis& y) { return Grid(x, y); }

  int dims() const { return dims_; }
  const Axis& axis(int a) const { return axes_[static_cast<size_t>(a)]; }
  int nx() const { return axes_[0].points; }
  int ny() const { return dims_ == 2 ? axes_[1].points : 1; }
  size_t size() const { return static_cast<size_t>(nx()) * static_cast<size_t>(ny()); }
  double cell_volume() const { return dims_ == 1 ? axes_[0].spacing() : axes_[0].spacing() * axes_[1].spacing(); }
  double min_spacing() const {
    return dims_ == 1 ? axes_[0].spacing() : std::min(axes_[0].spacing(), axes_[1].spacing());
  }

  size_t index(int ix, int iy = 0) const { return static_cast<size_t>(iy) * static_cast<size_t>(nx()) + static_cast<size_t>(ix); }
  Vec2 point(size_t idx) const {
    const int ix = static_cast<int>(idx % static_cast<size_t>(nx()));
    const int iy = static_cast<int>(idx / static_cast<size_t>(nx()));
    return {axes_[0].coord(ix), dims_ == 2 ? axes_[1].coord(iy) : 0.0};
  }

  bool contains(const Vec2& q) const {
    if (!(q.x >= axes_[0].min && q.x < axes_[0].max)) return false;
    if (dims_ == 2 && !(q.y >= axes_[1].min && q.y < axes_[1].max)) return false;
    return true;
  }

  /// Angular wavenumbers in FFT order for axis `a`.
  std::vector<double> wavenumbers(int a) const {
    const Axis& ax = axis(a);
    const int n = ax.points;
    std::vector<double> k(static_cast<size_t>(n));
    const double dk = 2.0 * std::numbers::pi / ax.length();
    for (int i = 0; i < n; ++i) k[static_cast<size_t>(i)] = dk * (i < (n + 1) / 2 ? i : i - n);
    return k;
  }
  double nyquist(int a) const { return std::numbers::pi / axis(a).spacing(); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dims_ == b.dims_ && a.axes_[0] == b.axes_[0] && (a.dims_ == 1 || a.axes_[1] == b.axes_[1]);
  }

 private:
  explicit Grid(const Axis& x) : dims_(1), axes_{x, Axis{}} { check(x); }
  Grid(const Axis& x, const Axis& y) : dims_(2), axes_{x, y} { check(x); check(y); }

  static void check(const Axis& a) {
    require(std::isfinite(a.min) && std::isfinite(a.max) && a.min < a.max, Errc::invalid_argument,
            "grid axis needs min < max");
    require(a.points >= 8, Errc::invalid_argument, "grid axis needs at least 8 points");
  }

  int dims_;
  std::array<Axis, 2> axes_;
};

class WaveFunction {
 public:
  WaveFunction(Grid grid, std::vector<cplx> amplitudes, double time = 0.0)
      : grid_(std::move(grid)), amps_(std::move(amplitudes)), time_(time) {
    require(amps_.size() == grid_.size(), Errc::invalid_argument, "amplitude count does not match grid");
    require(std::all_of(amps_.begin(), amps_.end(),
                        [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }),
            Errc::nan_detected, "non-finite amplitude");
  }

  const Grid& grid() const { return grid_; }
  std::span<const cplx> amplitudes() const { return amps_; }
  const cplx& operator[](size_t i) const { return amps_[i]; }
  double time() const { return time_; }
  int dims() const { return grid_.dims(); }

  /// Complex conjugate with time reflected; evolving the conjugate forward runs
  /// the original backward when the Hamiltonian is real.
  WaveFunction conjugated() const {
    std::vector<cplx> out(amps_.size());
    std::transform(amps_.begin(), amps_.end(), out.begin(), [](const cplx& z) { return std::conj(z); });
    return WaveFunction(grid_, std::move(out), -time_);
  }

 private:
  Grid grid_;
  std::vector<cplx> amps_;
  double time_;
};

/// V(q), time independent. Harmonic is (1/2) m omega^2 |q|^2.
class Potential {
 public:
  struct Free {};
  struct Harmonic { double omega; };
  struct Tabulated { std::vector<double> values; };

  static Potential free() { return Potential(Free{}); }
  static Potential harmonic(double omega) {
    require(omega > 0.0 && std::isfinite(omega), Errc::invalid_argument, "harmonic omega must be positive");
    return Potential(Harmonic{omega});
  }
  static Potential tabulated(std::vector<double> values) {
    require(std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }),
            Errc::invalid_argument, "tabulated potential must be finite");
    return Potential(Tabulated{std::move(values)});
  }

  bool is_free() const { return std::holds_alternative<Free>(kind_); }

  std::vector<double> sample(const Grid& grid, const PhysicalConstants& c) const {
    std::vector<double> v(grid.size(), 0.0);
    if (const auto* h = std::get_if<Harmonic>(&kind_)) {
      for (size_t i = 0; i < v.size(); ++i) {
        const Vec2 q = grid.point(i);
        v[i] = 0.5 * c.mass * h->omega * h->omega * (q.x * q.x + q.y * q.y);
      }
    } else if (const auto* t = std::get_if<Tabulated>(&kind_)) {
      require(t->values.size() == grid.size(), Errc::grid_mismatch, "tabulated potential does not match grid");
      v = t->values;
    }
    return v;
  }

 private:
  explicit Potential(std::variant<Free, Harmonic, Tabulated> k) : kind_(std::move(k)) {}
  std::variant<Free, Harmonic, Tabulated> kind_;
};

// ---------------------------------------------------------------------------
// Grid reductions

inline double norm_squared(const WaveFunction& psi) {
  double s = 0.0;
  for (const cplx& z : psi.amplitudes()) s += std::norm(z);
  return s * psi.grid().cell_volume();
}

inline double l2_distance(std::span<const cplx> a, std::span<const cplx> b, double cell) {
  require(a.size() == b.size(), Errc::grid_mismatch, "size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return std::sqrt(s * cell);
}

inline WaveFunction normalize(const WaveFunction& psi) {
  const double n = std::sqrt(norm_squared(psi));
  require(n >= 1e-12, Errc::zero_vector, "wavefunction norm below 1e-12");
  std::vector<cplx> out(psi.amplitudes().begin(), psi.amplitudes().end());
  for (cplx& z : out) z /= n;
  return WaveFunction(psi.grid(), std::move(out), psi.time());
}

/// Born density |psi|^2 on the grid.
inline std::vector<double> density(const WaveFunction& psi) {
  std::vector<double> rho(psi.grid().size());
  std::transform(psi.amplitudes().begin(), psi.amplitudes().end(), rho.begin(),
                 [](const cplx& z) { return std::norm(z); });
  return rho;
}

inline double mean_position(const WaveFunction& psi, int axis = 0) {
  const Grid& g = psi.grid();
  double s = 0.0, w = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    const double r = std::norm(psi[i]);
    s += r * g.point(i)[axis];
    w += r;
  }
  return s / w;
}

inline double position_variance(const WaveFunction& psi, int axis = 0) {
  const Grid& g = psi.grid();
  const double m = mean_position(psi, axis);
  double s = 0.0, w = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    const double r = std::norm(psi[i]);
    const double d = g.point(i)[axis] - m;
    s += r * d * d;
    w += r;
  }
  return s / w;
}

namespace detail {

inline void forward_fft(std::vector<cplx>& a, const Grid& g) {
  if (g.dims() == 1) fft_inplace(a, 1, g.nx(), 1, 1, true);
  else fft_inplace(a, 2, g.nx(), g.ny(), 1, true);
}

inline void inverse_fft(std::vector<cplx>& a, const Grid& g) {
  if (g.dims() == 1) fft_inplace(a, 1, g.nx(), 1, 1, false);
  else fft_inplace(a, 2, g.nx(), g.ny(), 1, false);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (cplx& z : a) z *= inv;
}

inline double kinetic_phase_bound(const Grid& g, const PhysicalConstants& c, double dt) {
  double k2 = 0.0;
  for (int a = 0; a < g.dims(); ++a) k2 += g.nyquist(a) * g.nyquist(a);
  return dt * c.hbar * k2 / (2.0 * c.mass);
}

}  // namespace detail

/// Spectral derivative d psi / d q_axis on the grid.
inline std::vector<cplx> spectral_gradient(const Grid& g, std::span<const cplx> amps, int axis) {
  std::vector<cplx> a(amps.begin(), amps.end());
  detail::forward_fft(a, g);
  auto k = g.wavenumbers(axis);
  // The Nyquist mode of an even axis is sign-ambiguous; drop it so that
  // derivatives of real data stay real.
  if (g.axis(axis).points % 2 == 0) k[static_cast<size_t>(g.axis(axis).points / 2)] = 0.0;
  const int nx = g.nx();
  for (size_t i = 0; i < a.size(); ++i) {
    const size_t ki = axis == 0 ? i % static_cast<size_t>(nx) : i / static_cast<size_t>(nx);
    a[i] *= cplx(0.0, k[ki]);
  }
  detail::inverse_fft(a, g);
  return a;
}

inline std::vector<cplx> spectral_gradient(const WaveFunction& psi, int axis) {
  return spectral_gradient(psi.grid(), psi.amplitudes(), axis);
}

/// <p_axis> from the momentum-space distribution.
inline double mean_momentum(const WaveFunction& psi, const PhysicalConstants& c = {}, int axis = 0) {
  std::vector<cplx> a(psi.amplitudes().begin(), psi.amplitudes().end());
  const Grid& g = psi.grid();
  detail::forward_fft(a, g);
  const auto k = g.wavenumbers(axis);
  double s = 0.0, w = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const size_t ki = axis == 0 ? i % static_cast<size_t>(g.nx()) : i / static_cast<size_t>(g.nx());
    const double r = std::norm(a[i]);
    s += r * k[ki];
    w += r;
  }
  return c.hbar * s / w;
}

// ---------------------------------------------------------------------------
// Constructors

/// Normalized N exp(-|q-center|^2/(4 width^2)) exp(i k.q); isotropic in 2D.
inline WaveFunction gaussian_packet(const Grid& grid, const Vec2& center, double width, const Vec2& momentum = {}) {
  require(width > 0.0 && std::isfinite(width), Errc::invalid_argument, "width must be positive");
  require(width >= 3.0 * grid.min_spacing(), Errc::width_under_resolved,
          "gaussian width below 3 grid spacings");
  require(grid.contains(center), Errc::out_of_bounds, "gaussian center outside grid");
  std::vector<cplx> a(grid.size());
  for (size_t i = 0; i < a.size(); ++i) {
    const Vec2 q = grid.point(i);
    const Vec2 d = q - center;
    double r2 = d.x * d.x;
    double phase = momentum.x * q.x;
    if (grid.dims() == 2) {
      r2 += d.y * d.y;
      phase += momentum.y * q.y;
    }
    a[i] = std::exp(-r2 / (4.0 * width * width)) * std::polar(1.0, phase);
  }
  return normalize(WaveFunction(grid, std::move(a)));
}

/// Normalized ca*a + cb*b.
inline WaveFunction superpose(const WaveFunction& a, const WaveFunction& b, cplx ca, cplx cb) {
  require(a.grid() == b.grid(), Errc::grid_mismatch, "superpose needs identical grids");
  std::vector<cplx> out(a.grid().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = ca * a[i] + cb * b[i];
  return normalize(WaveFunction(a.grid(), std::move(out), a.time()));
}

/// psi(x, y) = f(x) g(y) on the plane spanned by the two line grids.
inline WaveFunction tensor_product(const WaveFunction& fx, const WaveFunction& gy) {
  require(fx.dims() == 1 && gy.dims() == 1, Errc::invalid_argument, "tensor_product takes two 1D states");
  Grid g = Grid::plane(fx.grid().axis(0), gy.grid().axis(0));
  std::vector<cplx> a(g.size());
  for (int iy = 0; iy < g.ny(); ++iy)
    for (int ix = 0; ix < g.nx(); ++ix) a[g.index(ix, iy)] = fx[static_cast<size_t>(ix)] * gy[static_cast<size_t>(iy)];
  return WaveFunction(std::move(g), std::move(a), fx.time());
}

// ---------------------------------------------------------------------------
// Propagation

/// Strang split-step: half potential kick, exact kinetic step in Fourier space,
/// half potential kick. Periodic boundaries; `steps` steps of size `dt`.
inline WaveFunction propagate(const WaveFunction& psi, const Potential& V, double dt, int steps,
                              const PhysicalConstants& c = {}) {
  c.validate();
  require(steps >= 0, Errc::invalid_argument, "steps must be nonnegative");
  if (steps == 0) return psi;
  require(dt > 0.0 && std::isfinite(dt), Errc::invalid_argument, "dt must be positive");
  const Grid& g = psi.grid();
  require(detail::kinetic_phase_bound(g, c, dt) < std::numbers::pi, Errc::stability_violation,
          "dt * hbar * k_max^2 / 2m must stay below pi");

  const auto kx = g.wavenumbers(0);
  const auto ky = g.dims() == 2 ? g.wavenumbers(1) : std::vector<double>{0.0};
  std::vector<cplx> kinetic(g.size());
  for (int iy = 0; iy < g.ny(); ++iy)
    for (int ix = 0; ix < g.nx(); ++ix) {
      const double k2 = kx[static_cast<size_t>(ix)] * kx[static_cast<size_t>(ix)] +
                        ky[static_cast<size_t>(g.dims() == 2 ? iy : 0)] * ky[static_cast<size_t>(g.dims() == 2 ? iy : 0)];
      kinetic[g.index(ix, iy)] = std::polar(1.0, -c.hbar * k2 * dt / (2.0 * c.mass));
    }

  std::vector<cplx> half_kick;
  if (!V.is_free()) {
    const auto v = V.sample(g, c);
    half_kick.resize(g.size());
    for (size_t i = 0; i < v.size(); ++i) half_kick[i] = std::polar(1.0, -v[i] * dt / (2.0 * c.hbar));
  }

  std::vector<cplx> a(psi.amplitudes().begin(), psi.amplitudes().end());
  for (int s = 0; s < steps; ++s) {
    if (!half_kick.empty())
      for (size_t i = 0; i < a.size(); ++i) a[i] *= half_kick[i];
    detail::forward_fft(a, g);
    for (size_t i = 0; i < a.size(); ++i) a[i] *= kinetic[i];
    detail::inverse_fft(a, g);
    if (!half_kick.empty())
      for (size_t i = 0; i < a.size(); ++i) a[i] *= half_kick[i];
  }
  for (const cplx& z : a)
    require(std::isfinite(z.real()) && std::isfinite(z.imag()), Errc::nan_detected, "propagation produced NaN");
  return WaveFunction(g, std::move(a), psi.time() + dt * steps);
}

/// Propagates to `t_end` using the largest step <= max_dt that lands exactly on it.
inline WaveFunction propagate_to(const WaveFunction& psi, const Potential& V, double t_end, double max_dt,
                                 const PhysicalConstants& c = {}) {
  const double span = t_end - psi.time();
  require(span >= 0.0, Errc::invalid_argument, "propagate_to cannot go backwards");
  if (span == 0.0) return psi;
  const int steps = std::max(1, static_cast<int>(std::ceil(span / max_dt - 1e-9)));
  WaveFunction out = propagate(psi, V, span / steps, steps, c);
  return WaveFunction(out.grid(), std::vector<cplx>(out.amplitudes().begin(), out.amplitudes().end()), t_end);
}

/// CSV snapshot: axis coordinates, Re, Im.
inline void write_csv(std::ostream& os, const WaveFunction& psi) {
  const Grid& g = psi.grid();
  os << (g.dims() == 1 ? "x,re,im\n" : "x,y,re,im\n");
  for (size_t i = 0; i < g.size(); ++i) {
    const Vec2 q = g.point(i);
    os << detail::fmt(q.x) << ',';
    if (g.dims() == 2) os << detail::fmt(q.y) << ',';
    os << detail::fmt(psi[i].real()) << ',' << detail::fmt(psi[i].imag()) << '\n';
  }
}

}  // namespace bohm
