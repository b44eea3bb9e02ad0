#pragma once

// Finite-dimensional pre/post-selection: von Neumann pointer coupling, weak
// values, post-selected pointer statistics, and the three-box example.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "bohm/common.hpp"
#include "bohm/error.hpp"
#include "bohm/wavefield.hpp"
#include "json.hpp"

namespace bohm {

using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

class KetVector {
 public:
  explicit KetVector(CVector amps) : v_(std::move(amps)) {
    require(v_.size() >= 2, Errc::invalid_argument, "ket dimension must be >= 2");
    require(v_.allFinite(), Errc::nan_detected, "ket has non-finite amplitudes");
    require(v_.norm() > 1e-12, Errc::zero_vector, "ket is the zero vector");
  }
  KetVector(std::initializer_list<cplx> amps) : KetVector(CVector(Eigen::Map<const CVector>(amps.begin(), amps.size()))) {}

  static KetVector basis(int dim, int k) {
    CVector v = CVector::Zero(dim);
    v(k) = 1.0;
    return KetVector(v);
  }

  int dim() const { return static_cast<int>(v_.size()); }
  const CVector& amplitudes() const { return v_; }
  double norm() const { return v_.norm(); }
  KetVector normalized() const { return KetVector(v_ / v_.norm()); }
  bool is_normalized() const { return std::abs(v_.norm() - 1.0) <= 1e-12; }

 private:
  CVector v_;
};

class Observable {
 public:
  explicit Observable(CMatrix m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols() && m_.rows() >= 2, Errc::invalid_argument, "observable must be square, d >= 2");
    const double skew = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
    require(skew <= 1e-12, Errc::not_hermitian, "observable is not Hermitian (max |A - A^dagger| = " + detail::fmt(skew) + ")");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m_);
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
  }

  /// |k><k| in dimension d.
  static Observable projector(int dim, int k) {
    CMatrix p = CMatrix::Zero(dim, dim);
    p(k, k) = 1.0;
    return Observable(p);
  }
  static Observable pauli_z() {
    CMatrix z(2, 2);
    z << 1.0, 0.0, 0.0, -1.0;
    return Observable(z);
  }
  static Observable identity(int dim) { return Observable(CMatrix::Identity(dim, dim)); }

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }
  const Eigen::VectorXd& eigenvalues() const { return values_; }
  const CMatrix& eigenvectors() const { return vectors_; }

 private:
  CMatrix m_;
  Eigen::VectorXd values_;
  CMatrix vectors_;
};

/// <psi_f|U A|psi_i> / <psi_f|U|psi_i>, U defaulting to the identity.
inline cplx weak_value(const KetVector& psi_i, const KetVector& psi_f, const Observable& A,
                       const std::optional<CMatrix>& U = std::nullopt) {
  require(psi_i.dim() == A.dim() && psi_f.dim() == A.dim(), Errc::invalid_argument, "dimension mismatch");
  const CVector i = psi_i.normalized().amplitudes();
  const CVector f = psi_f.normalized().amplitudes();
  const CMatrix u = U ? *U : CMatrix::Identity(A.dim(), A.dim());
  require(u.rows() == A.dim() && u.cols() == A.dim(), Errc::invalid_argument, "U has the wrong shape");
  const cplx den = f.dot(u * i);
  require(std::abs(den) > 1e-12, Errc::orthogonal_postselection, "post-selected state is orthogonal to U|psi_i>");
  return f.dot(u * A.matrix() * i) / den;
}

struct PointerState {
  WaveFunction psi;
  double sigma;

  /// N exp(-(y / 2 sigma)^2) on a grid spanning 10 sigma + max_shift either side.
  static PointerState ready(double sigma, double max_shift = 1.0, int points = 1024) {
    require(sigma > 0.0 && std::isfinite(sigma), Errc::invalid_argument, "pointer sigma must be positive");
    const double half = 10.0 * sigma + std::abs(max_shift);
    const Grid g = Grid::line(-half, half, points);
    return {gaussian_packet(g, {0.0}, sigma), sigma};
  }
};

struct JointState {
  Grid grid;
  CMatrix amps;  // d x grid points, row = system basis index

  int dim() const { return static_cast<int>(amps.rows()); }
  double norm_squared() const { return amps.squaredNorm() * grid.cell_volume(); }
};

namespace detail {

// f(y - shift) by a spectral phase ramp; exact for band-limited periodic f.
inline std::vector<cplx> shifted(const WaveFunction& f, double shift) {
  std::vector<cplx> a(f.amplitudes().begin(), f.amplitudes().end());
  if (shift == 0.0) return a;
  const Grid& g = f.grid();
  forward_fft(a, g);
  const auto k = g.wavenumbers(0);
  for (size_t i = 0; i < a.size(); ++i) a[i] *= std::polar(1.0, -k[i] * shift);
  inverse_fft(a, g);
  return a;
}

}  // namespace detail

/// Impulsive coupling exp(-i strength A (x) P): the A-eigencomponent c_k of psi
/// carries the pointer lump phi(y - strength a_k).
inline JointState couple_pointer(const KetVector& psi, const Observable& A, const PointerState& pointer,
                                 double strength = 1.0) {
  require(strength > 0.0 && std::isfinite(strength), Errc::invalid_argument, "coupling strength must be positive");
  require(psi.dim() == A.dim(), Errc::invalid_argument, "dimension mismatch");
  require(psi.is_normalized(), Errc::invalid_argument, "prepared ket must be normalized");
  const Grid& g = pointer.psi.grid();
  const Axis& ax = g.axis(0);
  const double center = mean_position(pointer.psi);
  const int d = A.dim();
  JointState joint{g, CMatrix::Zero(d, static_cast<Eigen::Index>(g.size()))};
  for (int k = 0; k < d; ++k) {
    const double shift = strength * A.eigenvalues()(k);
    require(center + shift - 5.0 * pointer.sigma >= ax.min && center + shift + 5.0 * pointer.sigma <= ax.max,
            Errc::pointer_grid_too_narrow, "shifted pointer lump comes within 5 sigma of the grid edge");
    const CVector e = A.eigenvectors().col(k);
    const cplx c = e.dot(psi.amplitudes());
    if (std::abs(c) == 0.0) continue;
    const auto lump = detail::shifted(pointer.psi, shift);
    for (size_t y = 0; y < lump.size(); ++y) joint.amps.col(static_cast<Eigen::Index>(y)) += c * lump[y] * e;
  }
  return joint;
}

struct PostSelection {
  WaveFunction pointer;  // normalized conditional pointer state
  double probability;
};

/// Projects the system onto psi_f (after U if given); returns the normalized
/// pointer state and the squared norm of the projection.
inline PostSelection postselect(const JointState& joint, const KetVector& psi_f,
                                const std::optional<CMatrix>& U = std::nullopt) {
  require(psi_f.dim() == joint.dim(), Errc::invalid_argument, "dimension mismatch");
  CVector f = psi_f.normalized().amplitudes();
  if (U) f = U->adjoint() * f;
  const Eigen::RowVectorXcd proj = f.adjoint() * joint.amps;
  const double p = proj.squaredNorm() * joint.grid.cell_volume();
  require(std::sqrt(p) > 1e-12, Errc::orthogonal_postselection, "post-selection has zero probability");
  std::vector<cplx> a(static_cast<size_t>(proj.size()));
  for (Eigen::Index i = 0; i < proj.size(); ++i) a[static_cast<size_t>(i)] = proj(i) / std::sqrt(p);
  return {WaveFunction(joint.grid, std::move(a)), p};
}

/// First moment of |phi|^2.
inline double pointer_mean_shift(const WaveFunction& pointer) {
  return mean_position(normalize(pointer));
}

/// First moment of the pointer in momentum space (hbar = 1 units unless given).
inline double pointer_momentum_shift(const WaveFunction& pointer, const PhysicalConstants& c = {}) {
  return mean_momentum(normalize(pointer), c);
}

struct WeakValueReport {
  cplx weak_value;
  double postselect_probability = 0.0;
  double sigma = 0.0;
  std::optional<double> mean_shift;
  std::optional<double> momentum_shift;

  nlohmann::json to_json() const {
    nlohmann::json j{{"a_w_re", weak_value.real()}, {"a_w_im", weak_value.imag()},
                     {"p_postselect", postselect_probability}, {"sigma", sigma}};
    j["mean_shift"] = mean_shift ? nlohmann::json(*mean_shift) : nlohmann::json(nullptr);
    if (momentum_shift) j["momentum_shift"] = *momentum_shift;
    return j;
  }
};

/// Full pre-select, couple, post-select run with a pointer of spread sigma.
inline WeakValueReport weak_measurement(const KetVector& psi_i, const KetVector& psi_f, const Observable& A,
                                        double sigma, double strength = 1.0,
                                        const std::optional<CMatrix>& U = std::nullopt, int points = 1024) {
  WeakValueReport r;
  r.weak_value = weak_value(psi_i, psi_f, A, U);
  r.sigma = sigma;
  const double reach = strength * A.eigenvalues().cwiseAbs().maxCoeff();
  const PointerState ptr = PointerState::ready(sigma, reach, points);
  const PostSelection ps = postselect(couple_pointer(psi_i, A, ptr, strength), psi_f, U);
  r.postselect_probability = ps.probability;
  r.mean_shift = pointer_mean_shift(ps.pointer) / strength;
  r.momentum_shift = pointer_momentum_shift(ps.pointer);
  return r;
}

struct ThreeBox {
  KetVector psi_i{cplx(1.0), cplx(1.0), cplx(1.0)};
  KetVector psi_f{cplx(1.0), cplx(1.0), cplx(-1.0)};
  std::array<WeakValueReport, 3> boxes;  // projectors onto A, B, C
};

/// Weak values of the three box projectors for psi_i = (1,1,1)/sqrt3 and
/// psi_f = (1,1,-1)/sqrt3, each with a pointer run at spread sigma.
inline ThreeBox three_box_experiment(double sigma = 20.0) {
  ThreeBox tb;
  tb.psi_i = tb.psi_i.normalized();
  tb.psi_f = tb.psi_f.normalized();
  for (int k = 0; k < 3; ++k) tb.boxes[static_cast<size_t>(k)] =
      weak_measurement(tb.psi_i, tb.psi_f, Observable::projector(3, k), sigma);
  return tb;
}

/// Pointer profile CSV: y, |phi(y)|^2.
inline void write_pointer_csv(std::ostream& os, const WaveFunction& pointer) {
  os << "y,density\n";
  const auto rho = density(pointer);
  for (size_t i = 0; i < rho.size(); ++i) os << detail::fmt(pointer.grid().point(i).x) << ',' << detail::fmt(rho[i]) << '\n';
}

}  // namespace bohm
