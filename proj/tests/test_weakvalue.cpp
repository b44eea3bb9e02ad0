#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "bohm/weakvalue.hpp"
#include "support.hpp"

using namespace bohm;
using bohm::testing::code_of;

namespace {

constexpr double alpha = 0.8, beta = 0.6;

KetVector qubit() { return KetVector{cplx(alpha), cplx(beta)}; }
KetVector plus() { return KetVector{cplx(1.0), cplx(1.0)}.normalized(); }

// Post-selected pointer f(y) = sum_i c_i phi(y - a_i), phi a Gaussian of spread
// sigma. With E_ij = exp(-(a_i - a_j)^2 / (8 sigma^2)):
//   <y> = Re sum c_i* c_j (a_i + a_j)/2 E_ij / sum c_i* c_j E_ij
//   <p> = (i / 4 sigma^2) sum c_i* c_j (a_i - a_j) E_ij / sum c_i* c_j E_ij
struct MixtureMoments {
  double mean, momentum, mass;
};
MixtureMoments mixture(const std::vector<cplx>& c, const std::vector<double>& a, double sigma) {
  cplx num_y = 0.0, num_p = 0.0, den = 0.0;
  for (size_t i = 0; i < c.size(); ++i)
    for (size_t j = 0; j < c.size(); ++j) {
      const double e = std::exp(-(a[i] - a[j]) * (a[i] - a[j]) / (8.0 * sigma * sigma));
      const cplx w = std::conj(c[i]) * c[j] * e;
      num_y += w * 0.5 * (a[i] + a[j]);
      num_p += w * (a[i] - a[j]);
      den += w;
    }
  return {(num_y / den).real(), (cplx(0.0, 1.0) / (4.0 * sigma * sigma) * num_p / den).real(), den.real()};
}

// Qubit, Z, post-selected on |+>: c = (alpha, beta) / sqrt2 at a = (+1, -1).
double qubit_plus_mean(double sigma) {
  return (alpha * alpha - beta * beta) / (alpha * alpha + beta * beta + 2 * alpha * beta * std::exp(-1.0 / (2 * sigma * sigma)));
}

}  // namespace

TEST(WeakValue, ThreeBoxProjectors) {
  const KetVector i = KetVector{cplx(1), cplx(1), cplx(1)}.normalized();
  const KetVector f = KetVector{cplx(1), cplx(1), cplx(-1)}.normalized();
  const cplx a = weak_value(i, f, Observable::projector(3, 0));
  const cplx b = weak_value(i, f, Observable::projector(3, 1));
  const cplx c = weak_value(i, f, Observable::projector(3, 2));
  EXPECT_NEAR(std::abs(a - 1.0), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(b - 1.0), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(c + 1.0), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(a + b + c - 1.0), 0.0, 1e-12);
}

TEST(WeakValue, EigenstatePostSelectionGivesEigenvalue) {
  CMatrix m(3, 3);
  m << 2.0, cplx(0, 1), 0.0, cplx(0, -1), 1.0, 0.5, 0.0, 0.5, -1.0;
  const Observable A(m);
  for (int k = 0; k < 3; ++k) {
    const KetVector e(A.eigenvectors().col(k));
    EXPECT_NEAR(std::abs(weak_value(e, e, A) - A.eigenvalues()(k)), 0.0, 1e-12);
  }
}

TEST(WeakValue, QubitFormula) {
  const cplx aw = weak_value(qubit(), plus(), Observable::pauli_z());
  EXPECT_NEAR(aw.real(), (alpha - beta) / (alpha + beta), 1e-14);
  EXPECT_NEAR(aw.real(), 1.0 / 7.0, 1e-14);
  EXPECT_EQ(aw.imag(), 0.0);
}

TEST(WeakValue, LinearityAndIdentity) {
  const KetVector i{cplx(0.3, 0.1), cplx(-0.2, 0.7), cplx(0.5, 0.0)};
  const KetVector f{cplx(0.9, -0.2), cplx(0.1, 0.4), cplx(-0.3, 0.2)};
  CMatrix a(3, 3), b(3, 3);
  a << 1.0, cplx(0.2, 0.3), 0.0, cplx(0.2, -0.3), -0.5, 1.0, 0.0, 1.0, 2.0;
  b << 0.0, 1.0, cplx(0, 2), 1.0, 3.0, 0.0, cplx(0, -2), 0.0, -1.0;
  const cplx lhs = weak_value(i, f, Observable(a + 2.0 * b));
  const cplx rhs = weak_value(i, f, Observable(a)) + 2.0 * weak_value(i, f, Observable(b));
  EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(weak_value(i, f, Observable::identity(3)) - 1.0), 0.0, 1e-14);
}

TEST(WeakValue, EvolutionBetweenCouplingAndPostSelection) {
  const double s = 1.0 / std::sqrt(2.0);
  CMatrix h(2, 2);
  h << s, s, s, -s;
  const KetVector f = KetVector::basis(2, 0);
  // <0|H Z|psi> / <0|H|psi> = (alpha - beta) / (alpha + beta) again.
  EXPECT_NEAR(std::abs(weak_value(qubit(), f, Observable::pauli_z(), h) - 1.0 / 7.0), 0.0, 1e-14);
}

TEST(WeakValue, Errors) {
  EXPECT_EQ(code_of([] { weak_value(KetVector::basis(2, 0), KetVector::basis(2, 1), Observable::pauli_z()); }),
            Errc::orthogonal_postselection);
  CMatrix m(2, 2);
  m << 1.0, 1.0, 0.0, 1.0;
  EXPECT_EQ(code_of([&] { Observable{m}; }), Errc::not_hermitian);
  EXPECT_EQ(code_of([] { KetVector{cplx(0), cplx(0)}; }), Errc::zero_vector);
}

TEST(CouplePointer, EigenstateGivesOneShiftedLump) {
  const auto ptr = PointerState::ready(0.5, 2.0);
  CMatrix m(3, 3);
  m << -1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 2.0;
  const Observable A(m);
  const auto joint = couple_pointer(KetVector::basis(3, 2), A, ptr);
  EXPECT_NEAR(joint.norm_squared(), 1.0, 1e-9);
  const auto ps = postselect(joint, KetVector::basis(3, 2));
  EXPECT_NEAR(ps.probability, 1.0, 1e-9);
  EXPECT_NEAR(pointer_mean_shift(ps.pointer), 2.0, 1e-9);
  EXPECT_NEAR(position_variance(ps.pointer), 0.25, 1e-9);
}

TEST(CouplePointer, StrongAndWeakOverlap) {
  for (double sigma : {0.1, 10.0}) {
    const auto joint = couple_pointer(qubit(), Observable::pauli_z(), PointerState::ready(sigma));
    const cplx ov = joint.amps.row(0).conjugate().dot(joint.amps.row(1).transpose()) * joint.grid.cell_volume();
    const double overlap = std::abs(ov) / (alpha * beta);
    if (sigma < 1.0) {
      EXPECT_LT(overlap, 1e-6);
    } else {
      EXPECT_GT(overlap, 0.99);
      EXPECT_NEAR(overlap, std::exp(-1.0 / (2 * sigma * sigma)), 1e-9);
    }
  }
}

TEST(CouplePointer, NarrowGridAndBadInputs) {
  const PointerState narrow{gaussian_packet(Grid::line(-3, 3, 256), {0.0}, 0.5), 0.5};
  EXPECT_EQ(code_of([&] { couple_pointer(qubit(), Observable::pauli_z(), narrow); }), Errc::pointer_grid_too_narrow);
  EXPECT_EQ(code_of([] { couple_pointer(KetVector{cplx(1), cplx(1)}, Observable::pauli_z(), PointerState::ready(1)); }),
            Errc::invalid_argument);
}

TEST(PostSelect, EigenstatesCentreThePointer) {
  const auto joint = couple_pointer(qubit(), Observable::pauli_z(), PointerState::ready(0.3));
  const auto up = postselect(joint, KetVector::basis(2, 0));
  const auto down = postselect(joint, KetVector::basis(2, 1));
  EXPECT_NEAR(pointer_mean_shift(up.pointer), 1.0, 1e-9);
  EXPECT_NEAR(pointer_mean_shift(down.pointer), -1.0, 1e-9);
  EXPECT_NEAR(up.probability, alpha * alpha, 1e-9);
  EXPECT_NEAR(down.probability, beta * beta, 1e-9);
}

TEST(PostSelect, PlusMatchesMixtureOracle) {
  double last_err = 1e9;
  for (double sigma : {2.0, 4.0, 8.0, 16.0}) {
    const auto joint = couple_pointer(qubit(), Observable::pauli_z(), PointerState::ready(sigma));
    const auto ps = postselect(joint, plus());
    const double mean = pointer_mean_shift(ps.pointer);
    EXPECT_NEAR(mean, qubit_plus_mean(sigma), 1e-9) << sigma;
    const MixtureMoments mm = mixture({alpha / std::sqrt(2.0), beta / std::sqrt(2.0)}, {1.0, -1.0}, sigma);
    EXPECT_NEAR(ps.probability, mm.mass, 1e-9);
    const double err = std::abs(mean - 1.0 / 7.0);
    EXPECT_LT(err, last_err);
    last_err = err;
  }
  const auto strong = postselect(couple_pointer(qubit(), Observable::pauli_z(), PointerState::ready(0.1)), plus());
  EXPECT_NEAR(pointer_mean_shift(strong.pointer), 0.28, 1e-9);
  EXPECT_NEAR(pointer_mean_shift(PointerState::ready(1.0).psi), 0.0, 1e-12);
}

TEST(PostSelect, StrongLimitFollowsBornWeights) {
  CMatrix m = CMatrix::Zero(3, 3);
  m.diagonal() << -1.0, 0.0, 2.0;
  const Observable A(m);
  const KetVector i = KetVector{cplx(0.5, 0.1), cplx(0.3), cplx(-0.2, 0.6)}.normalized();
  const KetVector f = KetVector{cplx(0.7), cplx(0.2, -0.4), cplx(0.1)}.normalized();
  const auto ps = postselect(couple_pointer(i, A, PointerState::ready(0.05, 2.0, 4096)), f);
  std::vector<double> w(3);
  double total = 0.0;
  for (int k = 0; k < 3; ++k) total += (w[k] = std::norm(std::conj(f.amplitudes()(k)) * i.amplitudes()(k)));
  const auto rho = density(ps.pointer);
  const std::array<double, 3> at{-1.0, 0.0, 2.0};
  for (int k = 0; k < 3; ++k) {
    double mass = 0.0;
    for (size_t y = 0; y < rho.size(); ++y)
      if (std::abs(ps.pointer.grid().point(y).x - at[k]) < 0.5) mass += rho[y] * ps.pointer.grid().cell_volume();
    EXPECT_NEAR(mass, w[k] / total, 1e-6);
  }
}

TEST(PostSelect, ComplexWeakValueShiftsMomentum) {
  const KetVector f{cplx(1.0), std::polar(1.0, std::numbers::pi / 3)};
  const cplx aw = weak_value(qubit(), f, Observable::pauli_z());
  ASSERT_GT(std::abs(aw.imag()), 0.1);
  const KetVector fn = f.normalized();
  const std::vector<cplx> c{std::conj(fn.amplitudes()(0)) * alpha, std::conj(fn.amplitudes()(1)) * beta};
  for (double sigma : {1.0, 3.0, 9.0}) {
    const auto r = weak_measurement(qubit(), f, Observable::pauli_z(), sigma);
    const MixtureMoments mm = mixture(c, {1.0, -1.0}, sigma);
    EXPECT_NEAR(*r.mean_shift, mm.mean, 1e-9);
    EXPECT_NEAR(*r.momentum_shift, mm.momentum, 1e-9);
  }
  // Weak limit: <p> 2 sigma^2 -> Im a_w.
  const auto r = weak_measurement(qubit(), f, Observable::pauli_z(), 40.0);
  EXPECT_NEAR(*r.momentum_shift * 2 * 1600.0, aw.imag(), 1e-3);
}

TEST(ThreeBoxExperiment, ReportsAndPointers) {
  const ThreeBox tb = three_box_experiment();
  const std::array<double, 3> expect{1.0, 1.0, -1.0};
  double sum = 0.0;
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(std::abs(tb.boxes[k].weak_value - expect[k]), 0.0, 1e-12);
    EXPECT_NEAR(*tb.boxes[k].mean_shift, expect[k], 0.01);
    EXPECT_NEAR(tb.boxes[k].postselect_probability, 1.0 / 9.0, 1e-3);
    sum += tb.boxes[k].weak_value.real();
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto j = tb.boxes[2].to_json();
  for (const char* key : {"a_w_re", "a_w_im", "p_postselect", "sigma", "mean_shift"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(PointerCsv, Header) {
  std::ostringstream os;
  write_pointer_csv(os, PointerState::ready(1.0).psi);
  EXPECT_EQ(os.str().substr(0, 10), "y,density\n");
}
