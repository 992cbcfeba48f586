#pragma once

// Dense complex linear algebra used throughout the toolkit: Hermitian and
// unitary eigendecompositions, Pfaffians, phase unwrapping and the matrix
// exponential/logarithm restricted to the (anti-)Hermitian and unitary cases.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace z2wz {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

/// Raised when an input violates a structural precondition (hermiticity,
/// unitarity, antisymmetry, sizes).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace numlin {

struct Tolerances {
  double hermiticity = 1e-10;
  double unitarity = 1e-10;
  double antisymmetry = 1e-10;
  double cluster_gap = 1e-9;  // eigenphase clustering threshold
};

struct HermitianSpectrum {
  RVec eigenvalues;  // ascending
  Mat eigenvectors;  // columns
};

struct UnitaryEigendata {
  RVec eigenphases;  // in [0, 2pi)
  Mat eigenvectors;  // unitary columns
  std::vector<int> cluster;  // cluster label per eigenpair, ordered by phase
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  return a;
}

/// Wraps an angle into [0, 2pi).
inline double wrap_positive(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0) a += kTwoPi;
  if (a >= kTwoPi) a -= kTwoPi;
  return a;
}

inline double hermiticity_residual(const Mat& h) {
  return (h - h.adjoint()).norm();
}

inline double unitarity_residual(const Mat& u) {
  return (u.adjoint() * u - Mat::Identity(u.cols(), u.cols())).norm();
}

inline double antisymmetry_residual(const Mat& a) {
  return (a + a.transpose()).norm();
}

inline HermitianSpectrum eigh(const Mat& h, const Tolerances& tol = {}) {
  if (h.rows() != h.cols()) throw NumericalError("eigh: matrix not square");
  const double scale = std::max(1.0, h.norm());
  if (hermiticity_residual(h) > tol.hermiticity * scale)
    throw NumericalError("eigh: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success) throw NumericalError("eigh: no convergence");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// Pfaffian of a complex antisymmetric matrix by Parlett-Reid
/// tridiagonalization with partial pivoting.
inline cplx pfaffian(const Mat& a_in, const Tolerances& tol = {}) {
  const Eigen::Index n = a_in.rows();
  if (n != a_in.cols()) throw NumericalError("pfaffian: matrix not square");
  if (n % 2 != 0) throw NumericalError("pfaffian: odd dimension");
  if (antisymmetry_residual(a_in) > tol.antisymmetry * std::max(1.0, a_in.norm()))
    throw NumericalError("pfaffian: matrix is not antisymmetric");
  if (n == 0) return 1.0;

  Mat a = 0.5 * (a_in - a_in.transpose());
  cplx pf = 1.0;
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    Eigen::Index rel = 0;
    a.col(k).tail(n - k - 1).cwiseAbs().maxCoeff(&rel);
    const Eigen::Index kp = k + 1 + rel;
    if (kp != k + 1) {
      a.row(k + 1).swap(a.row(kp));
      a.col(k + 1).swap(a.col(kp));
      pf = -pf;
    }
    if (a(k + 1, k) == cplx(0.0)) return 0.0;
    pf *= a(k, k + 1);
    if (k + 2 < n) {
      const Eigen::Index r = n - k - 2;
      Vec tau = a.row(k).tail(r).transpose() / a(k, k + 1);
      Vec col = a.col(k + 1).tail(r);
      a.bottomRightCorner(r, r) += tau * col.transpose() - col * tau.transpose();
    }
  }
  return pf;
}

/// Continuous phase along a sequence of nonzero complex numbers. Throws when
/// a consecutive jump comes within `margin` of pi (under-resolved path).
inline std::vector<double> unwrap_phase(std::span<const cplx> z, double margin = 1e-3) {
  std::vector<double> out;
  out.reserve(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (std::abs(z[t]) == 0.0) throw NumericalError("unwrap_phase: zero entry");
    if (t == 0) {
      out.push_back(std::arg(z[t]));
      continue;
    }
    const double step = std::arg(z[t] / z[t - 1]);
    if (std::abs(step) >= kPi - margin)
      throw NumericalError("unwrap_phase: phase jump too close to pi at index " +
                           std::to_string(t));
    out.push_back(out.back() + step);
  }
  return out;
}

/// Eigendecomposition of a unitary matrix through the complex Schur form,
/// which is diagonal for normal matrices; the Schur vectors are therefore an
/// orthonormal eigenbasis even inside degenerate clusters.
inline UnitaryEigendata unitary_eig(const Mat& g, const Tolerances& tol = {}) {
  if (g.rows() != g.cols()) throw NumericalError("unitary_eig: matrix not square");
  if (unitarity_residual(g) > tol.unitarity * std::max<double>(1.0, g.rows()))
    throw NumericalError("unitary_eig: matrix is not unitary");
  const Eigen::Index n = g.rows();
  Eigen::ComplexSchur<Mat> schur(g);
  const Mat& t = schur.matrixT();
  const Mat& u = schur.matrixU();

  std::vector<double> ph(n);
  for (Eigen::Index a = 0; a < n; ++a) ph[a] = wrap_positive(std::arg(t(a, a)));
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index a = 0; a < n; ++a) order[a] = a;
  std::stable_sort(order.begin(), order.end(),
                   [&](auto x, auto y) { return ph[x] < ph[y]; });

  UnitaryEigendata out{RVec(n), Mat(n, n), std::vector<int>(n, 0)};
  for (Eigen::Index a = 0; a < n; ++a) {
    out.eigenphases(a) = ph[order[a]];
    out.eigenvectors.col(a) = u.col(order[a]);
  }
  int label = 0;
  for (Eigen::Index a = 1; a < n; ++a) {
    if (out.eigenphases(a) - out.eigenphases(a - 1) >= tol.cluster_gap) ++label;
    out.cluster[a] = label;
  }
  // the circle closes: last cluster merges with the first if they touch
  if (n > 1 && label > 0 &&
      out.eigenphases(0) + kTwoPi - out.eigenphases(n - 1) < tol.cluster_gap) {
    for (auto& c : out.cluster)
      if (c == label) c = 0;
  }
  return out;
}

/// exp(x) for anti-Hermitian x, through the spectrum of the Hermitian -i x.
inline Mat expm_antihermitian(const Mat& x) {
  Mat h = -kI * x;
  h = 0.5 * (h + h.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  Vec d(h.rows());
  for (Eigen::Index a = 0; a < h.rows(); ++a) d(a) = std::exp(kI * es.eigenvalues()(a));
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

/// Principal logarithm of a unitary matrix (eigenphases mapped to (-pi, pi]).
inline Mat logm_unitary(const Mat& g, const Tolerances& tol = {}) {
  auto ed = unitary_eig(g, tol);
  Vec d(g.rows());
  for (Eigen::Index a = 0; a < g.rows(); ++a) d(a) = kI * wrap_angle(ed.eigenphases(a));
  return ed.eigenvectors * d.asDiagonal() * ed.eigenvectors.adjoint();
}

/// Closest column-orthonormal matrix (unitary factor of the polar decomposition).
inline Mat polar_unitary(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

/// Standard symplectic form [[0, I_m], [-I_m, 0]].
inline Mat omega(Eigen::Index n) {
  if (n % 2 != 0) throw NumericalError("omega: odd dimension");
  const Eigen::Index m = n / 2;
  Mat w = Mat::Zero(n, n);
  w.topRightCorner(m, m) = Mat::Identity(m, m);
  w.bottomLeftCorner(m, m) = -Mat::Identity(m, m);
  return w;
}

/// Unit complex number with the phase of z.
inline cplx unit_phase(cplx z) {
  const double r = std::abs(z);
  if (r == 0.0) throw NumericalError("unit_phase: zero argument");
  return z / r;
}

}  // namespace numlin
}  // namespace z2wz
