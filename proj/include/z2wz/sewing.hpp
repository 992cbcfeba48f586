#pragma once

// Sewing matrices w(k) = e(-k)^dag u_theta conj(e(k)) of a smooth valence
// frame, their determinant branch, the SU(n) reduction and the Pfaffian
// formulas for the Z2 invariants in two and three dimensions.

#include <z2wz/bundle.hpp>

#include <json.hpp>

namespace z2wz {
namespace sewing {

using bundle::BZGrid;
using models::KPoint;

struct SewingField {
  BZGrid grid;
  int rank = 0;
  std::vector<Mat> w;
  double unitarity_residual = 0.0;
  double symmetry_residual = 0.0;  // max |w(-k) + w(k)^T|
  double trim_antisymmetry = 0.0;  // max |w + w^T| over TRIM
};

namespace detail {

inline void measure(SewingField& sf) {
  const BZGrid& g = sf.grid;
  sf.unitarity_residual = sf.symmetry_residual = sf.trim_antisymmetry = 0.0;
  for (int i = 0; i < g.count(); ++i) {
    sf.unitarity_residual = std::max(sf.unitarity_residual, numlin::unitarity_residual(sf.w[i]));
    sf.symmetry_residual =
        std::max(sf.symmetry_residual, (sf.w[g.reflected(i)] + sf.w[i].transpose()).norm());
  }
  for (int t : g.trims())
    sf.trim_antisymmetry = std::max(sf.trim_antisymmetry, numlin::antisymmetry_residual(sf.w[t]));
}

}  // namespace detail

inline SewingField from_matrices(const BZGrid& grid, std::vector<Mat> w) {
  if (static_cast<int>(w.size()) != grid.count()) throw NumericalError("sewing: field size mismatch");
  SewingField sf;
  sf.grid = grid;
  sf.rank = static_cast<int>(w.front().rows());
  sf.w = std::move(w);
  detail::measure(sf);
  return sf;
}

inline SewingField sewing_matrix(const bundle::FrameField& ff, const Mat& u_theta,
                                 double unitarity_tol = 1e-8, double symmetry_tol = 1e-4) {
  const BZGrid& g = ff.grid;
  std::vector<Mat> w(g.count());
  for (int i = 0; i < g.count(); ++i)
    w[i] = ff.frames[g.reflected(i)].adjoint() * u_theta * ff.frames[i].conjugate();
  SewingField sf = from_matrices(g, std::move(w));
  if (sf.unitarity_residual > unitarity_tol)
    throw NumericalError("sewing_matrix: sewing matrices not unitary (residual " +
                         std::to_string(sf.unitarity_residual) + "); frame is not a trivialization");
  if (sf.symmetry_residual > symmetry_tol)
    throw NumericalError("sewing_matrix: w(-k) = -w(k)^T violated (residual " +
                         std::to_string(sf.symmetry_residual) + ")");
  return sf;
}

/// w'(k) = U(-k) w(k) U(k)^T.
inline SewingField gauge_change(const SewingField& sf, const std::vector<Mat>& u) {
  const BZGrid& g = sf.grid;
  std::vector<Mat> w(g.count());
  for (int i = 0; i < g.count(); ++i) w[i] = u[g.reflected(i)] * sf.w[i] * u[i].transpose();
  return from_matrices(g, std::move(w));
}

/// U(k) = diag(exp(i windings.k), 1, ..., 1).
inline std::vector<Mat> winding_gauge(const BZGrid& g, int n, const std::vector<int>& windings) {
  std::vector<Mat> u(g.count(), Mat::Identity(n, n));
  for (int i = 0; i < g.count(); ++i) {
    const KPoint k = g.point(i);
    double ph = 0.0;
    for (int j = 0; j < g.dim(); ++j) ph += windings[j] * k[j];
    u[i](0, 0) = std::exp(kI * ph);
  }
  return u;
}

/// Winding gauge times exp of a random smooth anti-Hermitian field built
/// from the lowest Fourier harmonics.
inline std::vector<Mat> random_smooth_gauge(const BZGrid& g, int n, const std::vector<int>& windings,
                                            std::uint64_t seed, double amplitude = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto random_ah = [&] {
    Mat z(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) z(a, b) = cplx(nd(rng), nd(rng));
    return Mat(0.5 * (z - z.adjoint()));
  };
  std::vector<Mat> modes_c, modes_s;
  for (int j = 0; j < g.dim(); ++j) {
    modes_c.push_back(random_ah());
    modes_s.push_back(random_ah());
  }
  auto u = winding_gauge(g, n, windings);
  for (int i = 0; i < g.count(); ++i) {
    const KPoint k = g.point(i);
    Mat x = Mat::Zero(n, n);
    for (int j = 0; j < g.dim(); ++j)
      x += std::cos(k[j]) * modes_c[j] + std::sin(k[j]) * modes_s[j];
    u[i] = u[i] * numlin::expm_antihermitian(amplitude * x);
  }
  return u;
}

/// Continuous branch of arg det w on the grid.
struct DetBranch {
  BZGrid grid;
  std::vector<double> phase;
  std::vector<int> windings;  // per axis, maximum |winding| over all lines
  double max_jump = 0.0;
  double evenness_residual = 0.0;  // max |phase(-k) - phase(k)|
};

/// Continuation along the canonical sweep: the predecessor of a point lowers
/// its last nonzero coordinate by one. The base phase at k = 0 lies in (-pi, pi].
inline DetBranch det_branch(const SewingField& sf, double jump_margin = 1e-3) {
  const BZGrid& g = sf.grid;
  DetBranch b;
  b.grid = g;
  b.phase.assign(g.count(), 0.0);
  std::vector<cplx> det(g.count());
  for (int i = 0; i < g.count(); ++i) det[i] = sf.w[i].determinant();
  b.phase[0] = std::arg(det[0]);
  if (b.phase[0] <= -kPi) b.phase[0] += kTwoPi;
  auto step = [&](int from, int to) {
    const double s = std::arg(det[to] / det[from]);
    if (std::abs(s) >= kPi - jump_margin)
      throw NumericalError("det_branch: determinant jump too close to pi, grid under-resolved");
    return s;
  };
  for (int i = 1; i < g.count(); ++i) {
    auto m = g.multi(i);
    int axis = g.dim() - 1;
    while (m[axis] == 0) --axis;
    const int pred = g.shifted(i, axis, -1);
    b.phase[i] = b.phase[pred] + step(pred, i);
  }
  b.windings.assign(g.dim(), 0);
  for (int axis = 0; axis < g.dim(); ++axis) {
    for (int i = 0; i < g.count(); ++i) {
      if (g.multi(i)[axis] != 0) continue;
      double total = 0.0;
      int p = i;
      for (int t = 0; t < g.size(axis); ++t) {
        const int q = g.shifted(p, axis, 1);
        const double s = step(p, q);
        b.max_jump = std::max(b.max_jump, std::abs(s));
        total += s;
        p = q;
      }
      const int wnd = static_cast<int>(std::lround(total / kTwoPi));
      if (std::abs(wnd) > std::abs(b.windings[axis])) b.windings[axis] = wnd;
    }
    if (b.windings[axis] != 0)
      throw NumericalError("det_branch: det w winds along axis " + std::to_string(axis) +
                           " (winding " + std::to_string(b.windings[axis]) + ")");
  }
  for (int i = 0; i < g.count(); ++i)
    b.evenness_residual =
        std::max(b.evenness_residual, std::abs(b.phase[g.reflected(i)] - b.phase[i]));
  return b;
}

struct ReducedField {
  BZGrid grid;
  std::vector<Mat> w;  // special unitary
  double det_residual = 0.0;
  double symmetry_residual = 0.0;
};

inline ReducedField reduce_su(const SewingField& sf, const DetBranch& b) {
  ReducedField rf;
  rf.grid = sf.grid;
  rf.w.resize(sf.w.size());
  const double n = sf.rank;
  for (std::size_t i = 0; i < sf.w.size(); ++i) {
    rf.w[i] = std::exp(-kI * b.phase[i] / n) * sf.w[i];
    rf.det_residual = std::max(rf.det_residual, std::abs(rf.w[i].determinant() - 1.0));
  }
  const BZGrid& g = sf.grid;
  for (int i = 0; i < g.count(); ++i)
    rf.symmetry_residual =
        std::max(rf.symmetry_residual, (rf.w[g.reflected(i)] + rf.w[i].transpose()).norm());
  return rf;
}

struct TrimFactor {
  KPoint k;
  cplx pf;
  cplx sqrt_det;
  cplx factor;
  int sign = 0;
};

struct Certificate {
  std::vector<TrimFactor> factors;
  std::vector<int> windings;
  double symmetry_residual = 0.0;
  double trim_antisymmetry = 0.0;
  double evenness_residual = 0.0;
  int product = 1;
  int invariant = 0;  // KM in {0, 1}

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["invariant"] = invariant;
    j["product"] = product;
    j["windings"] = windings;
    j["symmetry_residual"] = symmetry_residual;
    j["trim_antisymmetry"] = trim_antisymmetry;
    j["branch_evenness_residual"] = evenness_residual;
    j["trim"] = nlohmann::json::array();
    for (const auto& f : factors)
      j["trim"].push_back({{"k", f.k},
                           {"pf", {f.pf.real(), f.pf.imag()}},
                           {"sqrt_det", {f.sqrt_det.real(), f.sqrt_det.imag()}},
                           {"factor", {f.factor.real(), f.factor.imag()}},
                           {"sign", f.sign}});
    return j;
  }
};

namespace detail {

inline cplx checked_pfaffian(const Mat& w, double antisym_tol) {
  if (numlin::antisymmetry_residual(w) > antisym_tol)
    throw NumericalError("fkm: sewing matrix not antisymmetric at a TRIM (residual " +
                         std::to_string(numlin::antisymmetry_residual(w)) + ")");
  return numlin::pfaffian(0.5 * (w - w.transpose()), {.antisymmetry = 1.0});
}

inline int round_unit(cplx z, double tol, const char* what) {
  if (std::abs(z.imag()) >= tol || std::abs(std::abs(z) - 1.0) >= tol)
    throw NumericalError(std::string(what) + " not within tolerance of +-1: (" +
                         std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")");
  return z.real() > 0 ? 1 : -1;
}

}  // namespace detail

/// Pfaffian formula: product over all TRIM of sqrt(det w)/pf w with one
/// global branch of sqrt(det w). `flip_branch` selects the other global root.
inline Certificate fkm(const SewingField& sf, const DetBranch& b, bool flip_branch = false,
                       double antisym_tol = 1e-8, double round_tol = 1e-6) {
  Certificate c;
  c.windings = b.windings;
  c.symmetry_residual = sf.symmetry_residual;
  c.trim_antisymmetry = sf.trim_antisymmetry;
  c.evenness_residual = b.evenness_residual;
  for (int t : sf.grid.trims()) {
    TrimFactor f;
    f.k = sf.grid.point(t);
    f.pf = detail::checked_pfaffian(sf.w[t], antisym_tol);
    f.sqrt_det = std::exp(0.5 * kI * b.phase[t]) * (flip_branch ? -1.0 : 1.0);
    f.factor = f.sqrt_det / f.pf;
    f.sign = detail::round_unit(f.factor, round_tol, "fkm: TRIM factor sqrt(det w)/pf w");
    c.product *= f.sign;
    c.factors.push_back(f);
  }
  c.invariant = c.product < 0 ? 1 : 0;
  return c;
}

inline Certificate fkm_2d(const SewingField& sf, const DetBranch& b, bool flip_branch = false) {
  if (sf.grid.dim() != 2) throw NumericalError("fkm_2d: two-dimensional field required");
  return fkm(sf, b, flip_branch);
}

inline Certificate fkm_3d_strong(const SewingField& sf, const DetBranch& b, bool flip_branch = false) {
  if (sf.grid.dim() != 3) throw NumericalError("fkm_3d_strong: three-dimensional field required");
  return fkm(sf, b, flip_branch);
}

/// Product of pf w~ over the TRIM; each Pfaffian must be +-1.
inline int pf_tilde_product(const ReducedField& rf, double antisym_tol = 1e-8, double round_tol = 1e-6) {
  int prod = 1;
  for (int t : rf.grid.trims())
    prod *= detail::round_unit(detail::checked_pfaffian(rf.w[t], antisym_tol), round_tol,
                               "pf_tilde_product: Pfaffian of reduced sewing matrix");
  return prod;
}

}  // namespace sewing
}  // namespace z2wz
