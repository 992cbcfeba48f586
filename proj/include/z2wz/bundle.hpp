#pragma once

// Brillouin-zone grids, valence projectors, smooth periodic frames of the
// valence bundle, Berry connections and two independent topological oracles
// (lattice Chern number, Wannier-center flow).

#include <z2wz/models.hpp>
#include <z2wz/numlin.hpp>

#include <array>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace z2wz {

class GapClosingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotTrivializableError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

namespace bundle {

using models::KPoint;

/// Regular grid on [0, 2pi)^d. Flat index runs with axis 0 fastest.
class BZGrid {
 public:
  BZGrid() = default;
  explicit BZGrid(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() != 2 && sizes_.size() != 3) throw NumericalError("BZGrid: d must be 2 or 3");
    for (int s : sizes_)
      if (s <= 0 || s % 2 != 0) throw NumericalError("BZGrid: sizes must be even and positive");
  }
  static BZGrid uniform(int dim, int n) { return BZGrid(std::vector<int>(dim, n)); }

  int dim() const { return static_cast<int>(sizes_.size()); }
  int size(int axis) const { return sizes_[axis]; }
  const std::vector<int>& sizes() const { return sizes_; }
  int count() const {
    int c = 1;
    for (int s : sizes_) c *= s;
    return c;
  }
  double spacing(int axis) const { return kTwoPi / sizes_[axis]; }

  std::vector<int> multi(int flat) const {
    std::vector<int> m(sizes_.size());
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
      m[j] = flat % sizes_[j];
      flat /= sizes_[j];
    }
    return m;
  }
  int flat(const std::vector<int>& m) const {
    int f = 0;
    for (int j = dim() - 1; j >= 0; --j) {
      const int s = sizes_[j];
      f = f * s + ((m[j] % s) + s) % s;
    }
    return f;
  }
  KPoint point(int flat_index) const {
    auto m = multi(flat_index);
    KPoint k(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) k[j] = kTwoPi * m[j] / sizes_[j];
    return k;
  }
  int shifted(int flat_index, int axis, int step) const {
    auto m = multi(flat_index);
    m[axis] += step;
    return flat(m);
  }
  /// Index of -k.
  int reflected(int flat_index) const {
    auto m = multi(flat_index);
    for (auto& x : m) x = -x;
    return flat(m);
  }
  /// The 2^d time-reversal-invariant momenta, ordered with axis 0 fastest.
  std::vector<int> trims() const {
    std::vector<int> out;
    for (int mask = 0; mask < (1 << dim()); ++mask) {
      std::vector<int> m(dim());
      for (int j = 0; j < dim(); ++j) m[j] = (mask >> j) & 1 ? sizes_[j] / 2 : 0;
      out.push_back(flat(m));
    }
    return out;
  }

 private:
  std::vector<int> sizes_;
};

struct ProjectorField {
  BZGrid grid;
  int rank = 0;
  std::vector<Mat> projectors;  // N x N
  std::vector<Mat> eigenvectors;  // N x rank valence eigenvectors (arbitrary gauge)
  double gap = 0.0;  // minimal gap between the valence and conduction bands
  KPoint gap_k;
  double bandwidth = 0.0;
  double symmetry_residual = 0.0;  // max |u conj(P(k)) u^dag - P(-k)|
  Mat u_theta;
};

inline std::string format_k(const KPoint& k) {
  std::ostringstream os;
  os << "(";
  for (std::size_t j = 0; j < k.size(); ++j) os << (j ? ", " : "") << k[j];
  os << ")";
  return os.str();
}

/// Spectral projectors onto the states below the Fermi level. Throws
/// GapClosingError when the gap drops below gap_rel_tol * bandwidth.
inline ProjectorField valence_projectors(const models::BlochModel& model, const BZGrid& grid,
                                         double gap_rel_tol = 1e-6) {
  if (grid.dim() != model.dim()) throw NumericalError("valence_projectors: grid dimension mismatch");
  ProjectorField pf;
  pf.grid = grid;
  pf.u_theta = model.theta().u_theta;
  const int total = grid.count();
  pf.projectors.resize(total);
  pf.eigenvectors.resize(total);
  const double ef = model.fermi();
  double emin = 1e300, emax = -1e300;
  pf.gap = 1e300;
  for (int i = 0; i < total; ++i) {
    const KPoint k = grid.point(i);
    auto s = numlin::eigh(model.evaluate(k));
    int r = 0;
    while (r < s.eigenvalues.size() && s.eigenvalues(r) < ef) ++r;
    if (i == 0) pf.rank = r;
    if (r != pf.rank || r == 0 || r == model.size())
      throw GapClosingError("metallic/gap-closing: valence rank changes at k = " + format_k(k));
    emin = std::min(emin, s.eigenvalues(0));
    emax = std::max(emax, s.eigenvalues(s.eigenvalues.size() - 1));
    const double g = s.eigenvalues(r) - s.eigenvalues(r - 1);
    if (g < pf.gap) {
      pf.gap = g;
      pf.gap_k = k;
    }
    pf.eigenvectors[i] = s.eigenvectors.leftCols(r);
    pf.projectors[i] = pf.eigenvectors[i] * pf.eigenvectors[i].adjoint();
  }
  pf.bandwidth = emax - emin;
  if (pf.gap < gap_rel_tol * std::max(pf.bandwidth, 1e-300))
    throw GapClosingError("metallic/gap-closing: gap " + std::to_string(pf.gap) + " at k = " +
                          format_k(pf.gap_k));
  const Mat& u = pf.u_theta;
  for (int i = 0; i < total; ++i) {
    const double v =
        (u * pf.projectors[i].conjugate() * u.adjoint() - pf.projectors[grid.reflected(i)]).norm();
    pf.symmetry_residual = std::max(pf.symmetry_residual, v);
  }
  return pf;
}

/// Two-dimensional slice of a grid. For d = 3 the axis `fixed_axis` is held at
/// `fixed_index`; `axes` lists the two free axes in increasing order.
struct Slice {
  int fixed_axis = -1;
  int fixed_index = 0;

  std::array<int, 2> axes(const BZGrid& g) const {
    if (g.dim() == 2) return {0, 1};
    std::array<int, 2> a{};
    int c = 0;
    for (int j = 0; j < 3; ++j)
      if (j != fixed_axis) a[c++] = j;
    return a;
  }
  int index(const BZGrid& g, int i, int j) const {
    auto ax = axes(g);
    std::vector<int> m(g.dim(), 0);
    if (g.dim() == 3) m[fixed_axis] = fixed_index;
    m[ax[0]] = i;
    m[ax[1]] = j;
    return g.flat(m);
  }
};

struct ChernResult {
  int value = 0;
  double raw = 0.0;
  double residual = 0.0;
};

/// Lattice first Chern number from plaquette Berry fluxes.
inline ChernResult chern_number(const ProjectorField& pf, const Slice& slice = {}) {
  const BZGrid& g = pf.grid;
  if (g.dim() == 3 && (slice.fixed_axis < 0 || slice.fixed_axis > 2))
    throw NumericalError("chern_number: a 3d field needs a fixed axis");
  auto ax = slice.axes(g);
  const int n1 = g.size(ax[0]), n2 = g.size(ax[1]);
  auto link = [&](int a, int b) {
    return (pf.eigenvectors[a].adjoint() * pf.eigenvectors[b]).determinant();
  };
  double flux = 0.0;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const int p00 = slice.index(g, i, j), p10 = slice.index(g, i + 1, j);
      const int p11 = slice.index(g, i + 1, j + 1), p01 = slice.index(g, i, j + 1);
      const cplx loop = link(p00, p10) * link(p10, p11) * link(p11, p01) * link(p01, p00);
      flux += std::arg(loop);
    }
  ChernResult r;
  r.raw = flux / kTwoPi;
  r.value = static_cast<int>(std::lround(r.raw));
  r.residual = std::abs(r.raw - r.value);
  if (r.residual > 1e-3)
    throw NumericalError("chern_number: non-integral flux, grid under-resolved (residual " +
                         std::to_string(r.residual) + ")");
  return r;
}

/// Wannier-center flow Z2 index of a 2d time-reversal-invariant slice.
/// Wilson loops run along the second slice axis; the first axis is swept
/// over half the zone and crossings of the centers with the midpoint of the
/// largest gap are counted mod 2.
inline int wilson_loop_z2(const ProjectorField& pf, const Slice& slice = {}) {
  const BZGrid& g = pf.grid;
  auto ax = slice.axes(g);
  const int n1 = g.size(ax[0]), n2 = g.size(ax[1]);
  std::vector<std::vector<double>> centers;
  for (int i = 0; i <= n1 / 2; ++i) {
    Mat w = Mat::Identity(pf.rank, pf.rank);
    for (int j = 0; j < n2; ++j) {
      const Mat& a = pf.eigenvectors[slice.index(g, i, j)];
      const Mat& b = pf.eigenvectors[slice.index(g, i, j + 1)];
      w = w * numlin::polar_unitary(a.adjoint() * b);
    }
    auto ed = numlin::unitary_eig(w, {.unitarity = 1e-8});
    centers.emplace_back(ed.eigenphases.data(), ed.eigenphases.data() + ed.eigenphases.size());
  }
  // midpoint of the largest gap between neighbouring centers on the circle
  auto largest_gap_mid = [](const std::vector<double>& th) {
    double best = -1.0, mid = 0.0;
    for (std::size_t a = 0; a < th.size(); ++a) {
      const double lo = th[a];
      const double hi = a + 1 < th.size() ? th[a + 1] : th[0] + kTwoPi;
      if (hi - lo > best) {
        best = hi - lo;
        mid = numlin::wrap_positive(0.5 * (lo + hi));
      }
    }
    return mid;
  };
  int parity = 0;
  for (std::size_t s = 0; s + 1 < centers.size(); ++s) {
    const double z1 = largest_gap_mid(centers[s]);
    const double z2 = largest_gap_mid(centers[s + 1]);
    for (double th : centers[s + 1]) {
      // center passed by the reference point moving along the short arc z1 -> z2
      const double dz = numlin::wrap_angle(z2 - z1);
      const double dt = numlin::wrap_angle(th - z1);
      if (dz * dt > 0 && std::abs(dt) < std::abs(dz)) parity ^= 1;
    }
  }
  return parity;
}

// --- smooth frames ----------------------------------------------------------------

struct FrameField {
  BZGrid grid;
  int rank = 0;
  std::vector<Mat> frames;  // N x rank, orthonormal columns in range P(k)
  double smoothness = 0.0;  // max over grid links of |e(k') - e(k)|
  double seam_mismatch = 0.0;  // closure error of the construction across the seams
  double span_residual = 0.0;  // max |P e - e|
};

namespace detail {

inline double link_smoothness(const BZGrid& g, const std::vector<Mat>& e) {
  double m = 0.0;
  for (int i = 0; i < g.count(); ++i)
    for (int a = 0; a < g.dim(); ++a) m = std::max(m, (e[g.shifted(i, a, 1)] - e[i]).norm());
  return m;
}

/// Parallel transport of `start` through the projectors at `path` (path[0]
/// is the start point). Returns frames at every path point plus the frame
/// transported one step past the end onto `closing`.
inline std::vector<Mat> transport(const ProjectorField& pf, const std::vector<int>& path,
                                  const Mat& start, int closing, Mat* closed) {
  std::vector<Mat> out(path.size());
  out[0] = start;
  for (std::size_t t = 1; t < path.size(); ++t)
    out[t] = numlin::polar_unitary(pf.projectors[path[t]] * out[t - 1]);
  *closed = numlin::polar_unitary(pf.projectors[closing] * out.back());
  return out;
}

/// log of a unitary as an anti-Hermitian matrix on a branch avoiding -1,
/// after a left shift by q^{-1}: returns L with exp(L) = q^{-1} s.
inline Mat shifted_log(const Mat& q, const Mat& s) {
  return numlin::logm_unitary(q.adjoint() * s, {.unitarity = 1e-8});
}

/// Smallest distance of -1 to the spectrum of q^{-1} s over the samples.
inline double cut_distance(const Mat& q, const std::vector<Mat>& samples) {
  double d = 1e300;
  for (const auto& s : samples) {
    auto ed = numlin::unitary_eig(q.adjoint() * s, {.unitarity = 1e-8});
    for (int a = 0; a < ed.eigenphases.size(); ++a)
      d = std::min(d, std::abs(ed.eigenphases(a) - kPi));
  }
  return d;
}

inline Mat random_su(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Mat z(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) z(i, j) = cplx(nd(rng), nd(rng));
  Eigen::HouseholderQR<Mat> qr(z);
  Mat q = qr.householderQ();
  const cplx d = q.determinant();
  q.col(0) /= d / std::abs(d);
  return q;
}

/// Given a field of unitaries m[x] on a periodic sample set (the seam
/// mismatches), returns for each sample a pair (phase alpha, anti-Hermitian L)
/// and a constant Lq with m = e^{i alpha/n} q exp(L), exp(Lq) = q^{-1}; the
/// interpolation C(t) = e^{-i alpha t/n} exp(-t L) exp(t Lq) then runs from
/// I to m^{-1} and is smooth in x.
struct SeamCorrection {
  std::vector<double> alpha;
  std::vector<Mat> logs;
  Mat lq;
  double cut_distance = 0.0;

  Mat at(std::size_t x, double t) const {
    const auto n = logs[x].rows();
    return std::exp(-kI * alpha[x] * t / double(n)) * numlin::expm_antihermitian(-t * logs[x]) *
           numlin::expm_antihermitian(t * lq);
  }
};

inline SeamCorrection seam_correction(const std::vector<Mat>& m, const std::vector<double>& alpha,
                                      std::uint64_t seed = 7) {
  const auto n = static_cast<int>(m[0].rows());
  std::vector<Mat> s(m.size());
  for (std::size_t x = 0; x < m.size(); ++x) s[x] = std::exp(-kI * alpha[x] / double(n)) * m[x];
  std::mt19937_64 rng(seed);
  Mat q = Mat::Identity(n, n);
  double best = cut_distance(q, s);
  for (int trial = 0; trial < 64 && best < 0.5; ++trial) {
    Mat c = random_su(rng, n);
    const double d = cut_distance(c, s);
    if (d > best) {
      best = d;
      q = c;
    }
  }
  if (best < 1e-3)
    throw NotTrivializableError(
        "smooth_frame: winding removal failed; seam mismatch field reaches the log cut (distance " +
        std::to_string(best) + ")");
  SeamCorrection c;
  c.alpha = alpha;
  c.cut_distance = best;
  c.logs.resize(m.size());
  for (std::size_t x = 0; x < m.size(); ++x) c.logs[x] = shifted_log(q, s[x]);
  c.lq = numlin::logm_unitary(q.adjoint(), {.unitarity = 1e-8});
  return c;
}

/// Phase of det m along a line, unwrapped, starting from `base`.
inline std::vector<double> det_phase_line(const std::vector<cplx>& dets, double base) {
  auto ph = numlin::unwrap_phase(dets, 1e-6);
  const double shift = base - ph[0];
  const double k = std::round(shift / kTwoPi);
  for (auto& p : ph) p += k * kTwoPi;
  return ph;
}

inline int winding(const std::vector<cplx>& loop) {
  std::vector<cplx> closed = loop;
  closed.push_back(loop.front());
  auto ph = numlin::unwrap_phase(closed, 1e-6);
  return static_cast<int>(std::lround((ph.back() - ph.front()) / kTwoPi));
}

}  // namespace detail

/// Smooth periodic orthonormal frame of the valence bundle, built by
/// parallel transport along successive axes with the seam mismatches removed
/// by smooth unitary interpolation.
inline FrameField smooth_frame(const ProjectorField& pf) {
  const BZGrid& g = pf.grid;
  const int d = g.dim();
  if (d == 2) {
    if (chern_number(pf).value != 0)
      throw NotTrivializableError("smooth_frame: nonzero Chern number, bundle not trivializable");
  } else {
    for (int axis = 0; axis < 3; ++axis)
      for (int idx : {0, g.size(axis) / 2}) {
        const int c = chern_number(pf, Slice{axis, idx}).value;
        if (c != 0)
          throw NotTrivializableError("smooth_frame: nonzero Chern number " + std::to_string(c) +
                                      " on a slice, bundle not trivializable");
      }
  }
  FrameField ff;
  ff.grid = g;
  ff.rank = pf.rank;
  ff.frames.assign(g.count(), Mat());
  const int n = pf.rank;

  // axis 0 through the origin
  const int n0 = g.size(0);
  std::vector<int> path0(n0);
  for (int i = 0; i < n0; ++i) path0[i] = g.shifted(0, 0, i);
  Mat closed;
  auto line = detail::transport(pf, path0, pf.eigenvectors[0], path0[0], &closed);
  {
    const Mat m = line[0].adjoint() * closed;
    const Mat lm = numlin::logm_unitary(numlin::polar_unitary(m), {.unitarity = 1e-8});
    for (int i = 0; i < n0; ++i)
      ff.frames[path0[i]] = line[i] * numlin::expm_antihermitian(-(double(i) / n0) * lm);
    ff.seam_mismatch = std::max(ff.seam_mismatch,
                                (closed * numlin::expm_antihermitian(-lm) - line[0]).norm());
  }

  // extends frames given on the set `bases` along `axis`
  auto extend = [&](const std::vector<int>& bases, int axis, int base_dim1) {
    const int na = g.size(axis);
    std::vector<std::vector<Mat>> lines(bases.size());
    std::vector<Mat> mismatch(bases.size());
    std::vector<cplx> dets(bases.size());
    for (std::size_t b = 0; b < bases.size(); ++b) {
      std::vector<int> path(na);
      for (int i = 0; i < na; ++i) path[i] = g.shifted(bases[b], axis, i);
      Mat cl;
      lines[b] = detail::transport(pf, path, ff.frames[bases[b]], bases[b], &cl);
      mismatch[b] = numlin::polar_unitary(ff.frames[bases[b]].adjoint() * cl);
      dets[b] = mismatch[b].determinant();
    }
    // det phase on the base set; base_dim1 > 0 means the base set is a 2d
    // array of size base_dim1 x (bases/base_dim1), first index fastest
    std::vector<double> alpha(bases.size());
    const int rows = base_dim1;
    const int cols = static_cast<int>(bases.size()) / rows;
    for (int c = 0; c < cols; ++c) {
      std::vector<cplx> row(dets.begin() + c * rows, dets.begin() + (c + 1) * rows);
      if (detail::winding(row) != 0)
        throw NotTrivializableError(
            "smooth_frame: seam mismatch determinant winds, bundle not trivializable");
    }
    std::vector<double> firstcol;
    {
      std::vector<cplx> col(cols);
      for (int c = 0; c < cols; ++c) col[c] = dets[c * rows];
      if (cols > 1 && detail::winding(col) != 0)
        throw NotTrivializableError(
            "smooth_frame: seam mismatch determinant winds, bundle not trivializable");
      firstcol = detail::det_phase_line(col, std::arg(col[0]));
    }
    for (int c = 0; c < cols; ++c) {
      std::vector<cplx> row(dets.begin() + c * rows, dets.begin() + (c + 1) * rows);
      auto ph = detail::det_phase_line(row, firstcol[c]);
      for (int r = 0; r < rows; ++r) alpha[c * rows + r] = ph[r];
    }
    auto corr = detail::seam_correction(mismatch, alpha);
    for (std::size_t b = 0; b < bases.size(); ++b) {
      for (int i = 0; i < na; ++i)
        ff.frames[g.shifted(bases[b], axis, i)] = lines[b][i] * corr.at(b, double(i) / na);
      const Mat end = ff.frames[bases[b]] * mismatch[b] * corr.at(b, 1.0);
      ff.seam_mismatch = std::max(ff.seam_mismatch, (end - ff.frames[bases[b]]).norm());
    }
  };

  std::vector<int> bases1(n0);
  for (int i = 0; i < n0; ++i) bases1[i] = path0[i];
  extend(bases1, 1, n0);
  if (d == 3) {
    std::vector<int> bases2;
    for (int j = 0; j < g.size(1); ++j)
      for (int i = 0; i < n0; ++i) bases2.push_back(g.flat({i, j, 0}));
    extend(bases2, 2, n0);
  }
  (void)n;
  ff.smoothness = detail::link_smoothness(g, ff.frames);
  for (int i = 0; i < g.count(); ++i)
    ff.span_residual =
        std::max(ff.span_residual, (pf.projectors[i] * ff.frames[i] - ff.frames[i]).norm());
  return ff;
}

struct ConnectionField {
  BZGrid grid;
  // a[axis][point]: anti-Hermitian rank x rank matrix, per unit momentum
  std::vector<std::vector<Mat>> a;
  double antihermitian_deviation = 0.0;  // before projection, times the grid step
};

/// Berry connection A_mu = e^dag d_mu e by centered differences.
inline ConnectionField berry_connection(const FrameField& ff, double max_smoothness = 0.75) {
  if (ff.smoothness > max_smoothness)
    throw NumericalError("berry_connection: frame not smooth on this grid (link metric " +
                         std::to_string(ff.smoothness) + ")");
  const BZGrid& g = ff.grid;
  ConnectionField cf;
  cf.grid = g;
  cf.a.assign(g.dim(), std::vector<Mat>(g.count()));
  for (int axis = 0; axis < g.dim(); ++axis) {
    const double h = g.spacing(axis);
    for (int i = 0; i < g.count(); ++i) {
      const Mat de = (ff.frames[g.shifted(i, axis, 1)] - ff.frames[g.shifted(i, axis, -1)]) / (2 * h);
      const Mat raw = ff.frames[i].adjoint() * de;
      const Mat ah = 0.5 * (raw - raw.adjoint());
      cf.antihermitian_deviation = std::max(cf.antihermitian_deviation, (raw - ah).norm() * h);
      cf.a[axis][i] = ah;
    }
  }
  return cf;
}

}  // namespace bundle
}  // namespace z2wz
