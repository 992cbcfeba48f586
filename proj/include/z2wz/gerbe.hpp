#pragma once

// The basic gerbe over SU(n): alcove charts, the local 2-forms B_i, the line
// bundles L_ij with their characters, and the surface holonomy of a map
// T^2 -> SU(n) sampled on a periodic grid.

#include <z2wz/numlin.hpp>

#include <json.hpp>

#include <array>
#include <functional>
#include <map>
#include <vector>

namespace z2wz {
namespace gerbe {

/// lambda_i = diag((n-i)/n x i, -i/n x (n-i)); lambda_0 = 0.
inline RVec weight_diagonal(int n, int i) {
  if (n < 2 || i < 0 || i >= n) throw NumericalError("weight: index out of range");
  RVec d(n);
  for (int a = 0; a < n; ++a) d(a) = a < i ? double(n - i) / n : -double(i) / n;
  return d;
}

inline Mat weight(int n, int i) { return weight_diagonal(n, i).cast<cplx>().asDiagonal(); }

inline std::vector<Mat> weights(int n) {
  std::vector<Mat> out;
  for (int i = 0; i < n; ++i) out.push_back(weight(n, i));
  return out;
}

/// lambda_ij = lambda_j - lambda_i.
inline Mat weight_difference(int n, int i, int j) { return weight(n, j) - weight(n, i); }

/// Columns [lo, hi) on which lambda_ij differs from a multiple of I, and
/// the orientation sign (+1 for i < j).
struct Block {
  int lo = 0, hi = 0, sign = 0;
};
inline Block block_of(int i, int j) {
  if (i == j) return {};
  return {std::min(i, j), std::max(i, j), i < j ? 1 : -1};
}

// --- alcove charts ----------------------------------------------------------------

struct Chart {
  Mat g;
  Mat gamma;  // special unitary, g = gamma exp(2 pi i diag(psi)) gamma^-1
  RVec psi;  // descending, sum 0, psi_1 - psi_n <= 1
  RVec tau;  // tau(0) = 1 - (psi_1 - psi_n), tau(a) = psi_a - psi_{a+1}

  int n() const { return static_cast<int>(psi.size()); }
  double margin(int i) const { return tau(i); }
  bool contains(int i, double tol = 0.0) const { return tau(i) > tol; }
  double reconstruction_residual() const {
    Vec e(n());
    for (int a = 0; a < n(); ++a) e(a) = std::exp(kTwoPi * kI * psi(a));
    return (gamma * e.asDiagonal() * gamma.adjoint() - g).norm();
  }
};

inline Chart alcove(const Mat& g, double det_tol = 1e-8) {
  const int n = static_cast<int>(g.rows());
  if (std::abs(g.determinant() - 1.0) > det_tol)
    throw NumericalError("alcove: matrix is not special unitary");
  auto ed = numlin::unitary_eig(g, {.unitarity = 1e-8});
  // eigenphases / 2pi, descending
  std::vector<int> order(n);
  for (int a = 0; a < n; ++a) order[a] = n - 1 - a;
  std::vector<double> p(n);
  for (int a = 0; a < n; ++a) p[a] = ed.eigenphases(order[a]) / kTwoPi;
  double total = 0.0;
  for (double x : p) total += x;
  const int s = static_cast<int>(std::lround(total));
  Chart c;
  c.g = g;
  c.psi.resize(n);
  c.gamma.resize(n, n);
  for (int a = 0; a < n; ++a) {
    const int src = (a + s) % n;  // p_{s+1}, ..., p_n, p_1 - 1, ..., p_s - 1
    c.psi(a) = p[src] - (src < s ? 1.0 : 0.0);
    c.gamma.col(a) = ed.eigenvectors.col(order[src]);
  }
  const cplx d = c.gamma.determinant();
  c.gamma *= std::pow(d / std::abs(d), -1.0 / n);
  c.tau.resize(n);
  c.tau(0) = 1.0 - (c.psi(0) - c.psi(n - 1));
  for (int a = 1; a < n; ++a) c.tau(a) = c.psi(a - 1) - c.psi(a);
  return c;
}

/// Logarithm adapted to O_i: X_i = gamma 2 pi i diag(psi - lambda_i) gamma^-1,
/// with exp(X_i) = exp(2 pi i i/n) g. Independent of the chart ambiguity.
inline Mat log_chart(const Chart& c, int i) {
  const RVec d = c.psi - weight_diagonal(c.n(), i);
  Vec e(c.n());
  for (int a = 0; a < c.n(); ++a) e(a) = kTwoPi * kI * d(a);
  return c.gamma * e.asDiagonal() * c.gamma.adjoint();
}

/// Eigenvalue clusters of psi (maximal runs with gaps below tol).
inline std::vector<std::pair<int, int>> clusters(const Chart& c, double tol = 1e-9) {
  std::vector<std::pair<int, int>> out;
  int start = 0;
  for (int a = 1; a <= c.n(); ++a)
    if (a == c.n() || c.tau(a) > tol) {
      out.emplace_back(start, a);
      start = a;
    }
  return out;
}

/// Charts along a sampled path with gamma aligned step to step: within each
/// eigenvalue cluster the columns are rotated by the orthogonal Procrustes
/// solution, then an overall scalar restores det gamma = 1.
inline std::vector<Chart> chart_path(const std::vector<Mat>& samples, double cluster_tol = 1e-9) {
  std::vector<Chart> out;
  for (std::size_t t = 0; t < samples.size(); ++t) {
    Chart c = alcove(samples[t]);
    if (t > 0) {
      const Chart& prev = out.back();
      auto cl = clusters(c, cluster_tol);
      auto clp = clusters(prev, cluster_tol);
      if (cl != clp)
        throw NumericalError("chart_path: eigenphase clusters change between samples; refine");
      for (auto [lo, hi] : cl) {
        const int w = hi - lo;
        Mat cur = c.gamma.middleCols(lo, w);
        Mat r = numlin::polar_unitary(cur.adjoint() * prev.gamma.middleCols(lo, w));
        c.gamma.middleCols(lo, w) = cur * r;
      }
      const cplx d = c.gamma.determinant();
      c.gamma *= std::pow(d / std::abs(d), -1.0 / c.n());
    }
    out.push_back(std::move(c));
  }
  return out;
}

// --- characters ----------------------------------------------------------------------

inline double stabilizer_residual(const Mat& g0, int i, int j) {
  const Mat l = weight_difference(static_cast<int>(g0.rows()), i, j);
  return (g0 * l - l * g0).norm();
}

/// chi_ij on the stabilizer G_ij of lambda_ij: the determinant of the
/// [min, max) diagonal block, to the power +1 for i < j and -1 for i > j.
inline cplx character(const Mat& g0, int i, int j, double tol = 1e-8) {
  if (stabilizer_residual(g0, i, j) > tol)
    throw NumericalError("character: element does not stabilize lambda_ij");
  const Block b = block_of(i, j);
  if (b.sign == 0) return 1.0;
  const cplx d = g0.block(b.lo, b.lo, b.hi - b.lo, b.hi - b.lo).determinant();
  return b.sign > 0 ? d : 1.0 / d;
}

/// chi along a sampled path in G_ij starting at I: exp of the summed
/// tr(lambda_ij log(g_t^-1 g_{t+1})).
inline cplx character_along_path(const std::vector<Mat>& path, int i, int j, double tol = 1e-8) {
  const int n = static_cast<int>(path.front().rows());
  if ((path.front() - Mat::Identity(n, n)).norm() > tol)
    throw NumericalError("character_along_path: path must start at the identity");
  const Mat l = weight_difference(n, i, j);
  cplx acc = 0.0;
  for (std::size_t t = 0; t + 1 < path.size(); ++t) {
    if (stabilizer_residual(path[t + 1], i, j) > tol)
      throw NumericalError("character_along_path: path leaves the stabilizer");
    acc += (l * numlin::logm_unitary(path[t].adjoint() * path[t + 1], {.unitarity = 1e-8})).trace();
  }
  return std::exp(acc);
}

/// Traceless logarithm of an element of G_ij computed blockwise, so that
/// exp(tX) stays in G_ij.
inline Mat stabilizer_log(const Mat& g0, int i, int j) {
  const int n = static_cast<int>(g0.rows());
  const Block b = block_of(i, j);
  std::vector<std::vector<int>> parts(1);
  if (b.sign == 0) {
    for (int a = 0; a < n; ++a) parts[0].push_back(a);
  } else {
    parts.emplace_back();
    for (int a = 0; a < n; ++a) parts[(a >= b.lo && a < b.hi) ? 0 : 1].push_back(a);
  }
  Mat x = Mat::Zero(n, n);
  std::vector<Mat> logs;
  for (const auto& idx : parts) {
    const int w = static_cast<int>(idx.size());
    Mat sub(w, w);
    for (int p = 0; p < w; ++p)
      for (int q = 0; q < w; ++q) sub(p, q) = g0(idx[p], idx[q]);
    logs.push_back(numlin::logm_unitary(sub, {.unitarity = 1e-8}));
  }
  // remove the 2 pi i k trace along one eigenvector of the first part
  cplx tr = 0.0;
  for (const auto& l : logs) tr += l.trace();
  const double k = std::round(tr.imag() / kTwoPi);
  if (k != 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(-kI * logs[0]));
    const Vec v = es.eigenvectors().col(0);
    logs[0] -= kTwoPi * kI * k * v * v.adjoint();
  }
  for (std::size_t c = 0; c < parts.size(); ++c) {
    const auto& idx = parts[c];
    for (std::size_t p = 0; p < idx.size(); ++p)
      for (std::size_t q = 0; q < idx.size(); ++q) x(idx[p], idx[q]) = logs[c](p, q);
  }
  return x;
}

inline std::vector<Mat> stabilizer_path(const Mat& x, int steps) {
  std::vector<Mat> out;
  for (int t = 0; t <= steps; ++t) out.push_back(numlin::expm_antihermitian((double(t) / steps) * x));
  return out;
}

// --- 2-forms ----------------------------------------------------------------------------

/// G(y) = 2 (y - sin y) / y^2.
inline double kernel(double y) {
  if (std::abs(y) < 1e-3) {
    const double y2 = y * y;
    return y / 3.0 - y * y2 / 60.0 + y * y2 * y2 / 2520.0;
  }
  return 2.0 * (y - std::sin(y)) / (y * y);
}

/// B_i(d1, d2) at the point with logarithm X = X_i(g) and tangent
/// derivatives dx1, dx2 of X. B_i equals (1/4pi) int_0^1 tr(X Theta_s^2) ds
/// for Theta_s = exp(-sX) d exp(sX); in the eigenbasis of X it reduces to a
/// kernel acting on off-diagonal elements, which is smooth at degeneracies.
inline double b_density(const Mat& x, const Mat& dx1, const Mat& dx2) {
  Mat h = -kI * x;
  h = 0.5 * (h + h.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  const Mat& v = es.eigenvectors();
  const RVec& mu = es.eigenvalues();
  const Mat u = v.adjoint() * dx1 * v;
  const Mat w = v.adjoint() * dx2 * v;
  double acc = 0.0;
  const int n = static_cast<int>(x.rows());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      acc += kernel(mu(a) - mu(b)) * (w(a, b) * std::conj(u(a, b))).imag();
  return -acc / kTwoPi;
}

/// Integral of B over the triangle with logarithms x0, x1, x2 at its vertices
/// (counterclockwise), X interpolated linearly: midpoint rule.
inline double b_triangle(const Mat& x0, const Mat& x1, const Mat& x2) {
  const Mat xc = (x0 + x1 + x2) / 3.0;
  return 0.5 * b_density(xc, x1 - x0, x2 - x0);
}

// --- line bundles ---------------------------------------------------------------------

/// Transport in L_ij along the chart family: [gamma_0, 1] -> [gamma_end, z],
/// z = exp(-int tr(lambda_ij gamma^-1 d gamma)). Intermediate charts need not
/// be aligned; their block gauges telescope.
inline cplx edge_transport(const std::vector<Chart>& family, int i, int j, double min_overlap = 0.2) {
  const Block b = block_of(i, j);
  if (b.sign == 0) return 1.0;
  const int w = b.hi - b.lo;
  cplx z = 1.0;
  for (std::size_t t = 0; t + 1 < family.size(); ++t) {
    const cplx d = (family[t].gamma.middleCols(b.lo, w).adjoint() *
                    family[t + 1].gamma.middleCols(b.lo, w)).determinant();
    if (std::abs(d) < min_overlap)
      throw NumericalError("edge_transport: block overlap too small, edge under-resolved");
    const cplx ph = d / std::abs(d);
    z *= b.sign > 0 ? std::conj(ph) : ph;
  }
  if (std::abs(std::abs(z) - 1.0) > 1e-9) throw NumericalError("edge_transport: non-unit factor");
  return z;
}

// --- triangulated holonomy ---------------------------------------------------------------

/// A map T^2 -> SU(n) sampled on an N1 x N2 periodic grid (axis 0 fastest).
struct GridSurface {
  int n1 = 0, n2 = 0;
  std::vector<Mat> g;
  int index(int a, int b) const { return ((a % n1 + n1) % n1) + n1 * ((b % n2 + n2) % n2); }
};

inline GridSurface sample_surface(const std::function<Mat(double, double)>& f, int n1, int n2) {
  GridSurface s{n1, n2, {}};
  s.g.resize(std::size_t(n1) * n2);
  for (int b = 0; b < n2; ++b)
    for (int a = 0; a < n1; ++a) s.g[s.index(a, b)] = f(kTwoPi * a / n1, kTwoPi * b / n2);
  return s;
}

enum class IndexRule { MaxMargin, LargestAdmissible, SmallestAdmissible };

struct Simplex {
  std::array<int, 3> v{};  // counterclockwise
  int index = 0;
  double margin = 0.0;
};

struct Triangulation {
  GridSurface surface;
  int diagonal = 0;
  std::vector<Chart> charts;  // per vertex
  std::vector<Simplex> triangles;
  std::map<std::pair<int, int>, int> edge_index;  // key (min vertex, max vertex)
  std::map<std::pair<int, int>, double> edge_margin;
  double min_margin = 0.0;
};

namespace detail {

inline int choose_index(const std::vector<const Chart*>& cs, IndexRule rule, double tol,
                        double* margin) {
  const int n = cs.front()->n();
  std::vector<double> m(n, 1e300);
  for (const Chart* c : cs)
    for (int i = 0; i < n; ++i) m[i] = std::min(m[i], c->margin(i));
  int best = -1;
  for (int i = 0; i < n; ++i) {
    if (m[i] < tol) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    switch (rule) {
      case IndexRule::MaxMargin:
        if (m[i] > m[best]) best = i;
        break;
      case IndexRule::LargestAdmissible:
        best = i;
        break;
      case IndexRule::SmallestAdmissible:
        break;
    }
  }
  if (best < 0)
    throw NumericalError("triangulate: no chart index with margin >= " + std::to_string(tol) +
                         " on a simplex; refine the grid");
  *margin = m[best];
  return best;
}

}  // namespace detail

/// Regular triangulation of the grid: each cell split along the diagonal
/// (a,b)-(a+1,b+1) (diagonal = 0) or (a+1,b)-(a,b+1) (diagonal = 1).
inline Triangulation triangulate(const GridSurface& s, int diagonal = 0,
                                 IndexRule rule = IndexRule::MaxMargin, double margin_tol = 1e-3) {
  Triangulation t;
  t.surface = s;
  t.diagonal = diagonal;
  t.charts.reserve(s.g.size());
  for (const auto& g : s.g) t.charts.push_back(alcove(g));
  t.min_margin = 1e300;
  for (int b = 0; b < s.n2; ++b)
    for (int a = 0; a < s.n1; ++a) {
      const int p00 = s.index(a, b), p10 = s.index(a + 1, b);
      const int p11 = s.index(a + 1, b + 1), p01 = s.index(a, b + 1);
      std::array<std::array<int, 3>, 2> tris =
          diagonal == 0 ? std::array<std::array<int, 3>, 2>{{{p00, p10, p11}, {p00, p11, p01}}}
                        : std::array<std::array<int, 3>, 2>{{{p00, p10, p01}, {p10, p11, p01}}};
      for (const auto& v : tris) {
        Simplex sx;
        sx.v = v;
        sx.index = detail::choose_index({&t.charts[v[0]], &t.charts[v[1]], &t.charts[v[2]]}, rule,
                                        margin_tol, &sx.margin);
        t.min_margin = std::min(t.min_margin, sx.margin);
        t.triangles.push_back(sx);
        for (int e = 0; e < 3; ++e) {
          const int x = v[e], y = v[(e + 1) % 3];
          const auto key = std::minmax(x, y);
          if (t.edge_index.count(key)) continue;
          double m = 0.0;
          t.edge_index[key] =
              detail::choose_index({&t.charts[x], &t.charts[y]}, rule, margin_tol, &m);
          t.edge_margin[key] = m;
        }
      }
    }
  return t;
}

struct HolonomyResult {
  cplx amplitude = 1.0;
  double phase = 0.0;  // arg amplitude in (-pi, pi]
  double b_sum = 0.0;  // sum of triangle integrals of B
  double error_estimate = 0.0;
  std::vector<cplx> trace;  // amplitude per refinement level
  std::vector<int> levels;  // grid size per level
  double extrapolated_phase = 0.0;
};

/// exp(i sum_c int_c B_{i_c}) times the product over triangle sides of the
/// transport in L_{i_c i_b} along the side oriented as the boundary of c.
/// All line elements at a vertex are anchored at that vertex's chart, so the
/// contraction at vertices is a plain product of numbers.
inline HolonomyResult holonomy(const Triangulation& t) {
  HolonomyResult r;
  cplx edges = 1.0;
  for (const auto& sx : t.triangles) {
    const Mat x0 = log_chart(t.charts[sx.v[0]], sx.index);
    const Mat x1 = log_chart(t.charts[sx.v[1]], sx.index);
    const Mat x2 = log_chart(t.charts[sx.v[2]], sx.index);
    r.b_sum += b_triangle(x0, x1, x2);
    for (int e = 0; e < 3; ++e) {
      const int from = sx.v[e], to = sx.v[(e + 1) % 3];
      const int ib = t.edge_index.at(std::minmax(from, to));
      edges *= edge_transport({t.charts[from], t.charts[to]}, sx.index, ib);
    }
  }
  r.amplitude = std::exp(kI * r.b_sum) * edges;
  r.amplitude /= std::abs(r.amplitude);
  r.phase = std::arg(r.amplitude);
  r.extrapolated_phase = r.phase;
  r.trace = {r.amplitude};
  r.levels = {t.surface.n1};
  return r;
}

/// Holonomy at successive grid levels with one Richardson step on the phase
/// (second-order scheme): phi* = phi_2N + (phi_2N - phi_N)/3. The error
/// estimate is the difference between the last two levels.
inline HolonomyResult refined_holonomy(const std::function<GridSurface(int)>& surface_at,
                                       const std::vector<int>& sizes, int diagonal = 0,
                                       IndexRule rule = IndexRule::MaxMargin, double margin_tol = 1e-3) {
  HolonomyResult out;
  std::vector<double> phases;
  for (int n : sizes) {
    auto h = holonomy(triangulate(surface_at(n), diagonal, rule, margin_tol));
    out.trace.push_back(h.amplitude);
    out.levels.push_back(n);
    double ph = h.phase;
    if (!phases.empty()) ph = phases.back() + numlin::wrap_angle(ph - phases.back());
    phases.push_back(ph);
    out.b_sum = h.b_sum;
  }
  out.amplitude = out.trace.back();
  out.phase = std::arg(out.amplitude);
  if (phases.size() >= 2) {
    const double a = phases[phases.size() - 2], b = phases.back();
    out.error_estimate = std::abs(b - a);
    out.extrapolated_phase = numlin::wrap_angle(b + (b - a) / 3.0);
  } else {
    out.extrapolated_phase = out.phase;
  }
  return out;
}

/// Per-simplex diagnostic dump.
inline nlohmann::json dump(const Triangulation& t) {
  nlohmann::json j;
  j["grid"] = {t.surface.n1, t.surface.n2};
  j["diagonal"] = t.diagonal;
  j["min_margin"] = t.min_margin;
  j["triangles"] = nlohmann::json::array();
  for (const auto& sx : t.triangles) {
    const double b = b_triangle(log_chart(t.charts[sx.v[0]], sx.index),
                                log_chart(t.charts[sx.v[1]], sx.index),
                                log_chart(t.charts[sx.v[2]], sx.index));
    nlohmann::json e = nlohmann::json::array();
    for (int k = 0; k < 3; ++k) {
      const int from = sx.v[k], to = sx.v[(k + 1) % 3];
      const int ib = t.edge_index.at(std::minmax(from, to));
      const cplx z = edge_transport({t.charts[from], t.charts[to]}, sx.index, ib);
      e.push_back({{"from", from}, {"to", to}, {"index", ib}, {"factor", {z.real(), z.imag()}}});
    }
    j["triangles"].push_back(
        {{"vertices", sx.v}, {"index", sx.index}, {"margin", sx.margin}, {"b_integral", b}, {"edges", e}});
  }
  return j;
}

// --- antisymmetric special unitary matrices --------------------------------------------------

struct PfaffianCharacterReport {
  int n = 0;
  int index = 0;  // i
  int reflected = 0;  // i^r = i + m mod n
  double margin = 0.0;
  double stabilizer_residual = 0.0;
  cplx pfaffian;
  cplx rhs;  // i^{m^2} (-1)^i chi_{i i^r}(gamma_0)
  double residual = 0.0;
};

/// Checks pf w = i^{m^2} (-1)^i chi_{i i^r}(gamma_0) with
/// gamma_0 = gamma^-1 (gamma^-1)^T omega^-1 for an antisymmetric w in SU(2m).
inline PfaffianCharacterReport pfaffian_character_check(const Mat& w, double tol = 1e-8, double margin_tol = 1e-6) {
  const int n = static_cast<int>(w.rows());
  if (n % 2 != 0) throw NumericalError("pfaffian_character_check: odd dimension");
  if (numlin::antisymmetry_residual(w) > tol) throw NumericalError("pfaffian_character_check: not antisymmetric");
  const int m = n / 2;
  Chart c = alcove(w);
  PfaffianCharacterReport r;
  r.n = n;
  r.margin = -1.0;
  for (int i = 0; i < n; ++i) {
    const int ir = (i + m) % n;
    const double mg = std::min(c.margin(i), c.margin(ir));
    if (mg > r.margin) {
      r.margin = mg;
      r.index = i;
      r.reflected = ir;
    }
  }
  if (r.margin < margin_tol)
    throw NumericalError("pfaffian_character_check: matrix lies on the boundary of every O_{i i^r}");
  const Mat gi = c.gamma.adjoint();
  const Mat g0 = gi * gi.transpose() * numlin::omega(n).adjoint();
  r.stabilizer_residual = stabilizer_residual(g0, r.index, r.reflected);
  r.pfaffian = numlin::pfaffian(w, {.antisymmetry = tol});
  cplx im2 = std::pow(kI, (m * m) % 4);
  r.rhs = im2 * (r.index % 2 == 0 ? 1.0 : -1.0) * character(g0, r.index, r.reflected, 1e-6);
  r.residual = std::abs(r.pfaffian - r.rhs);
  return r;
}

}  // namespace gerbe
}  // namespace z2wz
