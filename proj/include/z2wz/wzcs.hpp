#pragma once

// Direct differential-form computations: pullbacks of the 3-form
// H = (1/12 pi) tr(g^-1 dg)^3, the Wess-Zumino extension oracle, the
// Chern-Simons action of a Berry connection on T^3, its half-torus
// counterpart in terms of the sewing matrix, and the end-to-end checks
// comparing both actions with the Pfaffian invariants.

#include <z2wz/gerbe.hpp>
#include <z2wz/sewing.hpp>

#include <array>
#include <functional>

namespace z2wz {
namespace wzcs {

using bundle::BZGrid;
using Point3 = std::array<double, 3>;
using Field3 = std::function<Mat(const Point3&)>;

/// H evaluated on the tangent vectors whose derivatives are d1, d2, d3:
/// (1/4 pi) tr(M1 [M2, M3]) with M = g^-1 dg.
inline double h_density(const Mat& g, const Mat& d1, const Mat& d2, const Mat& d3) {
  const Mat gi = g.inverse();
  const Mat m1 = gi * d1, m2 = gi * d2, m3 = gi * d3;
  return (m1 * (m2 * m3 - m3 * m2)).trace().real() / (4.0 * kPi);
}

namespace detail {

inline constexpr double kStep = 1e-5;

inline std::array<Mat, 3> gradient(const Field3& f, const Point3& x) {
  std::array<Mat, 3> d;
  for (int mu = 0; mu < 3; ++mu) {
    Point3 p = x, m = x;
    p[mu] += kStep;
    m[mu] -= kStep;
    d[mu] = (f(p) - f(m)) / (2 * kStep);
  }
  return d;
}

inline double density_at(const Field3& f, const Point3& x) {
  auto d = gradient(f, x);
  return h_density(f(x), d[0], d[1], d[2]);
}

}  // namespace detail

/// Integral of the pullback of H over the cube [x0, x0 + h]^3, midpoint rule.
inline double h_pullback(const Field3& f, const Point3& x0, double h) {
  const Point3 c{x0[0] + h / 2, x0[1] + h / 2, x0[2] + h / 2};
  return detail::density_at(f, c) * h * h * h;
}

/// Samples of a map on a periodic 3d grid (axis 0 fastest).
struct GridField3 {
  BZGrid grid;
  std::vector<Mat> g;
};

inline GridField3 sample_grid(const BZGrid& grid, const std::function<Mat(const models::KPoint&)>& f) {
  if (grid.dim() != 3) throw NumericalError("sample_grid: three-dimensional grid required");
  GridField3 out{grid, {}};
  out.g.reserve(grid.count());
  for (int i = 0; i < grid.count(); ++i) out.g.push_back(f(grid.point(i)));
  return out;
}

/// Pointwise pullback density of H with centered grid differences.
inline std::vector<double> h_densities(const BZGrid& grid, const std::vector<Mat>& g) {
  if (grid.dim() != 3) throw NumericalError("h_densities: three-dimensional grid required");
  std::vector<double> out(grid.count());
  for (int i = 0; i < grid.count(); ++i) {
    std::array<Mat, 3> d;
    for (int mu = 0; mu < 3; ++mu)
      d[mu] = (g[grid.shifted(i, mu, 1)] - g[grid.shifted(i, mu, -1)]) / (2 * grid.spacing(mu));
    out[i] = h_density(g[i], d[0], d[1], d[2]);
  }
  return out;
}

inline double cell_volume(const BZGrid& grid) {
  return grid.spacing(0) * grid.spacing(1) * grid.spacing(2);
}

/// Integral of g*H over T^3 (periodic trapezoid rule).
inline double h_integral(const BZGrid& grid, const std::vector<Mat>& g) {
  double s = 0.0;
  for (double x : h_densities(grid, g)) s += x;
  return s * cell_volume(grid);
}

/// Integral of g*H over k1 in [0, pi]; the planes k1 = 0 and k1 = pi get
/// half weight.
inline double h_integral_half(const BZGrid& grid, const std::vector<Mat>& g) {
  const auto dens = h_densities(grid, g);
  const int half = grid.size(0) / 2;
  double s = 0.0;
  for (int i = 0; i < grid.count(); ++i) {
    const int a = grid.multi(i)[0];
    if (a > half) continue;
    s += (a == 0 || a == half) ? 0.5 * dens[i] : dens[i];
  }
  return s * cell_volume(grid);
}

// --- Wess-Zumino extension oracle -------------------------------------------------

/// Extension W(t, k1, k2) with W(0, .) constant and W(1, .) the target field.
using Extension = std::function<Mat(double, double, double)>;

inline Extension exponential_extension(std::function<double(double, double)> f, Mat x) {
  return [f = std::move(f), x = std::move(x)](double t, double k1, double k2) {
    return numlin::expm_antihermitian(t * f(k1, k2) * x);
  };
}

/// W = prod_j exp(t f_j X_j). Two factors give an exact 2-form on the
/// boundary and a vanishing action; three noncommuting factors do not.
inline Extension product_extension(std::vector<std::pair<std::function<double(double, double)>, Mat>> factors) {
  return [factors = std::move(factors)](double t, double k1, double k2) {
    const Eigen::Index n = factors.front().second.rows();
    Mat w = Mat::Identity(n, n);
    for (const auto& [f, x] : factors) w = w * numlin::expm_antihermitian(t * f(k1, k2) * x);
    return w;
  };
}

/// W = V_t(k) w0 V_t(-k)^T with V_t = exp(t f X). For antisymmetric w0 every
/// slice satisfies W(-k) = -W(k)^T.
inline Extension symmetric_extension(std::function<double(double, double)> f, Mat x, Mat w0) {
  return [=](double t, double k1, double k2) {
    const Mat v = numlin::expm_antihermitian(t * f(k1, k2) * x);
    const Mat vr = numlin::expm_antihermitian(t * f(-k1, -k2) * x);
    return Mat(v * w0 * vr.transpose());
  };
}

struct ActionResult {
  double value = 0.0;  // mod 2 pi, in (-pi, pi]
  double raw = 0.0;    // extrapolated integral before reduction
  double error_estimate = 0.0;
  std::vector<double> trace;  // raw integral per level
  std::vector<int> levels;
  cplx amplitude() const { return std::exp(kI * value); }
};

/// S_WZ of the boundary field W(1, .): integral of W*H over [0,1] x T^2 with
/// orientation (t, k1, k2). Midpoint rule in t with nt nodes, periodic rule
/// with nk nodes per momentum axis; one Richardson step on doubling both.
inline ActionResult wz_extension_oracle(const Extension& w, int nt = 16, int nk = 32) {
  ActionResult r;
  const Field3 f = [&w](const Point3& x) { return w(x[0], x[1], x[2]); };
  for (int level = 0; level < 2; ++level) {
    const int mt = nt << level, mk = nk << level;
    const double ht = 1.0 / mt, hk = kTwoPi / mk;
    double s = 0.0;
    for (int a = 0; a < mt; ++a)
      for (int b = 0; b < mk; ++b)
        for (int c = 0; c < mk; ++c) s += detail::density_at(f, {(a + 0.5) * ht, b * hk, c * hk});
    r.trace.push_back(s * ht * hk * hk);
    r.levels.push_back(mk);
  }
  r.raw = r.trace[1] + (r.trace[1] - r.trace[0]) / 3.0;
  r.error_estimate = std::abs(r.trace[1] - r.trace[0]);
  r.value = numlin::wrap_angle(r.raw);
  return r;
}

// --- Polyakov-Wiegmann ------------------------------------------------------------

struct PolyakovWiegmann {
  double product = 0.0;   // int (W1 W2)*H
  double first = 0.0;     // int W1*H
  double second = 0.0;    // int W2*H
  double boundary = 0.0;  // (1/4 pi) int over the cell boundary of tr(W1^-1 dW1 ^ W2 dW2^-1)
  double residual = 0.0;  // product - first - second - boundary
};

/// Checks (W1 W2)*H = W1*H + W2*H + (1/4 pi) d tr((W1^-1 dW1) ^ (W2 dW2^-1))
/// integrated over the cube [x0, x0 + h]^3 (midpoint rules in the cell and on
/// each face).
inline PolyakovWiegmann polyakov_wiegmann_check(const Field3& w1, const Field3& w2, const Point3& x0,
                                                double h) {
  PolyakovWiegmann r;
  const Field3 prod = [&](const Point3& x) { return Mat(w1(x) * w2(x)); };
  r.product = h_pullback(prod, x0, h);
  r.first = h_pullback(w1, x0, h);
  r.second = h_pullback(w2, x0, h);
  for (int mu = 0; mu < 3; ++mu) {
    const int nu = (mu + 1) % 3, rho = (mu + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      Point3 c{x0[0] + h / 2, x0[1] + h / 2, x0[2] + h / 2};
      c[mu] = x0[mu] + side * h;
      const Mat g1 = w1(c), g2 = w2(c);
      const auto d1 = detail::gradient(w1, c), d2 = detail::gradient(w2, c);
      const Mat g1i = g1.inverse(), g2i = g2.inverse();
      // alpha = W1^-1 dW1, beta = W2 dW2^-1 = -dW2 W2^-1
      const Mat au = g1i * d1[nu], av = g1i * d1[rho];
      const Mat bu = -d2[nu] * g2i, bv = -d2[rho] * g2i;
      const double form = (au * bv - av * bu).trace().real() / (4.0 * kPi);
      r.boundary += (side == 1 ? 1.0 : -1.0) * form * h * h;
    }
  }
  r.residual = r.product - r.first - r.second - r.boundary;
  return r;
}

// --- pipelines --------------------------------------------------------------------

/// Projectors, smooth frame, sewing field, determinant branch and SU(n)
/// reduction of one model on one grid.
struct BandData {
  bundle::ProjectorField pf;
  bundle::FrameField ff;
  sewing::SewingField sf;
  sewing::DetBranch branch;
  sewing::ReducedField rf;
};

inline BandData band_data(const models::BlochModel& model, int n) {
  BandData d;
  d.pf = bundle::valence_projectors(model, BZGrid::uniform(model.dim(), n));
  d.ff = bundle::smooth_frame(d.pf);
  d.sf = sewing::sewing_matrix(d.ff, model.theta().u_theta);
  d.branch = sewing::det_branch(d.sf);
  d.rf = sewing::reduce_su(d.sf, d.branch);
  return d;
}

inline gerbe::GridSurface surface_of(const sewing::ReducedField& rf) {
  if (rf.grid.dim() != 2) throw NumericalError("surface_of: two-dimensional field required");
  return gerbe::GridSurface{rf.grid.size(0), rf.grid.size(1), rf.w};
}

/// exp(i S_WZ) of a reduced sewing field as the gerbe holonomy.
inline gerbe::HolonomyResult wz_amplitude(const sewing::ReducedField& rf, int diagonal = 0,
                                          gerbe::IndexRule rule = gerbe::IndexRule::MaxMargin) {
  return gerbe::holonomy(gerbe::triangulate(surface_of(rf), diagonal, rule));
}

inline double phase_distance(double a, double b) { return std::abs(numlin::wrap_angle(a - b)); }

/// Holonomy of a reduced field at each level with Richardson on the phase.
inline gerbe::HolonomyResult refined_wz(const std::vector<sewing::ReducedField>& levels, int diagonal = 0,
                                        gerbe::IndexRule rule = gerbe::IndexRule::MaxMargin) {
  std::vector<int> sizes;
  for (const auto& rf : levels) sizes.push_back(rf.grid.size(0));
  return gerbe::refined_holonomy(
      [&](int n) {
        for (const auto& rf : levels)
          if (rf.grid.size(0) == n) return surface_of(rf);
        throw NumericalError("refined_wz: missing level");
      },
      sizes, diagonal, rule);
}

struct WzCheckReport {
  int invariant = 0;        // Pfaffian formula
  int wilson_invariant = 0;  // Wannier-center flow
  int pf_product = 1;       // prod over TRIM of pf w~
  gerbe::HolonomyResult wz;
  std::vector<double> wz_errors;  // phase distance of the amplitude to (-1)^KM per level
  double wz_vs_invariant = 0.0;
  double wz_vs_pf_product = 0.0;
  sewing::Certificate certificate;
  std::vector<int> levels;

  nlohmann::json to_json() const {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& z : wz.trace) trace.push_back({z.real(), z.imag()});
    return {{"invariant", invariant},
            {"wilson_invariant", wilson_invariant},
            {"pf_product", pf_product},
            {"wz_amplitude", {wz.amplitude.real(), wz.amplitude.imag()}},
            {"wz_phase", wz.extrapolated_phase},
            {"wz_error_estimate", wz.error_estimate},
            {"wz_trace", trace},
            {"wz_errors", wz_errors},
            {"wz_vs_invariant", wz_vs_invariant},
            {"wz_vs_pf_product", wz_vs_pf_product},
            {"levels", levels},
            {"certificate", certificate.to_json()}};
  }
};

/// (-1)^KM from the Pfaffian formula, the Wilson-loop oracle, prod pf w~ and
/// the WZ amplitude of the sewing field, on each grid size.
inline WzCheckReport wz_invariant_check(const models::BlochModel& model, const std::vector<int>& sizes = {48, 96}) {
  if (model.dim() != 2) throw NumericalError("wz_invariant_check: two-dimensional model required");
  WzCheckReport r;
  std::vector<sewing::ReducedField> rfs;
  for (int n : sizes) {
    const BandData d = band_data(model, n);
    auto cert = sewing::fkm_2d(d.sf, d.branch);
    const int pf = sewing::pf_tilde_product(d.rf);
    if (!r.levels.empty() && (cert.invariant != r.invariant || pf != r.pf_product))
      throw NumericalError("wz_invariant_check: invariant changes under refinement");
    r.invariant = cert.invariant;
    r.pf_product = pf;
    r.certificate = std::move(cert);
    if (r.levels.empty()) r.wilson_invariant = bundle::wilson_loop_z2(d.pf);
    rfs.push_back(d.rf);
    r.levels.push_back(n);
  }
  r.wz = refined_wz(rfs);
  const double target = r.invariant ? kPi : 0.0;
  for (const auto& z : r.wz.trace) r.wz_errors.push_back(phase_distance(std::arg(z), target));
  r.wz_vs_invariant = phase_distance(r.wz.extrapolated_phase, target);
  r.wz_vs_pf_product = phase_distance(r.wz.extrapolated_phase, r.pf_product < 0 ? kPi : 0.0);
  return r;
}

// --- Chern-Simons -----------------------------------------------------------------

/// Pointwise CS density (1/4 pi) tr(A dA + (2/3) A^3) of a connection on
/// T^3, with dA by centered differences of the stored components.
inline std::vector<double> cs_densities(const bundle::ConnectionField& cf) {
  const BZGrid& g = cf.grid;
  if (g.dim() != 3) throw NumericalError("cs_action: three-dimensional connection required");
  std::vector<double> out(g.count());
  for (int i = 0; i < g.count(); ++i) {
    // eps^{mu nu rho} tr(A_mu d_nu A_rho)
    double ada = 0.0;
    for (int mu = 0; mu < 3; ++mu) {
      const int nu = (mu + 1) % 3, rho = (mu + 2) % 3;
      const Mat d_nu_rho =
          (cf.a[rho][g.shifted(i, nu, 1)] - cf.a[rho][g.shifted(i, nu, -1)]) / (2 * g.spacing(nu));
      const Mat d_rho_nu =
          (cf.a[nu][g.shifted(i, rho, 1)] - cf.a[nu][g.shifted(i, rho, -1)]) / (2 * g.spacing(rho));
      ada += (cf.a[mu][i] * (d_nu_rho - d_rho_nu)).trace().real();
    }
    const Mat& a0 = cf.a[0][i];
    const Mat& a1 = cf.a[1][i];
    const Mat& a2 = cf.a[2][i];
    const double cube = 2.0 * (a0 * (a1 * a2 - a2 * a1)).trace().real();
    out[i] = (ada + cube) / (4.0 * kPi);
  }
  return out;
}

/// Raw integral of the CS density over T^3.
inline double cs_integral(const bundle::ConnectionField& cf) {
  double s = 0.0;
  for (double x : cs_densities(cf)) s += x;
  return s * cell_volume(cf.grid);
}

/// -int_{T^3_+} w*H and the full-torus integral of w*H for a 3d sewing field.
struct HalfTorus {
  double half = 0.0;  // int over k1 in [0, pi] of w*H
  double full = 0.0;  // int over T^3 of w*H
  double action = 0.0;  // -half
  /// |full - 2 half| / max(|full|, 1e-12); the factor-2 identity.
  double factor_two_residual() const {
    return std::abs(full - 2.0 * half) / std::max(std::abs(full), 1e-12);
  }
};

inline HalfTorus cs_via_half_torus(const sewing::SewingField& sf) {
  HalfTorus r;
  r.half = h_integral_half(sf.grid, sf.w);
  r.full = h_integral(sf.grid, sf.w);
  r.action = -r.half;
  return r;
}

/// Amplitude mod 2 pi of a raw action value; Richardson on two levels of a
/// second-order scheme.
inline ActionResult extrapolate(const std::vector<double>& raw, const std::vector<int>& levels) {
  ActionResult r;
  r.trace = raw;
  r.levels = levels;
  r.raw = raw.back();
  if (raw.size() >= 2) {
    const double a = raw[raw.size() - 2], b = raw.back();
    r.raw = b + (b - a) / 3.0;
    r.error_estimate = std::abs(b - a);
  }
  r.value = numlin::wrap_angle(r.raw);
  return r;
}

inline ActionResult cs_action(const std::vector<bundle::ConnectionField>& levels) {
  std::vector<double> raw;
  std::vector<int> n;
  for (const auto& cf : levels) {
    raw.push_back(cs_integral(cf));
    n.push_back(cf.grid.size(0));
  }
  return extrapolate(raw, n);
}

struct CSReport {
  int strong_invariant = 0;  // Pfaffian formula over the 8 TRIM
  ActionResult cs;            // direct integration of the Berry connection
  ActionResult half_torus;    // -int_{T^3_+} w*H
  std::vector<double> factor_two_residuals;  // per level
  std::vector<double> cs_errors;  // phase distance of exp(i S_CS) to (-1)^KM per level
  double discrepancy = 0.0;  // phase distance between the two actions
  double cs_vs_invariant = 0.0;
  double half_vs_invariant = 0.0;
  std::vector<int> levels;

  nlohmann::json to_json() const {
    auto act = [](const ActionResult& a) {
      return nlohmann::json{{"value", a.value}, {"raw", a.raw}, {"error_estimate", a.error_estimate},
                            {"trace", a.trace}, {"levels", a.levels}};
    };
    return {{"strong_invariant", strong_invariant},
            {"cs", act(cs)},
            {"half_torus", act(half_torus)},
            {"factor_two_residuals", factor_two_residuals},
            {"cs_errors", cs_errors},
            {"discrepancy", discrepancy},
            {"cs_vs_invariant", cs_vs_invariant},
            {"half_vs_invariant", half_vs_invariant},
            {"levels", levels}};
  }
};

/// Frames -> Berry connection -> S_CS, and frames -> sewing field ->
/// strong Pfaffian invariant and -int_{T^3_+} w*H, at each grid size.
/// `max_smoothness` bounds the frame link metric accepted for the connection.
inline CSReport cs_invariant_check(const models::BlochModel& model, const std::vector<int>& sizes = {24, 48},
                            double max_smoothness = 1.5) {
  if (model.dim() != 3) throw NumericalError("cs_invariant_check: three-dimensional model required");
  CSReport r;
  std::vector<double> cs_raw, half_raw;
  for (int n : sizes) {
    const BandData d = band_data(model, n);
    const int km = sewing::fkm_3d_strong(d.sf, d.branch).invariant;
    if (!r.levels.empty() && km != r.strong_invariant)
      throw NumericalError("cs_invariant_check: Pfaffian invariant changes under refinement");
    r.strong_invariant = km;
    const double target = km ? kPi : 0.0;
    cs_raw.push_back(cs_integral(bundle::berry_connection(d.ff, max_smoothness)));
    const HalfTorus ht = cs_via_half_torus(d.sf);
    half_raw.push_back(ht.action);
    r.factor_two_residuals.push_back(ht.factor_two_residual());
    r.cs_errors.push_back(phase_distance(cs_raw.back(), target));
    r.levels.push_back(n);
  }
  r.cs = extrapolate(cs_raw, r.levels);
  r.half_torus = extrapolate(half_raw, r.levels);
  const double target = r.strong_invariant ? kPi : 0.0;
  r.discrepancy = phase_distance(r.cs.value, r.half_torus.value);
  r.cs_vs_invariant = phase_distance(r.cs.value, target);
  r.half_vs_invariant = phase_distance(r.half_torus.value, target);
  return r;
}

}  // namespace wzcs
}  // namespace z2wz
