#include <gtest/gtest.h>

#include <z2wz/gerbe.hpp>

#include "test_util.hpp"

namespace z2wz {
namespace {

using namespace gerbe;

Mat diag_exp(const RVec& phases) {
  Vec e(phases.size());
  for (int a = 0; a < phases.size(); ++a) e(a) = std::exp(kI * phases(a));
  return e.asDiagonal();
}

struct Family {
  Mat a, b, c, g0;
  Mat at(double x, double y, double z = 0.0) const {
    return numlin::expm_antihermitian(x * a) * numlin::expm_antihermitian(y * b) *
           numlin::expm_antihermitian(z * c) * g0;
  }
};

Family random_family(std::mt19937_64& rng, int n) {
  return {testing::random_antihermitian_traceless(rng, n), testing::random_antihermitian_traceless(rng, n),
          testing::random_antihermitian_traceless(rng, n),
          numlin::expm_antihermitian(testing::random_antihermitian_traceless(rng, n))};
}

// gamma^-1 d gamma at the origin of the family, from charts aligned to the
// chart at the origin, by central differences.
Mat chart_derivative(const Family& f, const Chart& c0, int axis, double h) {
  auto at = [&](double s) { return axis == 0 ? f.at(s, 0.0) : f.at(0.0, s); };
  auto p = chart_path({at(0.0), at(h)});
  auto q = chart_path({at(0.0), at(-h)});
  return c0.gamma.adjoint() * (p[1].gamma - q[1].gamma) / (2 * h);
}

TEST(Weights, Examples) {
  EXPECT_LE((weight_diagonal(2, 1) - (RVec(2) << 0.5, -0.5).finished()).norm(), 1e-15);
  EXPECT_LE((weight_diagonal(4, 2) - (RVec(4) << 0.5, 0.5, -0.5, -0.5).finished()).norm(), 1e-15);
  for (int n = 2; n <= 8; ++n) {
    EXPECT_LE(weight(n, 0).norm(), 0.0);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(weight_diagonal(n, i).sum(), 0.0, 1e-14);
  }
}

TEST(Weights, ReflectionIdentity) {
  // omega lambda_j omega^-1 = lambda_{j+m mod n} - lambda_m
  for (int n : {2, 4, 6, 8}) {
    const int m = n / 2;
    const Mat w = numlin::omega(n);
    for (int j = 0; j < n; ++j) {
      const Mat lhs = w * weight(n, j) * w.adjoint();
      const Mat rhs = weight(n, (j + m) % n) - weight(n, m);
      EXPECT_LE((lhs - rhs).norm(), 1e-12) << n << " " << j;
    }
  }
}

TEST(Alcove, IdentityAndMinusIdentity) {
  auto c = alcove(Mat::Identity(3, 3));
  EXPECT_NEAR(c.tau(0), 1.0, 1e-12);
  EXPECT_NEAR(c.tau(1), 0.0, 1e-12);
  EXPECT_NEAR(c.tau(2), 0.0, 1e-12);
  auto m = alcove(-Mat::Identity(2, 2));
  EXPECT_NEAR(m.tau(0), 0.0, 1e-12);
  EXPECT_NEAR(m.tau(1), 1.0, 1e-12);
  EXPECT_NEAR(m.psi(0), 0.5, 1e-12);
  EXPECT_NEAR(m.psi(1), -0.5, 1e-12);
}

TEST(Alcove, KnownPhasesRoundTrip) {
  std::mt19937_64 rng(21);
  const Mat u = testing::random_special_unitary(rng, 3);
  const RVec psi = (RVec(3) << 0.2, 0.1, -0.3).finished();
  const Mat g = u * diag_exp(kTwoPi * psi) * u.adjoint();
  auto c = alcove(g);
  EXPECT_LE((c.psi - psi).norm(), 1e-12);
  EXPECT_NEAR(c.tau(0), 0.5, 1e-12);
  EXPECT_NEAR(c.tau(1), 0.1, 1e-12);
  EXPECT_NEAR(c.tau(2), 0.4, 1e-12);
  EXPECT_LE(c.reconstruction_residual(), 1e-12);
  EXPECT_NEAR(std::abs(c.gamma.determinant() - 1.0), 0.0, 1e-12);
  // tau = sum_j tau_j lambda_j
  RVec sum = RVec::Zero(3);
  for (int j = 0; j < 3; ++j) sum += c.tau(j) * weight_diagonal(3, j);
  EXPECT_LE((sum - c.psi).norm(), 1e-12);
}

TEST(Alcove, RandomReconstructionAndRejection) {
  std::mt19937_64 rng(22);
  for (int n = 2; n <= 6; ++n)
    for (int trial = 0; trial < 20; ++trial) {
      auto c = alcove(testing::random_special_unitary(rng, n));
      EXPECT_LE(c.reconstruction_residual(), 1e-11);
      EXPECT_NEAR(c.tau.sum(), 1.0, 1e-12);
      EXPECT_GE(c.tau.minCoeff(), -1e-12);
      EXPECT_NEAR(c.psi.sum(), 0.0, 1e-12);
    }
  EXPECT_THROW(alcove(kI * Mat::Identity(3, 3)), NumericalError);
}

TEST(LogChart, ExponentiatesToCentralMultiple) {
  std::mt19937_64 rng(23);
  for (int n = 2; n <= 5; ++n) {
    auto c = alcove(testing::random_special_unitary(rng, n));
    for (int i = 0; i < n; ++i) {
      const Mat x = log_chart(c, i);
      EXPECT_LE((numlin::expm_antihermitian(x) - std::exp(kTwoPi * kI * (double(i) / n)) * c.g).norm(), 1e-11);
    }
  }
}

TEST(ChartPath, ConstantAndDiagonal) {
  std::mt19937_64 rng(24);
  const Mat g = testing::random_special_unitary(rng, 3);
  auto cs = chart_path(std::vector<Mat>(5, g));
  for (const auto& c : cs) EXPECT_LE((c.gamma - cs[0].gamma).norm(), 1e-12);

  std::vector<Mat> path;
  for (int t = 1; t < 10; ++t) path.push_back(diag_exp(kTwoPi * 0.1 * t * weight_diagonal(2, 1)));
  auto d = chart_path(path);
  for (const auto& c : d) {
    EXPECT_LE((c.gamma - d[0].gamma).norm(), 1e-12);
    EXPECT_LE(std::abs(c.gamma(0, 1)) + std::abs(c.gamma(1, 0)), 1e-12);
  }
}

TEST(ChartPath, RandomSmoothPathIsAligned) {
  std::mt19937_64 rng(25);
  auto f = random_family(rng, 3);
  std::vector<Mat> path;
  for (int t = 0; t <= 200; ++t) path.push_back(f.at(1e-3 * t, 0.5e-3 * t));
  auto cs = chart_path(path);
  double step = 0.0;
  for (std::size_t t = 0; t < cs.size(); ++t) {
    EXPECT_LE(cs[t].reconstruction_residual(), 1e-8);
    if (t > 0) step = std::max(step, (cs[t].gamma - cs[t - 1].gamma).norm());
  }
  EXPECT_LT(step, 1e-2);
}

TEST(BForm, VanishesOnConstantAndDiagonalMaps) {
  std::mt19937_64 rng(26);
  const Mat x = log_chart(alcove(testing::random_special_unitary(rng, 3)), 0);
  EXPECT_EQ(b_density(x, Mat::Zero(3, 3), Mat::Zero(3, 3)), 0.0);
  // diagonal torus: all differentials commute with X
  const Mat d0 = kI * (RVec(3) << 0.3, -0.1, -0.2).finished().cast<cplx>().asDiagonal();
  const Mat d1 = kI * (RVec(3) << 0.1, 0.4, -0.5).finished().cast<cplx>().asDiagonal();
  const Mat d2 = kI * (RVec(3) << -0.2, 0.1, 0.1).finished().cast<cplx>().asDiagonal();
  EXPECT_NEAR(b_density(d0, d1, d2), 0.0, 1e-15);
}

TEST(BForm, MatchesChartFormula) {
  // B_i = (1/4pi) tr(theta D theta D^-1) + i tr((psi - lambda_i) theta^2),
  // D = exp(2 pi i psi), theta = gamma^-1 d gamma from aligned charts
  std::mt19937_64 rng(27);
  for (int n : {2, 3, 4}) {
    auto f = random_family(rng, n);
    const double h = 1e-4;
    const Chart c0 = alcove(f.at(0, 0));
    const Mat t1 = chart_derivative(f, c0, 0, h), t2 = chart_derivative(f, c0, 1, h);
    const Mat dm = diag_exp(kTwoPi * c0.psi), di = dm.adjoint();
    for (int i = 0; i < n; ++i) {
      if (c0.tau(i) < 1e-3) continue;
      const Mat l = (c0.psi - weight_diagonal(n, i)).cast<cplx>().asDiagonal();
      const cplx chart = (1 / (4 * kPi)) * ((t1 * dm * t2 * di).trace() - (t2 * dm * t1 * di).trace()) +
                         kI * (l * (t1 * t2 - t2 * t1)).trace();
      auto x = [&](double a, double b) { return log_chart(alcove(f.at(a, b)), i); };
      const double closed =
          b_density(x(0, 0), (x(h, 0) - x(-h, 0)) / (2 * h), (x(0, h) - x(0, -h)) / (2 * h));
      EXPECT_NEAR(chart.real(), closed, 1e-6) << n << " " << i;
      EXPECT_NEAR(chart.imag(), 0.0, 1e-6);
    }
  }
}

TEST(BForm, DifferenceIsCurvatureOfLineBundle) {
  // B_j - B_i = -i tr(lambda_ij [theta_1, theta_2])
  std::mt19937_64 rng(28);
  for (int n : {2, 3, 4}) {
    auto f = random_family(rng, n);
    const double h = 1e-4;
    const Chart c0 = alcove(f.at(0, 0));
    const Mat t1 = chart_derivative(f, c0, 0, h), t2 = chart_derivative(f, c0, 1, h);
    auto bi = [&](int i) {
      auto x = [&](double a, double b) { return log_chart(alcove(f.at(a, b)), i); };
      return b_density(x(0, 0), (x(h, 0) - x(-h, 0)) / (2 * h), (x(0, h) - x(0, -h)) / (2 * h));
    };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || c0.tau(i) < 1e-3 || c0.tau(j) < 1e-3) continue;
        const cplx bij = -kI * (weight_difference(n, i, j) * (t1 * t2 - t2 * t1)).trace();
        EXPECT_NEAR(bi(j) - bi(i), bij.real(), 1e-6);
        EXPECT_NEAR(bij.imag(), 0.0, 1e-6);
      }
  }
}

// H density (1/4pi) tr(M_1 [M_2, M_3]), M = g^-1 dg
double h_density(const Family& f, double x, double y, double z, double e = 1e-5) {
  const Mat gi = f.at(x, y, z).adjoint();
  const Mat m1 = gi * (f.at(x + e, y, z) - f.at(x - e, y, z)) / (2 * e);
  const Mat m2 = gi * (f.at(x, y + e, z) - f.at(x, y - e, z)) / (2 * e);
  const Mat m3 = gi * (f.at(x, y, z + e) - f.at(x, y, z - e)) / (2 * e);
  return ((m1 * (m2 * m3 - m3 * m2)).trace() / (4 * kPi)).real();
}

TEST(BForm, StokesOnSmallCube) {
  std::mt19937_64 rng(29);
  auto f = random_family(rng, 3);
  const Chart c0 = alcove(f.at(0, 0, 0));
  int i = 0;
  for (int k = 1; k < 3; ++k)
    if (c0.tau(k) > c0.tau(i)) i = k;
  const double s = 0.05;
  auto boundary = [&](int m) {
    const double hs = s / m;
    auto xp = [&](double x, double y, double z) { return log_chart(alcove(f.at(x, y, z)), i); };
    double total = 0.0;
    for (int ax = 0; ax < 3; ++ax) {
      const int a = (ax + 1) % 3, b = (ax + 2) % 3;
      for (double val : {s, 0.0})
        for (int p = 0; p < m; ++p)
          for (int q = 0; q < m; ++q) {
            std::array<double, 3> c{}, ea{}, eb{};
            c[ax] = val;
            c[a] = (p + 0.5) * hs;
            c[b] = (q + 0.5) * hs;
            ea[a] = eb[b] = 1e-5;
            const Mat d1 = (xp(c[0] + ea[0], c[1] + ea[1], c[2] + ea[2]) - xp(c[0] - ea[0], c[1] - ea[1], c[2] - ea[2])) / 2e-5;
            const Mat d2 = (xp(c[0] + eb[0], c[1] + eb[1], c[2] + eb[2]) - xp(c[0] - eb[0], c[1] - eb[1], c[2] - eb[2])) / 2e-5;
            total += (val == s ? 1.0 : -1.0) * b_density(xp(c[0], c[1], c[2]), d1, d2) * hs * hs;
          }
    }
    return total;
  };
  double vol = 0.0;
  const int m = 12;
  const double hs = s / m;
  for (int p = 0; p < m; ++p)
    for (int q = 0; q < m; ++q)
      for (int r = 0; r < m; ++r) vol += h_density(f, (p + .5) * hs, (q + .5) * hs, (r + .5) * hs) * hs * hs * hs;
  const double b = boundary(m);
  EXPECT_NEAR(b, vol, 1e-3 * std::abs(vol) + 1e-9);
}

TEST(BForm, TriangleQuadratureConvergesAtSecondOrder) {
  std::mt19937_64 rng(30);
  auto f = random_family(rng, 3);
  const Chart c0 = alcove(f.at(0, 0));
  int i = 0;
  for (int k = 1; k < 3; ++k)
    if (c0.tau(k) > c0.tau(i)) i = k;
  const double s = 0.3;
  auto integral = [&](int m) {
    const double h = s / m;
    double total = 0.0;
    auto x = [&](int p, int q) { return log_chart(alcove(f.at(p * h, q * h)), i); };
    for (int p = 0; p < m; ++p)
      for (int q = 0; q < m; ++q) {
        total += b_triangle(x(p, q), x(p + 1, q), x(p + 1, q + 1));
        total += b_triangle(x(p, q), x(p + 1, q + 1), x(p, q + 1));
      }
    return total;
  };
  const double i4 = integral(4), i8 = integral(8), i16 = integral(16), i32 = integral(32);
  const double r1 = (i8 - i4) / (i16 - i8), r2 = (i16 - i8) / (i32 - i16);
  EXPECT_GT(r1, 3.5);
  EXPECT_GT(r2, 3.5);
  const double extrap = i32 + (i32 - i16) / 3.0;
  EXPECT_NEAR(i32, extrap, 1e-3 * std::abs(extrap) + 1e-8);
}

TEST(EdgeTransport, ConstantAndDiagonalPaths) {
  std::mt19937_64 rng(31);
  auto c = alcove(testing::random_special_unitary(rng, 4));
  EXPECT_EQ(edge_transport({c, c, c}, 0, 2), cplx(1.0));
  // gamma(t) = exp(i phi t), phi diagonal traceless
  const RVec phi = (RVec(4) << 0.7, -0.2, 0.9, -1.4).finished();
  std::vector<Chart> fam;
  for (int t = 0; t <= 50; ++t) {
    Chart x = c;
    x.gamma = diag_exp(phi * (t / 50.0));
    fam.push_back(x);
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const cplx want = std::exp(-kI * (weight_difference(4, i, j).diagonal().real().dot(phi)));
      EXPECT_NEAR(std::abs(edge_transport(fam, i, j) - want), 0.0, 1e-12);
      // consistent with the character of the end point
      EXPECT_NEAR(std::abs(character(diag_exp(phi), i, j) * want - 1.0), 0.0, 1e-12);
    }
}

TEST(EdgeTransport, StokesAgainstCurvatureFlux) {
  // transport of L_ij around the boundary of a small square equals
  // exp(i int (B_j - B_i)) over the square
  std::mt19937_64 rng(32);
  for (int n : {2, 3}) {
    auto f = random_family(rng, n);
    const Chart c0 = alcove(f.at(0, 0));
    const double s = 0.2;
    const int m = 64;
    std::vector<Mat> loop;
    for (int t = 0; t < m; ++t) loop.push_back(f.at(s * t / m, 0));
    for (int t = 0; t < m; ++t) loop.push_back(f.at(s, s * t / m));
    for (int t = 0; t < m; ++t) loop.push_back(f.at(s - s * t / m, s));
    for (int t = 0; t <= m; ++t) loop.push_back(f.at(0, s - s * t / m));
    std::vector<Chart> fam;
    for (const auto& g : loop) fam.push_back(alcove(g));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || c0.tau(i) < 0.05 || c0.tau(j) < 0.05) continue;
        auto flux = [&](int k) {
          const int q = 32;
          const double h = s / q;
          double total = 0.0;
          auto x = [&](int a, int b) { return log_chart(alcove(f.at(a * h, b * h)), k); };
          for (int a = 0; a < q; ++a)
            for (int b = 0; b < q; ++b)
              total += (b_triangle(x(a, b), x(a + 1, b), x(a + 1, b + 1)) +
                        b_triangle(x(a, b), x(a + 1, b + 1), x(a, b + 1)));
          return total;
        };
        const cplx z = edge_transport(fam, i, j);
        const cplx want = std::exp(kI * (flux(j) - flux(i)));
        EXPECT_NEAR(std::abs(z - want), 0.0, 2e-3) << n << " " << i << " " << j;
      }
  }
}

TEST(Character, PaperValues) {
  for (int n = 2; n <= 6; ++n)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const cplx want = (std::abs(i - j) % 2 == 0) ? 1.0 : -1.0;
        EXPECT_NEAR(std::abs(character(-Mat::Identity(n, n), i, j) - want), 0.0, 1e-12);
      }
  for (int m = 1; m <= 4; ++m) {
    const int n = 2 * m;
    const Mat g0 = diag_exp(-kPi * weight_diagonal(n, m));
    EXPECT_NEAR(std::abs(character(g0, 0, m) - std::pow(kI, -m)), 0.0, 1e-12);
  }
  EXPECT_THROW(character(numlin::omega(4), 0, 2), NumericalError);
}

TEST(Character, DiagonalFormulaAndPathIndependence) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> nd;
  for (int n = 2; n <= 5; ++n) {
    RVec phi(n);
    for (int a = 0; a < n; ++a) phi(a) = nd(rng);
    phi.array() -= phi.mean();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const cplx want = std::exp(kI * weight_difference(n, i, j).diagonal().real().dot(phi));
        EXPECT_NEAR(std::abs(character(diag_exp(phi), i, j) - want), 0.0, 1e-12);
      }
    // random block element of G_ij, two different paths from I
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        Mat g0 = Mat::Zero(n, n);
        const int w = j - i;
        Mat inner = testing::random_unitary(rng, w);
        Mat outer = testing::random_unitary(rng, n - w);
        const cplx d = inner.determinant() * outer.determinant();
        outer.col(0) /= d;
        // assemble: block [i, j) and its complement
        std::vector<int> in, out;
        for (int a = 0; a < n; ++a) (a >= i && a < j ? in : out).push_back(a);
        for (int p = 0; p < w; ++p)
          for (int q = 0; q < w; ++q) g0(in[p], in[q]) = inner(p, q);
        for (int p = 0; p < n - w; ++p)
          for (int q = 0; q < n - w; ++q) g0(out[p], out[q]) = outer(p, q);
        const Mat x = stabilizer_log(g0, i, j);
        EXPECT_LE((numlin::expm_antihermitian(x) - g0).norm(), 1e-10);
        EXPECT_NEAR(std::abs(x.trace()), 0.0, 1e-10);
        const cplx c1 = character_along_path(stabilizer_path(x, 200), i, j);
        // via a random intermediate element of G_ij
        Mat mid = numlin::expm_antihermitian(stabilizer_log(g0 * g0, i, j) * 0.37);
        const Mat y1 = stabilizer_log(mid, i, j);
        auto p1 = stabilizer_path(y1, 100);
        const Mat y2 = stabilizer_log(mid.adjoint() * g0, i, j);
        auto p2 = stabilizer_path(y2, 100);
        for (std::size_t t = 1; t < p2.size(); ++t) p1.push_back(mid * p2[t]);
        const cplx c2 = character_along_path(p1, i, j);
        const cplx closed = character(g0, i, j);
        EXPECT_NEAR(std::abs(c1 - closed), 0.0, 1e-8);
        EXPECT_NEAR(std::abs(c2 - closed), 0.0, 1e-8);
        EXPECT_NEAR(std::abs(character(g0, j, i) * closed - 1.0), 0.0, 1e-12);
      }
  }
}

TEST(Triangulate, ConstantAndMinusIdentity) {
  auto t = triangulate(sample_surface([](double, double) { return Mat(Mat::Identity(2, 2)); }, 4, 4));
  for (const auto& s : t.triangles) EXPECT_EQ(s.index, 0);
  EXPECT_NEAR(std::abs(holonomy(t).amplitude - 1.0), 0.0, 1e-14);

  auto phi = [](double k1, double k2) {
    const double a = (1 - std::cos(k1)) * (1 - std::cos(k2)) / 4.0;
    return diag_exp(kPi * a * (RVec(2) << 1.0, -1.0).finished());
  };
  auto tm = triangulate(sample_surface(phi, 8, 8));
  const int vpi = tm.surface.index(4, 4);
  EXPECT_LE((tm.surface.g[vpi] + Mat::Identity(2, 2)).norm(), 1e-14);
  for (const auto& s : tm.triangles)
    if (s.v[0] == vpi || s.v[1] == vpi || s.v[2] == vpi) EXPECT_EQ(s.index, 1);
  EXPECT_NEAR(std::abs(holonomy(tm).amplitude - 1.0), 0.0, 1e-12);
  EXPECT_EQ(dump(tm)["triangles"].size(), 128u);
}

TEST(PfaffianCharacter, Examples) {
  Mat w(2, 2);
  w << 0.0, -1.0, 1.0, 0.0;
  auto r = pfaffian_character_check(w);
  EXPECT_NEAR(std::abs(r.pfaffian + 1.0), 0.0, 1e-14);
  EXPECT_LE(r.residual, 1e-12);
  auto r4 = pfaffian_character_check(numlin::omega(4));
  EXPECT_NEAR(std::abs(r4.pfaffian + 1.0), 0.0, 1e-14);
  EXPECT_LE(r4.residual, 1e-12);
}

TEST(PfaffianCharacter, RandomAntisymmetricSpecialUnitary) {
  std::mt19937_64 rng(34);
  int plus = 0, minus = 0;
  for (int n : {2, 4, 6})
    for (int trial = 0; trial < 40; ++trial) {
      auto r = pfaffian_character_check(testing::random_antisymmetric_su(rng, n));
      EXPECT_LE(r.residual, 1e-7);
      EXPECT_LE(r.stabilizer_residual, 1e-8);
      (r.pfaffian.real() > 0 ? plus : minus)++;
    }
  EXPECT_GT(plus, 0);
  EXPECT_GT(minus, 0);
}

}  // namespace
}  // namespace z2wz
