#include <gtest/gtest.h>

#include <z2wz/models.hpp>

#include <cstdio>
#include <filesystem>

#include "test_util.hpp"

namespace z2wz {
namespace {

using models::BlochModel;
using models::KPoint;

double band_gap_at(const BlochModel& m, const KPoint& k) {
  auto s = numlin::eigh(m.evaluate(k));
  const int h = m.size() / 2;
  return s.eigenvalues(h) - s.eigenvalues(h - 1);
}

double min_gap(const BlochModel& m, int n) {
  double g = 1e300;
  KPoint k(m.dim());
  const int total = m.dim() == 2 ? n * n : n * n * n;
  for (int idx = 0; idx < total; ++idx) {
    int rest = idx;
    for (int j = 0; j < m.dim(); ++j) {
      k[j] = kTwoPi * (rest % n) / n;
      rest /= n;
    }
    g = std::min(g, band_gap_at(m, k));
  }
  return g;
}

std::vector<BlochModel> trs_zoo() {
  return {models::kane_mele(1.0, 0.06, 0.05, 0.1), models::kane_mele(1.0, 0.06, 0.0, 0.4),
          models::bhz(1.0, 1.0, 0.1, 0.2, -1.0), models::wilson_dirac_3d(1.0, 1.0, -1.0),
          models::layered_3d(models::kane_mele(1.0, 0.06, 0.05, 0.1), 0.2)};
}

TEST(Models, HermitianPeriodicAndTimeReversal) {
  for (const auto& m : trs_zoo()) {
    auto ks = models::random_kpoints(m.dim(), 20, 3);
    EXPECT_TRUE(models::check_trs(m, ks).symmetric(1e-12));
    for (auto k : ks) {
      Mat h = m.evaluate(k);
      EXPECT_LE(numlin::hermiticity_residual(h), 1e-14);
      for (int j = 0; j < m.dim(); ++j) {
        KPoint s = k;
        s[j] += kTwoPi;
        EXPECT_LE((m.evaluate(s) - h).norm(), 1e-12);
      }
    }
    EXPECT_LE(m.theta().oddness_residual(), 1e-15);
  }
}

TEST(Models, BrokenSymmetryIsDetected) {
  auto km = models::kane_mele(1.0, 0.06, 0.05, 0.1);
  Mat zeeman = 0.1 * models::detail::kron(models::detail::pauli(0), models::detail::pauli(3));
  auto ks = models::random_kpoints(2, 20, 4);
  auto rep = models::check_trs(models::with_onsite(km, zeeman), ks);
  EXPECT_GT(rep.max_violation, 0.1);
  EXPECT_EQ(rep.worst_k.size(), 2u);
  EXPECT_GT(models::check_trs(models::haldane(1.0, 0.1, kPi / 2, 0.0), ks).max_violation, 0.1);
}

TEST(Models, KaneMeleGapClosesAtCriticalStagger) {
  const double so = 0.06;
  const KPoint kdirac{kTwoPi / 3, -kTwoPi / 3};
  const double vc = 3.0 * std::sqrt(3.0) * so;
  EXPECT_LE(band_gap_at(models::kane_mele(1.0, so, 0.0, vc), kdirac), 1e-12);
  // gap at K is 2 |lambda_v - 3 sqrt3 lambda_so| without Rashba
  EXPECT_NEAR(band_gap_at(models::kane_mele(1.0, so, 0.0, 0.1), kdirac), 2.0 * std::abs(0.1 - vc),
              1e-12);
  EXPECT_LE(min_gap(models::kane_mele(1.0, 0.0, 0.0, 0.0), 9), 1e-12);
}

TEST(Models, WilsonDiracGapAndFermiLevel) {
  auto m = models::bhz(1.0, 1.0, 0.0, 0.0, -1.0);
  EXPECT_NEAR(band_gap_at(m, {0.0, 0.0}), 2.0, 1e-12);
  EXPECT_GT(min_gap(m, 16), 0.5);
  EXPECT_LE(band_gap_at(models::bhz(1.0, 1.0, 0.0, 0.0, 0.0), {0.0, 0.0}), 1e-12);
  auto s = numlin::eigh(m.evaluate(KPoint{0.3, 1.1}));
  EXPECT_LT(s.eigenvalues(1), m.fermi());
  EXPECT_GT(s.eigenvalues(2), m.fermi());
  EXPECT_GT(min_gap(models::wilson_dirac_3d(1.0, 1.0, -1.0), 8), 0.5);
}

TEST(Models, FileRoundTrip) {
  auto m = models::wilson_dirac_3d(1.0, 1.0, -1.0);
  auto path = (std::filesystem::temp_directory_path() / "z2wz_model_rt.json").string();
  models::save_model(m, path);
  auto back = models::load_model(path);
  std::remove(path.c_str());
  EXPECT_EQ(back.dim(), 3);
  EXPECT_EQ(back.size(), 4);
  EXPECT_DOUBLE_EQ(back.fermi(), m.fermi());
  for (const auto& k : models::random_kpoints(3, 10, 5))
    EXPECT_LE((back.evaluate(k) - m.evaluate(k)).norm(), 1e-14);
}

nlohmann::json small_model_json() {
  auto j = models::model_to_json(models::bhz(1.0, 1.0, 0.0, 0.0, -1.0));
  return j;
}

TEST(Models, FileRejections) {
  auto j = small_model_json();
  j["size"] = 3;
  EXPECT_THROW(models::model_from_json(j), ModelError);

  j = small_model_json();
  // theta = identity squares to +I
  Mat id = Mat::Identity(4, 4);
  j["theta"] = models::detail::matrix_to_json(id);
  try {
    models::model_from_json(j);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("even time reversal"), std::string::npos);
  }

  j = small_model_json();
  auto bad = j["hoppings"][1];
  for (auto& r : bad["R"]) r = -r.get<int>();  // same T at -R is not its adjoint
  j["hoppings"].push_back(bad);
  EXPECT_THROW(models::model_from_json(j), ModelError);

  j = small_model_json();
  j.erase("fermi");
  EXPECT_THROW(models::model_from_json(j), ModelError);
}

TEST(Models, NonHermitianOnsiteIsSymmetrizedWithWarning) {
  std::map<models::Displacement, Mat> h;
  Mat t = Mat::Zero(2, 2);
  t(0, 1) = 1.0;
  h[{0, 0}] = t;
  BlochModel m(2, models::TimeReversalOperator{models::detail::spin_theta()}, h, 0.0);
  ASSERT_EQ(m.warnings().size(), 1u);
  EXPECT_LE(numlin::hermiticity_residual(m.hoppings().at({0, 0})), 1e-15);
}

}  // namespace
}  // namespace z2wz
