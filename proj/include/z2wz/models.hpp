#pragma once

// Bloch Hamiltonians H(k) = sum_R exp(i k.R) T_R on the d-torus together with
// an explicit odd time-reversal operator theta: v -> u_theta conj(v).

#include <z2wz/numlin.hpp>

#include <json.hpp>

#include <fstream>
#include <iostream>
#include <array>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

namespace z2wz {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace models {

using Displacement = std::vector<int>;
using KPoint = std::vector<double>;

struct TimeReversalOperator {
  Mat u_theta;

  /// Residual of u conj(u) = -I.
  double oddness_residual() const {
    const auto n = u_theta.rows();
    return (u_theta * u_theta.conjugate() + Mat::Identity(n, n)).norm();
  }
  Vec apply(const Vec& v) const { return u_theta * v.conjugate(); }
};

class BlochModel {
 public:
  BlochModel() = default;

  /// Builds a model from hopping blocks. Every R is stored together with -R;
  /// if both R and -R are supplied they must satisfy T_{-R} = T_R^dagger.
  /// A non-Hermitian on-site block is symmetrized and a warning is recorded.
  BlochModel(int dim, TimeReversalOperator theta, const std::map<Displacement, Mat>& hoppings,
             std::optional<double> fermi = std::nullopt, double tol = 1e-12)
      : dim_(dim), theta_(std::move(theta)) {
    if (dim != 2 && dim != 3) throw ModelError("model dimension must be 2 or 3");
    size_ = static_cast<int>(theta_.u_theta.rows());
    if (theta_.u_theta.cols() != size_) throw ModelError("theta must be square");
    if (size_ % 2 != 0) throw ModelError("matrix size N must be even for odd time reversal");
    if (numlin::unitarity_residual(theta_.u_theta) > 1e-10)
      throw ModelError("theta matrix is not unitary");
    if (theta_.oddness_residual() > 1e-10) {
      if ((theta_.u_theta * theta_.u_theta.conjugate() - Mat::Identity(size_, size_)).norm() <
          1e-10)
        throw ModelError("even time reversal: theta^2 = +I, an odd operator is required");
      throw ModelError("theta does not square to -I");
    }
    for (const auto& [r, t] : hoppings) {
      if (static_cast<int>(r.size()) != dim) throw ModelError("displacement has wrong dimension");
      if (t.rows() != size_ || t.cols() != size_) throw ModelError("hopping block has wrong size");
      Displacement mr = negate(r);
      if (r == mr) {
        Mat h = t;
        if (numlin::hermiticity_residual(t) > tol * std::max(1.0, t.norm())) {
          warnings_.push_back("on-site block was not Hermitian; symmetrized");
          h = 0.5 * (t + t.adjoint());
        }
        hoppings_[r] = h;
        continue;
      }
      auto it = hoppings.find(mr);
      if (it != hoppings.end()) {
        if ((it->second - t.adjoint()).norm() > tol * std::max(1.0, t.norm()))
          throw ModelError("hopping blocks violate T_{-R} = T_R^dagger");
      }
      hoppings_[r] = t;
      hoppings_[mr] = t.adjoint();
    }
    if (fermi) {
      fermi_ = *fermi;
    } else {
      fermi_ = sampled_midgap(16);
    }
  }

  int dim() const { return dim_; }
  int size() const { return size_; }
  double fermi() const { return fermi_; }
  const TimeReversalOperator& theta() const { return theta_; }
  const std::map<Displacement, Mat>& hoppings() const { return hoppings_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  Mat evaluate(std::span<const double> k) const {
    if (static_cast<int>(k.size()) != dim_) throw ModelError("k-point has wrong dimension");
    Mat h = Mat::Zero(size_, size_);
    for (const auto& [r, t] : hoppings_) {
      double phase = 0.0;
      for (int j = 0; j < dim_; ++j) phase += k[j] * r[j];
      h += std::exp(kI * phase) * t;
    }
    return 0.5 * (h + h.adjoint());
  }
  Mat evaluate(const KPoint& k) const { return evaluate(std::span<const double>(k)); }

  /// Midpoint between the top of the lower half of the bands and the bottom
  /// of the upper half, sampled on an m^d grid.
  double sampled_midgap(int m) const {
    double lower_max = -1e300, upper_min = 1e300;
    const int half = size_ / 2;
    const int total = dim_ == 2 ? m * m : m * m * m;
    KPoint k(dim_);
    for (int idx = 0; idx < total; ++idx) {
      int rest = idx;
      for (int j = 0; j < dim_; ++j) {
        k[j] = kTwoPi * (rest % m) / m;
        rest /= m;
      }
      Eigen::SelfAdjointEigenSolver<Mat> es(evaluate(k), Eigen::EigenvaluesOnly);
      lower_max = std::max(lower_max, es.eigenvalues()(half - 1));
      upper_min = std::min(upper_min, es.eigenvalues()(half));
    }
    return 0.5 * (lower_max + upper_min);
  }

  BlochModel with_fermi(double e) const {
    BlochModel m = *this;
    m.fermi_ = e;
    return m;
  }

 private:
  static Displacement negate(const Displacement& r) {
    Displacement m(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) m[j] = -r[j];
    return m;
  }

  int dim_ = 2;
  int size_ = 0;
  TimeReversalOperator theta_;
  std::map<Displacement, Mat> hoppings_;
  double fermi_ = 0.0;
  std::vector<std::string> warnings_;
};

struct TrsReport {
  double max_violation = 0.0;
  KPoint worst_k;
  bool symmetric(double tol = 1e-10) const { return max_violation <= tol; }
};

/// Maximum over the samples of |u conj(H(k)) u^dagger - H(-k)|.
inline TrsReport check_trs(const BlochModel& model, const std::vector<KPoint>& samples) {
  TrsReport rep;
  const Mat& u = model.theta().u_theta;
  for (const auto& k : samples) {
    KPoint mk(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) mk[j] = -k[j];
    const double v = (u * model.evaluate(k).conjugate() * u.adjoint() - model.evaluate(mk)).norm();
    if (v >= rep.max_violation) {
      rep.max_violation = v;
      rep.worst_k = k;
    }
  }
  return rep;
}

inline std::vector<KPoint> random_kpoints(int dim, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0.0, kTwoPi);
  std::vector<KPoint> out(count, KPoint(dim));
  for (auto& k : out)
    for (auto& x : k) x = ud(rng);
  return out;
}

// --- model zoo ---------------------------------------------------------------

namespace detail {

inline Mat pauli(int a) {
  Mat s = Mat::Zero(2, 2);
  switch (a) {
    case 0: s << 1.0, 0.0, 0.0, 1.0; break;
    case 1: s << 0.0, 1.0, 1.0, 0.0; break;
    case 2: s << 0.0, -kI, kI, 0.0; break;
    case 3: s << 1.0, 0.0, 0.0, -1.0; break;
    default: throw std::logic_error("pauli index");
  }
  return s;
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Accumulates hopping blocks; add_bond(R, X) contributes X e^{ikR} + h.c.
class HoppingBuilder {
 public:
  HoppingBuilder(int dim, int n) : dim_(dim), n_(n) {}

  void add_onsite(const Mat& h) { block(Displacement(dim_, 0)) += h; }

  void add_bond(const Displacement& r, const Mat& x) {
    Displacement mr(r.size());
    for (std::size_t j = 0; j < r.size(); ++j) mr[j] = -r[j];
    if (r == mr) {
      block(r) += x + x.adjoint();
      return;
    }
    block(r) += x;
    block(mr) += x.adjoint();
  }

  const std::map<Displacement, Mat>& blocks() const { return blocks_; }

 private:
  Mat& block(const Displacement& r) {
    auto it = blocks_.find(r);
    if (it == blocks_.end()) it = blocks_.emplace(r, Mat::Zero(n_, n_)).first;
    return it->second;
  }

  int dim_;
  int n_;
  std::map<Displacement, Mat> blocks_;
};

inline Mat spin_theta() {
  Mat j(2, 2);
  j << 0.0, 1.0, -1.0, 0.0;  // i sigma_y
  return j;
}

}  // namespace detail

/// Kane-Mele honeycomb model, basis (A up, A down, B up, B down).
/// lambda_v is the staggered sublattice potential; Rashba coupling in its
/// time-reversal-even nearest-neighbour form.
inline BlochModel kane_mele(double t, double lambda_so, double lambda_r, double lambda_v) {
  using detail::kron;
  using detail::pauli;
  detail::HoppingBuilder hb(2, 4);
  const double s3 = std::sqrt(3.0);
  const std::array<double, 2> a1{0.5, s3 / 2}, a2{-0.5, s3 / 2}, d0{0.0, 1.0 / s3};
  Mat ab = Mat::Zero(2, 2);
  ab(0, 1) = 1.0;  // sublattice A <- B
  for (const Displacement& r : {Displacement{0, 0}, Displacement{-1, 0}, Displacement{0, -1}}) {
    const double dx = d0[0] + r[0] * a1[0] + r[1] * a2[0];
    const double dy = d0[1] + r[0] * a1[1] + r[1] * a2[1];
    const double len = std::hypot(dx, dy);
    Mat spin = t * pauli(0) + kI * lambda_r * (pauli(1) * (dy / len) - pauli(2) * (dx / len));
    hb.add_bond(r, kron(ab, spin));
  }
  const Mat so = -kI * lambda_so * kron(pauli(3), pauli(3));
  for (const Displacement& r : {Displacement{1, 0}, Displacement{0, -1}, Displacement{-1, 1}})
    hb.add_bond(r, so);
  hb.add_onsite(lambda_v * kron(pauli(3), pauli(0)));
  TimeReversalOperator th{kron(pauli(0), detail::spin_theta())};
  return BlochModel(2, th, hb.blocks());
}

namespace detail {

inline BlochModel wilson_dirac(int dim, double a, double b, double c, double d, double m) {
  detail::HoppingBuilder hb(dim, 4);
  const Mat g0 = kron(pauli(3), pauli(0));
  const Mat id = Mat::Identity(4, 4);
  hb.add_onsite((m + 2.0 * b * dim) * g0 + (c - 2.0 * d * dim) * id);
  for (int j = 0; j < dim; ++j) {
    Displacement r(dim, 0);
    r[j] = 1;
    const Mat gj = kron(pauli(1), pauli(j + 1));
    hb.add_bond(r, (a / (2.0 * kI)) * gj - b * g0 + d * id);
  }
  TimeReversalOperator th{kron(pauli(0), spin_theta())};
  return BlochModel(dim, th, hb.blocks());
}

}  // namespace detail

/// Four-band quantum-spin-Hall lattice model with mass
/// M(k) = m + 2b(2 - cos k1 - cos k2) and band offset c - 2d(2 - cos k1 - cos k2).
/// For b > 0 the Z2 phase is nontrivial for -4b < m < 0.
inline BlochModel bhz(double a, double b, double c, double d_param, double m) {
  return detail::wilson_dirac(2, a, b, c, d_param, m);
}

/// Three-dimensional Wilson-Dirac insulator; strong phase for -4b < m < 0.
inline BlochModel wilson_dirac_3d(double a, double b, double m) {
  return detail::wilson_dirac(3, a, b, 0.0, 0.0, m);
}

/// Spinless Haldane model (Chern insulator). It is not time-reversal
/// invariant; theta = i sigma_y is attached only to satisfy the model type.
inline BlochModel haldane(double t1, double t2, double phi, double mass) {
  detail::HoppingBuilder hb(2, 2);
  Mat ab = Mat::Zero(2, 2);
  ab(0, 1) = t1;
  for (const Displacement& r : {Displacement{0, 0}, Displacement{-1, 0}, Displacement{0, -1}})
    hb.add_bond(r, ab);
  Mat nnn = Mat::Zero(2, 2);
  nnn(0, 0) = t2 * std::exp(kI * phi);
  nnn(1, 1) = t2 * std::exp(-kI * phi);
  for (const Displacement& r : {Displacement{1, 0}, Displacement{0, -1}, Displacement{-1, 1}})
    hb.add_bond(r, nnn);
  hb.add_onsite(mass * detail::pauli(3));
  return BlochModel(2, TimeReversalOperator{detail::spin_theta()}, hb.blocks());
}

/// Stacks a 2d model along k3: H(k1,k2,k3) = H_2d(k1,k2) + t_perp cos(k3) I.
inline BlochModel layered_3d(const BlochModel& base, double t_perp) {
  if (base.dim() != 2) throw ModelError("layered_3d: base model must be two-dimensional");
  std::map<Displacement, Mat> h;
  for (const auto& [r, t] : base.hoppings()) h[{r[0], r[1], 0}] = t;
  const Mat hop = 0.5 * t_perp * Mat::Identity(base.size(), base.size());
  h[{0, 0, 1}] = hop;
  h[{0, 0, -1}] = hop;
  return BlochModel(3, base.theta(), h, base.fermi());
}

/// Adds a k-independent Hermitian term (e.g. a Zeeman field).
inline BlochModel with_onsite(const BlochModel& model, const Mat& term) {
  std::map<Displacement, Mat> h = model.hoppings();
  Displacement zero(model.dim(), 0);
  if (h.count(zero)) {
    h[zero] += term;
  } else {
    h[zero] = term;
  }
  return BlochModel(model.dim(), model.theta(), h, model.fermi());
}

/// Constant Hamiltonian: a flat-band (atomic-limit) model.
inline BlochModel atomic(const Mat& h, const Mat& u_theta, int dim = 2) {
  std::map<Displacement, Mat> blocks{{Displacement(dim, 0), h}};
  return BlochModel(dim, TimeReversalOperator{u_theta}, blocks);
}

// --- model files --------------------------------------------------------------
//
// {
//   "dim": 2, "size": 4, "fermi": 0.0,
//   "theta": [[re, im], ...],                 // N*N entries, row-major
//   "hoppings": [ {"R": [r1, r2], "T": [[re, im], ...]}, ... ]
// }
//
// Only the canonical half of the displacements (R = 0 or the first nonzero
// component of R positive) is written; the conjugate half is generated on
// load. Files that list both R and -R are accepted when consistent.

namespace detail {

inline nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back({m(i, j).real(), m(i, j).imag()});
  return arr;
}

inline Mat matrix_from_json(const nlohmann::json& arr, int n, const std::string& what) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != n * n)
    throw ModelError("model file: '" + what + "' must hold " + std::to_string(n * n) +
                     " [re, im] pairs");
  Mat m(n, n);
  for (int idx = 0; idx < n * n; ++idx) {
    const auto& e = arr[idx];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ModelError("model file: malformed complex entry in '" + what + "'");
    m(idx / n, idx % n) = cplx(e[0].get<double>(), e[1].get<double>());
  }
  return m;
}

inline bool canonical(const Displacement& r) {
  for (int x : r) {
    if (x > 0) return true;
    if (x < 0) return false;
  }
  return true;
}

}  // namespace detail

inline nlohmann::json model_to_json(const BlochModel& model) {
  nlohmann::json j;
  j["dim"] = model.dim();
  j["size"] = model.size();
  j["fermi"] = model.fermi();
  j["theta"] = detail::matrix_to_json(model.theta().u_theta);
  j["hoppings"] = nlohmann::json::array();
  for (const auto& [r, t] : model.hoppings()) {
    if (!detail::canonical(r)) continue;
    j["hoppings"].push_back({{"R", r}, {"T", detail::matrix_to_json(t)}});
  }
  return j;
}

inline BlochModel model_from_json(const nlohmann::json& j) {
  for (const char* key : {"dim", "size", "fermi", "theta", "hoppings"})
    if (!j.contains(key)) throw ModelError(std::string("model file: missing field '") + key + "'");
  if (!j["dim"].is_number_integer() || !j["size"].is_number_integer())
    throw ModelError("model file: 'dim' and 'size' must be integers");
  const int dim = j["dim"].get<int>();
  const int n = j["size"].get<int>();
  if (n <= 0) throw ModelError("model file: 'size' must be positive");
  if (n % 2 != 0) throw ModelError("model file: odd matrix size N; odd time reversal needs N even");
  if (!j["fermi"].is_number()) throw ModelError("model file: 'fermi' must be a number");
  Mat theta = detail::matrix_from_json(j["theta"], n, "theta");
  std::map<Displacement, Mat> blocks;
  if (!j["hoppings"].is_array()) throw ModelError("model file: 'hoppings' must be a list");
  for (const auto& h : j["hoppings"]) {
    if (!h.contains("R") || !h.contains("T")) throw ModelError("model file: hopping needs R and T");
    if (!h["R"].is_array() || static_cast<int>(h["R"].size()) != dim)
      throw ModelError("model file: R must be an integer vector of length dim");
    Displacement r;
    for (const auto& x : h["R"]) {
      if (!x.is_number_integer()) throw ModelError("model file: R entries must be integers");
      r.push_back(x.get<int>());
    }
    if (blocks.count(r)) throw ModelError("model file: duplicate displacement");
    blocks[r] = detail::matrix_from_json(h["T"], n, "T");
  }
  return BlochModel(dim, TimeReversalOperator{theta}, blocks, j["fermi"].get<double>());
}

inline void save_model(const BlochModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write model file " + path);
  out << model_to_json(model).dump(2) << '\n';
}

inline BlochModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("model file: parse error: ") + e.what());
  }
  BlochModel m = model_from_json(j);
  for (const auto& w : m.warnings()) std::cerr << "warning: " << path << ": " << w << '\n';
  return m;
}

}  // namespace models
}  // namespace z2wz
