#pragma once

// Cumulative logit models for ordinal outcomes:
//
//   PO   P(Y <= r | x) = F(theta_r + x'beta)
//   CSO  P(Y <= r | x) = F(theta_r + x'beta_r)
//   LSH  P(Y <= r | x) = F(theta_r + x'beta + (r - k/2) x'gamma)
//   LSC  P(Y <= r | x) = F((theta_r + x'beta) / exp(x'gamma))
//
// with F the standard logistic CDF and r = 1..k-1. Dispersion effects use the
// same covariates as the location part (Z = X). The sign convention follows
// the "+x'beta" form above; software that writes theta_r - x'beta reports
// location coefficients with the opposite sign.
//
// Packed parameter order (used by score, information and standard errors):
//   thresholds theta_1..theta_{k-1},
//   then beta_1..beta_p            (PO, LSH, LSC)
//   then gamma_1..gamma_p          (LSH, LSC)
// or, for CSO, the p x (k-1) matrix of category effects column-major, i.e.
//   beta_{1,1}..beta_{p,1}, beta_{1,2}..beta_{p,2}, ...

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ordsim/logistic.hpp"

namespace ordsim {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelKind { PO, CSO, LSH, LSC };

inline constexpr ModelKind kAllOrdinalKinds[] = {ModelKind::PO, ModelKind::CSO, ModelKind::LSH,
                                                 ModelKind::LSC};

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::PO: return "PO";
    case ModelKind::CSO: return "CSO";
    case ModelKind::LSH: return "LSH";
    case ModelKind::LSC: return "LSC";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (ModelKind kind : kAllOrdinalKinds)
    if (s == to_string(kind)) return kind;
  throw std::invalid_argument("unknown ordinal model kind '" + std::string(s) + "'");
}

inline bool has_dispersion(ModelKind kind) {
  return kind == ModelKind::LSH || kind == ModelKind::LSC;
}

/// Strictly increasing latent cutpoints theta_1..theta_{k-1}.
class Thresholds {
 public:
  Thresholds() = default;
  explicit Thresholds(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("Thresholds: need at least one cutpoint");
    for (std::size_t r = 0; r < values_.size(); ++r) {
      if (!std::isfinite(values_[r])) throw std::invalid_argument("Thresholds: non-finite cutpoint");
      if (r > 0 && !(values_[r - 1] < values_[r]))
        throw std::invalid_argument("Thresholds: cutpoints must be strictly increasing");
    }
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  int categories() const { return static_cast<int>(values_.size()) + 1; }
  double operator[](std::size_t r) const { return values_[r]; }

  Eigen::VectorXd as_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(values_.data(), static_cast<Eigen::Index>(values_.size()));
  }

 private:
  std::vector<double> values_;
};

/// Parameters of one cumulative model instance. Thresholds are kept as a plain
/// vector because fitted values are unconstrained; ordering problems of a fit
/// show up as invalid category probabilities instead.
struct ModelParams {
  ModelKind kind = ModelKind::PO;
  int k = 3;
  Eigen::VectorXd thresholds;         // k-1
  Eigen::VectorXd location;           // p, empty for CSO
  Eigen::VectorXd dispersion;         // p for LSH/LSC, empty otherwise
  Eigen::MatrixXd category_location;  // p x (k-1) for CSO, empty otherwise

  int num_covariates() const {
    return static_cast<int>(kind == ModelKind::CSO ? category_location.rows() : location.size());
  }

  static ModelParams zero(ModelKind kind, int k, int p) {
    ModelParams m;
    m.kind = kind;
    m.k = k;
    m.thresholds = Eigen::VectorXd::Zero(k - 1);
    if (kind == ModelKind::CSO) {
      m.category_location = Eigen::MatrixXd::Zero(p, k - 1);
    } else {
      m.location = Eigen::VectorXd::Zero(p);
    }
    if (has_dispersion(kind)) m.dispersion = Eigen::VectorXd::Zero(p);
    return m;
  }

  void validate() const {
    if (k < 2) throw std::invalid_argument("ModelParams: k must be at least 2");
    if (thresholds.size() != k - 1) throw std::invalid_argument("ModelParams: thresholds must have k-1 entries");
    if (kind == ModelKind::CSO) {
      if (location.size() != 0) throw std::invalid_argument("ModelParams: CSO carries category_location only");
      if (category_location.cols() != k - 1 || category_location.rows() < 1)
        throw std::invalid_argument("ModelParams: CSO category_location must be p x (k-1)");
    } else {
      if (category_location.size() != 0)
        throw std::invalid_argument("ModelParams: category_location is for CSO only");
      if (location.size() < 1) throw std::invalid_argument("ModelParams: location must have p >= 1 entries");
    }
    if (has_dispersion(kind) != (dispersion.size() != 0))
      throw std::invalid_argument("ModelParams: dispersion present iff kind is LSH or LSC");
    if (has_dispersion(kind) && dispersion.size() != location.size())
      throw std::invalid_argument("ModelParams: dispersion must have p entries");
    if (!thresholds.allFinite() || !location.allFinite() || !dispersion.allFinite() ||
        !category_location.allFinite())
      throw std::invalid_argument("ModelParams: non-finite coefficient");
  }
};

struct LinearParams {
  double intercept = 0.0;
  Eigen::VectorXd slopes;
  double sigma2 = 1.0;
};

/// Ordinal outcomes in 1..k with an n x p covariate matrix.
struct Dataset {
  std::vector<int> outcomes;
  RowMatrix covariates;
  int k = 3;

  Eigen::Index n() const { return covariates.rows(); }
  Eigen::Index p() const { return covariates.cols(); }

  void validate() const {
    if (covariates.rows() == 0) throw std::invalid_argument("Dataset: no observations");
    if (covariates.cols() < 1) throw std::invalid_argument("Dataset: need at least one covariate");
    if (static_cast<Eigen::Index>(outcomes.size()) != covariates.rows())
      throw std::invalid_argument("Dataset: outcome and covariate row counts differ");
    if (k < 2) throw std::invalid_argument("Dataset: k must be at least 2");
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      if (outcomes[i] < 1 || outcomes[i] > k)
        throw std::invalid_argument("Dataset: outcome " + std::to_string(outcomes[i]) + " at row " +
                                    std::to_string(i + 1) + " outside 1.." + std::to_string(k));
    if (!covariates.allFinite()) throw std::invalid_argument("Dataset: non-finite covariate");
  }
};

/// Index map of the packed parameter vector.
struct ParamLayout {
  ModelKind kind = ModelKind::PO;
  int k = 3;
  int p = 1;

  int num_thresholds() const { return k - 1; }
  int size() const {
    switch (kind) {
      case ModelKind::PO: return (k - 1) + p;
      case ModelKind::CSO: return (k - 1) + p * (k - 1);
      case ModelKind::LSH:
      case ModelKind::LSC: return (k - 1) + 2 * p;
    }
    return 0;
  }
  // r and j are 0-based here.
  int threshold(int r) const { return r; }
  int location(int j) const { return (k - 1) + j; }
  int dispersion(int j) const { return (k - 1) + p + j; }
  int category(int j, int r) const { return (k - 1) + r * p + j; }

  static ParamLayout of(const ModelParams& m) { return {m.kind, m.k, m.num_covariates()}; }
};

inline Eigen::VectorXd pack(const ModelParams& m) {
  const ParamLayout L = ParamLayout::of(m);
  Eigen::VectorXd v(L.size());
  v.head(L.k - 1) = m.thresholds;
  if (m.kind == ModelKind::CSO) {
    v.tail(L.p * (L.k - 1)) = Eigen::Map<const Eigen::VectorXd>(m.category_location.data(), L.p * (L.k - 1));
  } else {
    v.segment(L.k - 1, L.p) = m.location;
    if (has_dispersion(m.kind)) v.segment(L.k - 1 + L.p, L.p) = m.dispersion;
  }
  return v;
}

inline ModelParams unpack(const ParamLayout& L, const Eigen::VectorXd& v) {
  if (v.size() != L.size()) throw std::invalid_argument("unpack: packed vector has wrong length");
  ModelParams m = ModelParams::zero(L.kind, L.k, L.p);
  m.thresholds = v.head(L.k - 1);
  if (L.kind == ModelKind::CSO) {
    m.category_location = Eigen::Map<const Eigen::MatrixXd>(v.data() + (L.k - 1), L.p, L.k - 1);
  } else {
    m.location = v.segment(L.k - 1, L.p);
    if (has_dispersion(L.kind)) m.dispersion = v.segment(L.k - 1 + L.p, L.p);
  }
  return m;
}

/// Human-readable parameter names in packed order, e.g. "theta1", "beta[x2]",
/// "gamma[x2]", "beta3[x2]" (category 3 of CSO).
inline std::vector<std::string> parameter_names(const ParamLayout& L, const std::vector<std::string>& covariates) {
  std::vector<std::string> names(static_cast<std::size_t>(L.size()));
  auto cov = [&](int j) {
    return j < static_cast<int>(covariates.size()) ? covariates[j] : "x" + std::to_string(j + 1);
  };
  for (int r = 0; r < L.k - 1; ++r) names[L.threshold(r)] = "theta" + std::to_string(r + 1);
  for (int j = 0; j < L.p; ++j) {
    if (L.kind == ModelKind::CSO) {
      for (int r = 0; r < L.k - 1; ++r) names[L.category(j, r)] = "beta" + std::to_string(r + 1) + "[" + cov(j) + "]";
    } else {
      names[L.location(j)] = "beta[" + cov(j) + "]";
      if (has_dispersion(L.kind)) names[L.dispersion(j)] = "gamma[" + cov(j) + "]";
    }
  }
  return names;
}

namespace detail {

// Sparse gradient of one linear predictor eta_r with respect to the packed vector.
struct SparseGrad {
  std::vector<int> idx;
  std::vector<double> val;
  void clear() {
    idx.clear();
    val.clear();
  }
  void push(int i, double v) {
    idx.push_back(i);
    val.push_back(v);
  }
};

// Evaluates eta_r(x) for a packed parameter vector. Per-observation dot
// products are cached by `bind`.
class Predictor {
 public:
  Predictor(const ParamLayout& layout, const Eigen::VectorXd& packed) : L_(layout), v_(packed) {}

  template <class Row>
  void bind(const Row& x) {
    x_ = x.data();
    xb_ = 0.0;
    xg_ = 0.0;
    if (L_.kind != ModelKind::CSO) {
      for (int j = 0; j < L_.p; ++j) xb_ += x_[j] * v_[L_.location(j)];
      if (has_dispersion(L_.kind))
        for (int j = 0; j < L_.p; ++j) xg_ += x_[j] * v_[L_.dispersion(j)];
    }
    scale_ = L_.kind == ModelKind::LSC ? std::exp(-xg_) : 1.0;
  }

  // r is 1-based in 1..k-1.
  double eta(int r) const {
    const double theta = v_[L_.threshold(r - 1)];
    switch (L_.kind) {
      case ModelKind::PO: return theta + xb_;
      case ModelKind::CSO: {
        double s = theta;
        for (int j = 0; j < L_.p; ++j) s += x_[j] * v_[L_.category(j, r - 1)];
        return s;
      }
      case ModelKind::LSH: return theta + xb_ + shift_weight(r) * xg_;
      case ModelKind::LSC: return (theta + xb_) * scale_;
    }
    return 0.0;
  }

  void gradient(int r, double eta_r, SparseGrad& g) const {
    g.clear();
    switch (L_.kind) {
      case ModelKind::PO:
        g.push(L_.threshold(r - 1), 1.0);
        for (int j = 0; j < L_.p; ++j) g.push(L_.location(j), x_[j]);
        break;
      case ModelKind::CSO:
        g.push(L_.threshold(r - 1), 1.0);
        for (int j = 0; j < L_.p; ++j) g.push(L_.category(j, r - 1), x_[j]);
        break;
      case ModelKind::LSH: {
        const double w = shift_weight(r);
        g.push(L_.threshold(r - 1), 1.0);
        for (int j = 0; j < L_.p; ++j) g.push(L_.location(j), x_[j]);
        if (w != 0.0)
          for (int j = 0; j < L_.p; ++j) g.push(L_.dispersion(j), w * x_[j]);
        break;
      }
      case ModelKind::LSC:
        g.push(L_.threshold(r - 1), scale_);
        for (int j = 0; j < L_.p; ++j) g.push(L_.location(j), x_[j] * scale_);
        for (int j = 0; j < L_.p; ++j) g.push(L_.dispersion(j), -x_[j] * eta_r);
        break;
    }
  }

  // H += c * d2 eta_r / d params^2. Only LSC is non-linear in its parameters.
  void add_curvature(int r, double eta_r, double c, Eigen::MatrixXd& H) const {
    if (L_.kind != ModelKind::LSC || c == 0.0) return;
    const int t = L_.threshold(r - 1);
    for (int j = 0; j < L_.p; ++j) {
      const int gj = L_.dispersion(j);
      const double a = -c * x_[j] * scale_;
      H(t, gj) += a;
      H(gj, t) += a;
      for (int i = 0; i < L_.p; ++i) {
        const int bi = L_.location(i);
        const double b = -c * x_[i] * x_[j] * scale_;
        H(bi, gj) += b;
        H(gj, bi) += b;
        H(L_.dispersion(i), gj) += c * x_[i] * x_[j] * eta_r;
      }
    }
  }

  double shift_weight(int r) const { return static_cast<double>(r) - 0.5 * static_cast<double>(L_.k); }

 private:
  const ParamLayout& L_;
  const Eigen::VectorXd& v_;
  const double* x_ = nullptr;
  double xb_ = 0.0;
  double xg_ = 0.0;
  double scale_ = 1.0;
};

inline void add_outer(Eigen::MatrixXd& H, const SparseGrad& a, const SparseGrad& b, double c) {
  if (c == 0.0) return;
  for (std::size_t i = 0; i < a.idx.size(); ++i) {
    const double ci = c * a.val[i];
    double* col = H.data();
    const Eigen::Index ld = H.rows();
    for (std::size_t j = 0; j < b.idx.size(); ++j) col[static_cast<Eigen::Index>(b.idx[j]) * ld + a.idx[i]] += ci * b.val[j];
  }
}

}  // namespace detail

enum class Derivatives { None, Gradient, Hessian };

/// Log-likelihood and (optionally) its first and second derivatives at a packed
/// parameter vector. `defined` is false when some observation falls in a region
/// where its observed category has zero or negative probability.
struct LikelihoodEval {
  bool defined = false;
  double value = -INFINITY;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
};

inline LikelihoodEval evaluate(const ParamLayout& L, const Eigen::VectorXd& packed, const Dataset& data,
                               Derivatives level = Derivatives::None) {
  if (packed.size() != L.size()) throw std::invalid_argument("evaluate: packed vector has wrong length");
  if (data.p() != L.p || data.k != L.k) throw std::invalid_argument("evaluate: dataset shape does not match model");
  LikelihoodEval out;
  const int P = L.size();
  if (level != Derivatives::None) out.score = Eigen::VectorXd::Zero(P);
  if (level == Derivatives::Hessian) out.hessian = Eigen::MatrixXd::Zero(P, P);

  detail::Predictor pred(L, packed);
  detail::SparseGrad ga, gb;
  ga.idx.reserve(2 * L.p + 1);
  ga.val.reserve(2 * L.p + 1);
  gb.idx.reserve(2 * L.p + 1);
  gb.val.reserve(2 * L.p + 1);

  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    pred.bind(data.covariates.row(i));
    const int y = data.outcomes[static_cast<std::size_t>(i)];
    const bool has_upper = y < L.k;
    const bool has_lower = y > 1;
    const double a = has_upper ? pred.eta(y) : INFINITY;
    const double b = has_lower ? pred.eta(y - 1) : -INFINITY;

    double ll, da = 0.0, db = 0.0, daa = 0.0, dbb = 0.0, dab = 0.0;
    if (!has_lower) {
      ll = log_sigmoid(a);
      da = sigmoid(-a);
      daa = -logistic_density(a);
    } else if (!has_upper) {
      ll = log_sigmoid(-b);
      db = -sigmoid(b);
      dbb = -logistic_density(b);
    } else {
      ll = log_sigmoid_diff(a, b);
      if (std::isfinite(ll) && level != Derivatives::None) {
        const double D = std::exp(ll);
        const double fa = logistic_density(a), fb = logistic_density(b);
        da = fa / D;
        db = -fb / D;
        daa = fa * (1.0 - 2.0 * sigmoid(a)) / D - da * da;
        dbb = -fb * (1.0 - 2.0 * sigmoid(b)) / D - db * db;
        dab = -da * db;
      }
    }
    if (!std::isfinite(ll) || (has_upper && !std::isfinite(a)) || (has_lower && !std::isfinite(b))) {
      out.defined = false;
      out.value = -INFINITY;
      return out;
    }
    total += ll;
    if (level == Derivatives::None) continue;

    if (has_upper) pred.gradient(y, a, ga);
    if (has_lower) pred.gradient(y - 1, b, gb);
    if (has_upper)
      for (std::size_t t = 0; t < ga.idx.size(); ++t) out.score[ga.idx[t]] += da * ga.val[t];
    if (has_lower)
      for (std::size_t t = 0; t < gb.idx.size(); ++t) out.score[gb.idx[t]] += db * gb.val[t];

    if (level == Derivatives::Hessian) {
      if (has_upper) {
        detail::add_outer(out.hessian, ga, ga, daa);
        pred.add_curvature(y, a, da, out.hessian);
      }
      if (has_lower) {
        detail::add_outer(out.hessian, gb, gb, dbb);
        pred.add_curvature(y - 1, b, db, out.hessian);
      }
      if (has_upper && has_lower) {
        detail::add_outer(out.hessian, ga, gb, dab);
        detail::add_outer(out.hessian, gb, ga, dab);
      }
    }
  }
  out.defined = std::isfinite(total);
  out.value = out.defined ? total : -INFINITY;
  return out;
}

namespace detail {
inline void check_x(const ModelParams& m, Eigen::Index size) {
  if (size != m.num_covariates()) throw std::invalid_argument("covariate vector length does not match model");
}
}  // namespace detail

/// P(Y <= r | x) for r in 1..k-1.
inline double cumulative_prob(const ModelParams& m, const Eigen::VectorXd& x, int r) {
  detail::check_x(m, x.size());
  if (r < 1 || r > m.k - 1) throw std::invalid_argument("cumulative_prob: r outside 1..k-1");
  const ParamLayout L = ParamLayout::of(m);
  const Eigen::VectorXd v = pack(m);
  detail::Predictor pred(L, v);
  pred.bind(x);
  return sigmoid(pred.eta(r));
}

struct CategoryProbs {
  Eigen::VectorXd probs;  // k entries, probs[r-1] = P(Y = r | x)
  bool valid = true;      // false iff some difference of cumulative probabilities is negative
};

inline CategoryProbs category_probs(const ParamLayout& L, const Eigen::VectorXd& packed, const double* x) {
  detail::Predictor pred(L, packed);
  pred.bind(Eigen::Map<const Eigen::VectorXd>(x, L.p));
  CategoryProbs out;
  out.probs.resize(L.k);
  double prev = 0.0;
  for (int r = 1; r < L.k; ++r) {
    const double c = sigmoid(pred.eta(r));
    out.probs[r - 1] = c - prev;
    if (c - prev < 0.0) out.valid = false;
    prev = c;
  }
  out.probs[L.k - 1] = 1.0 - prev;
  return out;
}

inline CategoryProbs category_probs(const ModelParams& m, const Eigen::VectorXd& x) {
  detail::check_x(m, x.size());
  const Eigen::VectorXd v = pack(m);
  return category_probs(ParamLayout::of(m), v, x.data());
}

/// Sum of log P(Y = y_i | x_i); -infinity when undefined.
inline double log_likelihood(const ModelParams& m, const Dataset& data) {
  return evaluate(ParamLayout::of(m), pack(m), data).value;
}

inline Eigen::VectorXd score(const ModelParams& m, const Dataset& data) {
  LikelihoodEval e = evaluate(ParamLayout::of(m), pack(m), data, Derivatives::Gradient);
  if (!e.defined) throw std::domain_error("score: likelihood undefined at these parameters");
  return e.score;
}

/// Negative Hessian of the log-likelihood (analytic).
inline Eigen::MatrixXd observed_information(const ModelParams& m, const Dataset& data) {
  LikelihoodEval e = evaluate(ParamLayout::of(m), pack(m), data, Derivatives::Hessian);
  if (!e.defined) throw std::domain_error("observed_information: likelihood undefined at these parameters");
  return -e.hessian;
}

}  // namespace ordsim
