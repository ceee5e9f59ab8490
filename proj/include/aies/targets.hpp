// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aies/error.hpp"
#include "aies/rng.hpp"

namespace aies {

/// Anything with a dimension and an unnormalized log-density. Returning
/// -infinity outside the support is allowed; trapping is not.
template <class T>
concept LogDensity = requires(const T& t, std::span<const double> x) {
  { t.dim() } -> std::convertible_to<std::size_t>;
  { t.log_density(x) } -> std::convertible_to<double>;
};

/// Type-erased target. Cheap to copy; evaluations are pure.
class TargetDensity {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  TargetDensity(std::size_t dim, Fn fn, std::string name = "custom")
      : dim_(dim), fn_(std::move(fn)), name_(std::move(name)) {
    if (dim_ == 0) throw InvalidParameter("target dimension must be positive");
  }

  template <LogDensity T>
    requires(!std::same_as<std::remove_cvref_t<T>, TargetDensity>)
  TargetDensity(T target, std::string name)  // NOLINT
      : dim_(target.dim()),
        fn_([t = std::move(target)](std::span<const double> x) { return t.log_density(x); }),
        name_(std::move(name)) {}

  std::size_t dim() const noexcept { return dim_; }
  double log_density(std::span<const double> x) const { return fn_(x); }
  const std::string& name() const noexcept { return name_; }

 private:
  std::size_t dim_;
  Fn fn_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Standard Gaussian

inline double std_gaussian_log_density(std::span<const double> x) noexcept {
  double s = 0.0;
  for (double v : x) s += v * v;
  return -0.5 * s;
}

struct StdGaussian {
  std::size_t n;
  std::size_t dim() const noexcept { return n; }
  double log_density(std::span<const double> x) const noexcept {
    return std_gaussian_log_density(x);
  }
};

// ---------------------------------------------------------------------------
// AR(1)

/// Lag-1 autoregressive Gaussian with unit marginals: x1 ~ N(0,1),
/// x_i | x_{i-1} ~ N(alpha x_{i-1}, beta^2), beta^2 = 1 - alpha^2.
struct Ar1Spec {
  double alpha = 0.9;
  double beta = std::sqrt(1.0 - 0.81);
  std::size_t dim = 10;

  static Ar1Spec make(double alpha, std::size_t dim) {
    if (!(alpha > -1.0 && alpha < 1.0)) throw InvalidParameter("AR(1) alpha must lie in (-1, 1)");
    if (dim == 0) throw InvalidParameter("AR(1) dimension must be positive");
    return Ar1Spec{alpha, std::sqrt(1.0 - alpha * alpha), dim};
  }
};

inline double ar1_log_density(std::span<const double> x, const Ar1Spec& spec) noexcept {
  if (x.empty()) return 0.0;
  double quad = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double r = x[i] - spec.alpha * x[i - 1];
    quad += r * r;
  }
  return -0.5 * x[0] * x[0] - quad / (2.0 * spec.beta * spec.beta);
}

struct Ar1Target {
  Ar1Spec spec;
  std::size_t dim() const noexcept { return spec.dim; }
  double log_density(std::span<const double> x) const noexcept { return ar1_log_density(x, spec); }
};

/// q1 = x1, q_i = (x_i - alpha x_{i-1}) / beta. Maps AR(1) onto N(0, I).
inline std::vector<double> whiten(std::span<const double> x, const Ar1Spec& spec) {
  std::vector<double> q(x.size());
  if (x.empty()) return q;
  q[0] = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) q[i] = (x[i] - spec.alpha * x[i - 1]) / spec.beta;
  return q;
}

inline std::vector<double> unwhiten(std::span<const double> q, const Ar1Spec& spec) {
  std::vector<double> x(q.size());
  if (q.empty()) return x;
  x[0] = q[0];
  for (std::size_t i = 1; i < q.size(); ++i) x[i] = spec.alpha * x[i - 1] + spec.beta * q[i];
  return x;
}

/// Exact draw by forward recursion.
inline std::vector<double> ar1_exact_sample(const Ar1Spec& spec, Engine& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> x(spec.dim);
  x[0] = normal(rng);
  for (std::size_t i = 1; i < spec.dim; ++i) x[i] = spec.alpha * x[i - 1] + spec.beta * normal(rng);
  return x;
}

// ---------------------------------------------------------------------------
// Rosenbrock

/// Negative of the n/2-fold replicated Rosenbrock function
/// sum_i 100 (x_{2i-1}^2 - x_{2i})^2 + (x_{2i-1} - 1)^2, so exp() of this
/// is the (integrable) target.
inline double rosenbrock_log_density(std::span<const double> x) {
  if (x.size() % 2 != 0) throw InvalidParameter("Rosenbrock dimension must be even");
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); i += 2) {
    const double a = x[i] * x[i] - x[i + 1];
    const double b = x[i] - 1.0;
    f += 100.0 * a * a + b * b;
  }
  return -f;
}

struct Rosenbrock {
  std::size_t n;
  explicit Rosenbrock(std::size_t dim) : n(dim) {
    if (n == 0 || n % 2 != 0) throw InvalidParameter("Rosenbrock dimension must be even and positive");
  }
  std::size_t dim() const noexcept { return n; }
  double log_density(std::span<const double> x) const { return rosenbrock_log_density(x); }
};

// ---------------------------------------------------------------------------
// Affine maps

/// x -> A x + b with A invertible.
class AffineMap {
 public:
  AffineMap(Eigen::MatrixXd matrix, Eigen::VectorXd offset)
      : matrix_(std::move(matrix)), offset_(std::move(offset)) {
    if (matrix_.rows() != matrix_.cols() || matrix_.rows() != offset_.size() || matrix_.rows() == 0)
      throw InvalidInput("affine map: matrix must be square and match the offset length");
    if (!matrix_.allFinite() || !offset_.allFinite())
      throw InvalidParameter("affine map: entries must be finite");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(matrix_);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || smax / smin > 1e12)
      throw InvalidParameter("affine map: matrix is singular (condition number above 1e12)");
    lu_ = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(matrix_);
  }

  static AffineMap identity(std::size_t n) {
    return AffineMap(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                     Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  const Eigen::VectorXd& offset() const noexcept { return offset_; }

  Eigen::VectorXd apply(std::span<const double> x) const {
    check(x.size());
    return matrix_ * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())) +
           offset_;
  }

  /// A^{-1} (q - b)
  Eigen::VectorXd inverse_apply(std::span<const double> q) const {
    check(q.size());
    const Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
    return lu_->solve(qv - offset_);
  }

 private:
  void check(std::size_t n) const {
    if (n != dim()) throw InvalidInput("affine map: dimension mismatch");
  }

  Eigen::MatrixXd matrix_;
  Eigen::VectorXd offset_;
  std::shared_ptr<const Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
};

/// The AR(1) whitening transform as an AffineMap (lower bidiagonal, b = 0).
inline AffineMap whitening_map(const Ar1Spec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.dim);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, n);
  psi(0, 0) = 1.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    psi(i, i) = 1.0 / spec.beta;
    psi(i, i - 1) = -spec.alpha / spec.beta;
  }
  return AffineMap(std::move(psi), Eigen::VectorXd::Zero(n));
}

/// Push-forward of a target under q = A x + b: log pi'(q) = log pi(A^{-1}(q - b)).
/// The -log det A term is dropped; it cancels in every acceptance ratio.
template <LogDensity Inner>
class AffineWrapped {
 public:
  AffineWrapped(Inner inner, AffineMap map) : inner_(std::move(inner)), map_(std::move(map)) {
    if (inner_.dim() != map_.dim()) throw InvalidInput("affine_wrap: dimension mismatch");
  }
  std::size_t dim() const noexcept { return map_.dim(); }
  double log_density(std::span<const double> q) const {
    const Eigen::VectorXd x = map_.inverse_apply(q);
    return inner_.log_density(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }
  const AffineMap& map() const noexcept { return map_; }
  const Inner& inner() const noexcept { return inner_; }

 private:
  Inner inner_;
  AffineMap map_;
};

template <LogDensity Inner>
AffineWrapped<Inner> affine_wrap(Inner inner, AffineMap map) {
  return AffineWrapped<Inner>(std::move(inner), std::move(map));
}

}  // namespace aies
