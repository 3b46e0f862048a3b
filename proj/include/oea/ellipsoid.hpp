#pragma once

#include <cassert>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "oea/errors.hpp"
#include "oea/opcount.hpp"
#include "oea/problem.hpp"

namespace oea {

struct Metrics {
  double rel_volume = 0.0;      // f^(n/2) / sqrt(det(A D A^T)), 0 when f <= 0
  double log_rel_volume = 0.0;  // -inf when f <= 0
  std::optional<double> phi;    // product of mu_i, needs tau
  std::optional<VectorXd> mu;
};

// Weighted-shape ellipsoid
//   E(d, l) = { x : (A^T x - l)^T D (A^T x - u) <= 0 }
//           = { x : (x - y)^T (A D A^T) (x - y) <= f },
// with r = (u + l)/2, v = (u - l)/2, y = (ADA^T)^{-1} A D r, t = A^T y - r and
// f = v^T D v - t^T D t. The inverse shape matrix is kept explicitly and
// maintained by rank-one updates; a full refactorization runs every
// kRefactorEvery updates to stop drift. The identity A D t = 0 ties the two
// representations together.
class EllipsoidState {
 public:
  static constexpr int kRefactorEvery = 50;

  static EllipsoidState derive(const ProblemData& p, VectorXd d, VectorXd l) {
    if (d.size() != p.m || l.size() != p.m)
      throw SolverError(ErrorKind::DimensionMismatch, "d and l must have length m");
    if (!(d.minCoeff() > 0.0))
      throw SolverError(ErrorKind::PreconditionViolation, "weights must be positive");
    EllipsoidState s;
    s.p_ = &p;
    s.d_ = std::move(d);
    s.l_ = std::move(l);
    s.refactor();
    return s;
  }

  const ProblemData& problem() const { return *p_; }
  const VectorXd& d() const { return d_; }
  const VectorXd& l() const { return l_; }
  const VectorXd& r() const { return r_; }
  const VectorXd& v() const { return v_; }
  const VectorXd& y() const { return y_; }
  const VectorXd& t() const { return t_; }
  const MatrixXd& Binv() const { return Binv_; }
  double f() const { return f_; }
  double log_det_B() const { return log_det_B_; }

  // |f| at or below this is treated as f = 0 (point ellipsoid).
  double f_zero_band(double tol_f = 1e-12) const {
    return tol_f * v_.squaredNorm();
  }

  // a_i^T B^{-1} a_i: the d-scale part of the slab radius.
  double shape_quad(int i) const {
    double s = p_->A.col(i).dot(Binv_ * p_->A.col(i));
    count_flops(static_cast<std::uint64_t>(p_->n) * p_->n);
    if (!(s > 0.0))
      throw SolverError(ErrorKind::SingularShape, "shape quadratic not positive", i);
    return s;
  }

  // Half-width of E along a_i. Invariant under positive rescaling of d.
  double gamma(int i) const {
    if (!(f_ > f_zero_band()))
      throw SolverError(ErrorKind::NotPositiveVolume,
                        "slab radius needs positive volume");
    return std::sqrt(f_ * shape_quad(i));
  }

  // d <- d / f, making f exactly 1. The point set is unchanged.
  void rescale_unit_f() {
    if (!(f_ > f_zero_band()))
      throw SolverError(ErrorKind::NotPositiveVolume, "rescale needs f > 0");
    double f = f_;
    d_ /= f;
    Binv_ *= f;
    log_det_B_ -= p_->n * std::log(f);
    f_ = 1.0;
    count_flops(static_cast<std::uint64_t>(p_->m) +
                static_cast<std::uint64_t>(p_->n) * p_->n);
  }

  // d_j <- d_j + delta, keeping caches in closed form. Requires f = 1.
  void shift_d(int j, double delta) {
    if (std::abs(f_ - 1.0) > 1e-8)
      throw SolverError(ErrorKind::PreconditionViolation, "shift_d needs f = 1");
    if (!(delta >= 0.0))
      throw SolverError(ErrorKind::PreconditionViolation, "shift_d needs delta >= 0");
    shift_d_general(j, delta);
  }

  // Same rank-one update without the f = 1 gate; every cache formula below
  // only relies on A D t = 0, not on the scale of f.
  void shift_d_general(int j, double delta) {
    const VectorXd a = p_->A.col(j);
    const VectorXd w = Binv_ * a;
    const double s = a.dot(w);  // = gamma_j^2 at f = 1
    const double theta = delta / (1.0 + delta * s);
    const double tj = t_(j), vj = v_(j);
    f_ = f_ + delta * vj * vj - theta * tj * tj;
    y_ -= theta * tj * w;
    t_ -= (theta * tj) * (p_->A.transpose() * w);
    Binv_ -= theta * w * w.transpose();
    log_det_B_ += std::log1p(delta * s);
    d_(j) += delta;
    op_counts().rank1_updates += 1;
    count_flops(static_cast<std::uint64_t>(p_->n) * p_->n * 2 +
                static_cast<std::uint64_t>(p_->n) * p_->m);
    maybe_refactor();
  }

  // l_j <- l_j + beta for any f; B is unchanged.
  void shift_l(int j, double beta) {
    const VectorXd a = p_->A.col(j);
    const VectorXd w = Binv_ * a;
    const double s = a.dot(w);
    const double dj = d_(j);
    const double tj = t_(j), vj = v_(j);
    f_ += beta * (tj - vj) * dj + 0.25 * beta * beta * dj * dj * s;
    y_ += (0.5 * beta * dj) * w;
    t_ += (0.5 * beta * dj) * (p_->A.transpose() * w);
    t_(j) -= 0.5 * beta;
    l_(j) += beta;
    r_(j) += 0.5 * beta;
    v_(j) -= 0.5 * beta;
    op_counts().rank1_updates += 1;
    count_flops(static_cast<std::uint64_t>(p_->n) * p_->n +
                static_cast<std::uint64_t>(p_->n) * p_->m);
    maybe_refactor();
  }

  // Membership, checked in both representations; they may only disagree
  // inside the tolerance band (the gap between them is exactly the drift of
  // the A D t = 0 identity).
  bool contains(const VectorXd& x, double tol = 1e-8) const {
    const VectorXd ax = p_->A.transpose() * x;
    double q_center = 0.0, q_bilinear = 0.0;
    for (int i = 0; i < p_->m; ++i) {
      const double z = ax(i) - p_->A.col(i).dot(y_);
      q_center += d_(i) * z * z;
      q_bilinear += d_(i) * (ax(i) - l_(i)) * (ax(i) - u()(i));
    }
    count_flops(static_cast<std::uint64_t>(p_->n) * p_->m + 6u * p_->m);
    const double s1 = q_center - f_;
    const double s2 = q_bilinear;
    const double band = tol * std::max(1.0, std::abs(f_));
    const bool in1 = s1 <= band, in2 = s2 <= band;
    if (in1 != in2 && std::min(std::abs(s1), std::abs(s2)) > band)
      throw SolverError(ErrorKind::RepresentationMismatch,
                        "representations disagree on membership");
    return in1 && in2;
  }

  Metrics metrics(std::optional<double> tau = std::nullopt) const {
    Metrics mt;
    if (f_ > f_zero_band()) {
      mt.log_rel_volume = 0.5 * p_->n * std::log(f_) - 0.5 * log_det_B_;
      mt.rel_volume = std::exp(mt.log_rel_volume);
    } else {
      mt.rel_volume = 0.0;
      mt.log_rel_volume = -std::numeric_limits<double>::infinity();
    }
    if (tau) {
      const double floor_mu = *tau * p_->m / (p_->m + 1.0);
      VectorXd mu(p_->m);
      double phi = 1.0;
      for (int i = 0; i < p_->m; ++i) {
        double nat = f_ > 0.0 ? std::sqrt(f_ / d_(i)) : 0.0;
        mu(i) = std::max(nat, floor_mu);
        phi *= mu(i);
      }
      mt.mu = std::move(mu);
      mt.phi = phi;
    }
    return mt;
  }

  // Full recomputation from (d, l); also the drift oracle used by tests.
  void refactor() {
    const ProblemData& p = *p_;
    r_ = 0.5 * (p.u + l_);
    v_ = 0.5 * (p.u - l_);
    MatrixXd B = p.A * d_.asDiagonal() * p.A.transpose();
    Eigen::LLT<MatrixXd> llt(B);
    if (llt.info() != Eigen::Success)
      throw SolverError(ErrorKind::SingularShape, "shape matrix not positive definite");
    MatrixXd L = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < p.n; ++i) {
      if (!(L(i, i) > 1e-6))  // pivot L(i,i)^2 must stay above 1e-12
        throw SolverError(ErrorKind::SingularShape, "factorization pivot underflow");
      log_det += 2.0 * std::log(L(i, i));
    }
    log_det_B_ = log_det;
    Binv_ = llt.solve(MatrixXd::Identity(p.n, p.n));
    y_ = llt.solve(p.A * d_.cwiseProduct(r_));
    t_ = p.A.transpose() * y_ - r_;
    f_ = (d_.array() * (v_.array().square() - t_.array().square())).sum();
    updates_since_refactor_ = 0;
    op_counts().refactorizations += 1;
    count_flops(static_cast<std::uint64_t>(p.n) * p.n * p.m +
                static_cast<std::uint64_t>(p.n) * p.n * p.n / 3);
  }

  // Residual of the A D t = 0 identity; grows with accumulated update drift.
  double identity_residual() const {
    return (p_->A * d_.cwiseProduct(t_)).cwiseAbs().maxCoeff();
  }

 private:
  const VectorXd& u() const { return p_->u; }

  void maybe_refactor() {
    if (++updates_since_refactor_ >= kRefactorEvery) refactor();
  }

  const ProblemData* p_ = nullptr;
  VectorXd d_, l_, r_, v_, y_, t_;
  double f_ = 0.0;
  MatrixXd Binv_;
  double log_det_B_ = 0.0;
  int updates_since_refactor_ = 0;
};

inline EllipsoidState derive_state(const ProblemData& p, const VectorXd& d,
                                   const VectorXd& l) {
  return EllipsoidState::derive(p, d, l);
}

}  // namespace oea
