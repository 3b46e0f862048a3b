#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "oea/ellipsoid.hpp"
#include "oea/io.hpp"
#include "oea/problem.hpp"

namespace oea {

// Dual ray for A^T x <= u: A lam = 0, lam >= 0, u^T lam < 0. Its existence
// refutes feasibility, and checking it needs only one matrix-vector product.
struct TypeLCertificate {
  VectorXd lambda_bar;
  double residual_eq = 0.0;  // ||A lam||_inf
  double min_entry = 0.0;
  double u_dot = 0.0;  // u^T lam, must be strictly negative
};

struct TypeLCheck {
  bool ok = false;
  double eq = 0.0;
  double min_entry = 0.0;
  double u_dot = 0.0;
};

inline TypeLCheck verify_type_l(const ProblemData& p, const VectorXd& lam,
                                double tol = 1e-8, double tol_strict = 1e-10) {
  if (lam.size() != p.m)
    throw SolverError(ErrorKind::DimensionMismatch, "certificate length mismatch");
  TypeLCheck c;
  c.eq = (p.A * lam).cwiseAbs().maxCoeff();
  c.min_entry = lam.minCoeff();
  c.u_dot = p.u.dot(lam);
  const double scale = std::max(1.0, lam.cwiseAbs().sum());
  c.ok = c.eq <= tol * scale && c.min_entry >= -tol && c.u_dot <= -tol_strict;
  count_flops(static_cast<std::uint64_t>(p.n) * p.m + 2u * p.m);
  return c;
}

inline TypeLCertificate make_type_l(const ProblemData& p, VectorXd lam,
                                    double tol = 1e-8,
                                    double tol_strict = 1e-10) {
  TypeLCheck c = verify_type_l(p, lam, tol, tol_strict);
  if (!c.ok)
    throw SolverError(ErrorKind::NotACertificate,
                      "candidate ray fails dual-ray verification");
  TypeLCertificate out;
  out.lambda_bar = std::move(lam);
  out.residual_eq = c.eq;
  out.min_entry = c.min_entry;
  out.u_dot = c.u_dot;
  return out;
}

// Witness that a_i^T x >= L for all feasible x: A lam = -a_i, lam >= 0,
// -lam^T u >= L.
struct BoundCertificate {
  int i = 0;  // constraint index, 0-based
  double L = 0.0;
  VectorXd lambda_tilde;
};

inline bool verify_bound_certificate(const ProblemData& p,
                                     const BoundCertificate& bc,
                                     double tol = 1e-9) {
  double eq = (p.A * bc.lambda_tilde + p.A.col(bc.i)).cwiseAbs().maxCoeff();
  double slack = -bc.lambda_tilde.dot(p.u) - bc.L;
  return eq <= tol && slack >= -tol && bc.lambda_tilde.minCoeff() >= -1e-12;
}

// The raw column update: lam_hat = D (gamma_i t - A^T B^{-1} a_i), which
// satisfies A lam_hat = -a_i up to the A D t = 0 identity. Requires f = 1 so
// gamma_i^2 = a_i^T B^{-1} a_i.
inline VectorXd slab_bound_column(const EllipsoidState& s, int i) {
  if (std::abs(s.f() - 1.0) > 1e-8)
    throw SolverError(ErrorKind::PreconditionViolation,
                      "slab bound columns need f = 1");
  const ProblemData& p = s.problem();
  const VectorXd w = s.Binv() * p.A.col(i);
  const double gamma = std::sqrt(std::max(0.0, p.A.col(i).dot(w)));
  VectorXd lam_hat =
      s.d().cwiseProduct(gamma * s.t() - p.A.transpose() * w);
  count_flops(static_cast<std::uint64_t>(p.n) * p.n +
              static_cast<std::uint64_t>(p.n) * p.m + 3u * p.m);
  return lam_hat;
}

// Splits lam_hat against the current witness matrix: the negative part is
// routed through existing columns, the positive part stays. The result
// certifies L_i = a_i^T y - gamma_i, the smallest value of a_i^T x over E.
inline BoundCertificate certify_slab_bound(const EllipsoidState& s,
                                           const CertifiedBounds& b, int i) {
  const ProblemData& p = s.problem();
  VectorXd lam_hat = slab_bound_column(s, i);
  VectorXd neg = (-lam_hat).cwiseMax(0.0);
  VectorXd pos = lam_hat.cwiseMax(0.0);
  BoundCertificate bc;
  bc.i = i;
  bc.lambda_tilde = b.Lambda * neg + pos;
  bc.L = p.A.col(i).dot(s.y()) - s.gamma(i);
  op_counts().lambda_col_updates += 1;
  count_flops(static_cast<std::uint64_t>(p.m) * p.m);
  if (!verify_bound_certificate(p, bc, 1e-9))
    throw SolverError(ErrorKind::NumericalBreakdown,
                      "slab bound certificate failed verification", i);
  return bc;
}

// Lifts a lower-bound witness for a row with L > u into a dual ray by adding
// the unit vector of the violated row.
inline TypeLCertificate type_l_from_bound_violation(const ProblemData& p,
                                                    const VectorXd& lam_col,
                                                    int i) {
  VectorXd ray = lam_col;
  ray(i) += 1.0;
  return make_type_l(p, std::move(ray));
}

// Certificate bookkeeping policy shared by the solver variants. `update`
// consumes a raw column refresh (index + lam_hat); `column` materializes the
// effective witness column for an exit. Either may be empty: declare-only
// runs carry neither.
struct CertPolicy {
  std::function<void(int, const VectorXd&)> update;
  std::function<VectorXd(int)> column;
  std::function<bool()> is_active;  // optional dynamic override
  bool active() const {
    return is_active ? is_active() : static_cast<bool>(column);
  }
};

inline CertPolicy full_policy(MatrixXd& Lambda) {
  CertPolicy pol;
  pol.update = [&Lambda](int j, const VectorXd& lam_hat) {
    VectorXd neg = (-lam_hat).cwiseMax(0.0);
    VectorXd pos = lam_hat.cwiseMax(0.0);
    Lambda.col(j) = Lambda * neg + pos;
    op_counts().lambda_col_updates += 1;
    count_flops(static_cast<std::uint64_t>(Lambda.rows()) * Lambda.rows());
  };
  pol.column = [&Lambda](int j) -> VectorXd { return Lambda.col(j); };
  return pol;
}

inline CertPolicy declare_policy() { return CertPolicy{}; }

// ---------------------------------------------------------------------------
// Degenerate-to-ray conversion. Input: a state with f <= 0 whose center still
// violates some constraint. Output: a dual ray (or nothing in declare mode).
//
// Shape: a latent l_j > u_j row lifts immediately; otherwise grow one slab
// until the ellipsoid collapses to a point, shrink a satisfied slab just
// enough that some violated row sits strictly outside its own slab radius,
// rescale, then certify that row's lower bound and lift.
// ---------------------------------------------------------------------------

struct Procedure1Config {
  double tol_feas = 1e-9;
  double tol_f = 1e-12;
};

inline std::optional<TypeLCertificate> procedure_1(
    EllipsoidState& s, CertPolicy& pol, Procedure1Config cfg = {},
    const std::function<void(const EllipsoidState&)>* bounds_audit = nullptr) {
  const ProblemData& p = s.problem();
  const VectorXd& u = p.u;

  if (s.f() > s.f_zero_band(cfg.tol_f))
    throw SolverError(ErrorKind::PreconditionTypeQ, "state still has volume");
  {
    double worst = (p.A.transpose() * s.y() - u).maxCoeff();
    if (!(worst > cfg.tol_feas))
      throw SolverError(ErrorKind::PreconditionTypeQ, "center is feasible");
  }

  // A row whose certified lower bound already exceeds u lifts as is.
  for (int j = 0; j < p.m; ++j) {
    if (s.l()(j) > u(j)) {
      if (!pol.active()) return std::nullopt;
      return make_type_l(p, VectorXd(pol.column(j) + VectorXd::Unit(p.m, j)));
    }
  }

  // Pick the most violated row and grow its slab until f = 0.
  VectorXd w_all = p.A.transpose() * s.y() - u;
  int i = 0;
  double w = w_all.maxCoeff(&i);
  const double si = s.shape_quad(i);
  const double di = s.d()(i);
  const double beta =
      (2.0 * w + 2.0 * std::sqrt(std::max(0.0, w * w - s.f() * si))) / (di * si);
  if (!(beta > 0.0))
    throw SolverError(ErrorKind::NumericalBreakdown, "collapse shift not positive", i);
  s.shift_l(i, -beta);  // collapse to a point
  if (bounds_audit) (*bounds_audit)(s);
  {
    const double fscale = std::max(1.0, 0.25 * beta * beta * di * di * si);
    if (std::abs(s.f()) > 1e-7 * fscale)
      throw SolverError(ErrorKind::NumericalBreakdown, "collapse missed f = 0");
  }

  // Most satisfied row j and most violated row k at the new center.
  w_all = p.A.transpose() * s.y() - u;
  int j = 0, k = 0;
  double wj = w_all.minCoeff(&j);
  double delta = w_all.maxCoeff(&k);
  if (!(wj <= cfg.tol_feas))
    throw SolverError(ErrorKind::NumericalBreakdown, "no satisfied row at point state");
  if (!(delta > 0.0))
    throw SolverError(ErrorKind::NumericalBreakdown, "no violated row at point state");

  // Choose eps > 0 keeping f positive while row k stays outside its slab by
  // at least delta/2. Solving h(eps) = delta/2 after squaring gives
  // Aq eps^2 + bq eps + Cq = 0 with Aq <= 0 by Cauchy-Schwarz; the positive
  // root in cancellation-free form is 2 Cq / (bq + sqrt(bq^2 - 4 Aq Cq)).
  const double dj = s.d()(j);
  const VectorXd bj = s.Binv() * p.A.col(j);
  const double sjj = p.A.col(j).dot(bj);
  const double skj = p.A.col(k).dot(bj);
  const double skk = s.shape_quad(k);
  const double c1 = 0.5 * dj * skj;
  const double c2 = std::max(0.0, -wj) * dj;
  const double c3 = 0.25 * dj * dj * sjj;
  const double Aq = c1 * c1 - c3 * skk;
  const double bq = delta * c1 + c2 * skk;
  const double Cq = 0.25 * delta * delta;
  double eps;
  if (Aq < -1e-14 * c3 * skk || bq > 0.0) {
    const double disc = std::sqrt(std::max(0.0, bq * bq - 4.0 * Aq * Cq));
    eps = 2.0 * Cq / (bq + disc);
  } else {
    // Anti-parallel degenerate branch: h exceeds delta/2 for every eps.
    eps = 1.0 / dj;
  }
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw SolverError(ErrorKind::NumericalBreakdown, "no usable slab shrink");

  s.shift_l(j, -eps);  // reopen a sliver of volume
  if (bounds_audit) (*bounds_audit)(s);
  if (!(s.f() > 0.0))
    throw SolverError(ErrorKind::NumericalBreakdown, "shrink lost positive volume");
  s.rescale_unit_f();

  // The construction promises row k now sits outside its slab by ~delta/2.
  const double viol_k = p.A.col(k).dot(s.y()) - u(k);
  const double margin = viol_k - s.gamma(k);
  if (!(margin >= 0.25 * delta))
    throw SolverError(ErrorKind::NumericalBreakdown, "slab separation too small", k);

  if (!pol.active()) return std::nullopt;

  // Certify the lower bound of row k and lift.
  VectorXd lam_hat = slab_bound_column(s, k);
  pol.update(k, lam_hat);
  return make_type_l(p, VectorXd(pol.column(k) + VectorXd::Unit(p.m, k)));
}

// Bound-maintaining wrapper: keeps the witness matrix in b and returns the ray.
inline TypeLCertificate procedure_1(EllipsoidState& s, CertifiedBounds& b,
                                    Procedure1Config cfg = {}) {
  CertPolicy pol = full_policy(b.Lambda);
  auto out = procedure_1(s, pol, cfg);
  b.l = s.l();
  return *out;
}

// True when the whole ellipsoid lies strictly beyond constraint i.
inline bool verify_type_e(const EllipsoidState& s, int i) {
  const ProblemData& p = s.problem();
  return p.A.col(i).dot(s.y()) - s.gamma(i) > p.u(i);
}

inline std::string certificate_json(const TypeLCertificate& c) {
  detail::JsonWriter w;
  w.begin_obj();
  w.key("status");
  w.value(std::string("infeasible"));
  w.key("lambda_bar");
  w.vector(c.lambda_bar);
  w.key("residuals");
  w.begin_obj();
  w.key("eq");
  w.value(c.residual_eq);
  w.key("min_entry");
  w.value(c.min_entry);
  w.key("u_dot");
  w.value(c.u_dot);
  w.end_obj();
  w.end_obj();
  return w.str();
}

}  // namespace oea
