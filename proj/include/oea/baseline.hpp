#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "oea/solver.hpp"

namespace oea {

// Orthonormal basis Z of the null space of A (n x m, full row rank): the last
// m - n columns of the Q factor of A^T, sign-fixed so each column's first
// non-negligible entry is positive. Verified to satisfy A Z = 0 and
// Z^T Z = I to 1e-10 before returning.
inline MatrixXd orthonormal_nullspace(const MatrixXd& A) {
  const long n = A.rows(), m = A.cols();
  if (m <= n)
    throw SolverError(ErrorKind::BadSpec, "null space basis needs m > n");
  Eigen::HouseholderQR<MatrixXd> qr(A.transpose());
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(m, m);
  MatrixXd Z = Q.rightCols(m - n);
  for (long c = 0; c < Z.cols(); ++c) {
    for (long r = 0; r < m; ++r) {
      if (std::abs(Z(r, c)) > 1e-12) {
        if (Z(r, c) < 0.0) Z.col(c) = -Z.col(c);
        break;
      }
    }
  }
  if ((A * Z).cwiseAbs().maxCoeff() > 1e-10)
    throw SolverError(ErrorKind::InvariantViolation, "null space residual too large");
  MatrixXd gram = Z.transpose() * Z;
  gram -= MatrixXd::Identity(Z.cols(), Z.cols());
  if (gram.cwiseAbs().maxCoeff() > 1e-10)
    throw SolverError(ErrorKind::InvariantViolation, "null space basis not orthonormal");
  count_flops(static_cast<std::uint64_t>(m) * m * m);
  return Z;
}

// Classic ellipsoid iterate {x : (x-c)^T P^{-1} (x-c) <= 1}.
struct StdEllipsoidState {
  VectorXd c;
  MatrixXd P;
  double log_det = 0.0;  // ln det P, tracked in closed form

  long q() const { return c.size(); }

  static StdEllipsoidState ball(VectorXd center, double radius) {
    StdEllipsoidState s;
    const long q = center.size();
    s.c = std::move(center);
    s.P = radius * radius * MatrixXd::Identity(q, q);
    s.log_det = 2.0 * q * std::log(radius);
    return s;
  }
};

// Exact change of (1/2) ln det P for one central cut in dimension q.
inline double central_cut_log_ratio(long q) {
  if (q == 1) return -std::log(2.0);
  const double qd = static_cast<double>(q);
  return 0.5 * (qd * std::log(qd * qd / (qd * qd - 1.0)) +
                std::log((qd - 1.0) / (qd + 1.0)));
}

// Keeps the half {x : g^T x <= g^T c}. g need not be normalized.
inline void central_cut(StdEllipsoidState& s, const VectorXd& g) {
  const long q = s.q();
  const VectorXd Pg = s.P * g;
  const double gPg = g.dot(Pg);
  if (!(gPg > 1e-300))
    throw SolverError(ErrorKind::SingularShape, "ellipsoid flat along cut direction");
  const VectorXd b = Pg / std::sqrt(gPg);
  if (q == 1) {
    s.c -= 0.5 * b;
    s.P *= 0.25;
  } else {
    const double qd = static_cast<double>(q);
    s.c -= b / (qd + 1.0);
    s.P -= (2.0 / (qd + 1.0)) * (b * b.transpose());
    s.P *= qd * qd / (qd * qd - 1.0);
  }
  s.log_det += 2.0 * central_cut_log_ratio(q);
  op_counts().rank1_updates += 1;
  count_flops(3 * static_cast<std::uint64_t>(q) * q);
}

struct StdConfig {
  double tol_feas = 1e-9;
  double tol_strict = 1e-10;
  long max_iter = -1;  // -1: 100000
  int trace_every = 1;
  double ball_radius = 1e3;  // primal start when no usable bounds exist
};

namespace detail {

inline long std_budget(const StdConfig& cfg) {
  return cfg.max_iter >= 0 ? cfg.max_iter : 100000;
}

// Primal side: cut on the most violated row until the center is feasible.
struct PrimalSide {
  const ProblemData* p = nullptr;
  StdEllipsoidState e;
  bool dead = false;

  void init(const Instance& inst, const StdConfig& cfg) {
    p = &inst.p;
    VectorXd center = VectorXd::Zero(p->n);
    double radius = cfg.ball_radius;
    if (inst.bounds) {
      EllipsoidState ref =
          EllipsoidState::derive(*p, VectorXd::Ones(p->m), inst.bounds->l);
      center = ref.y();
      // For box-built systems A A^T >= 2 I, so this ball covers the region.
      if (inst.box) radius = 0.5 * (p->u - inst.bounds->l).norm();
    }
    e = StdEllipsoidState::ball(std::move(center), radius);
  }

  // Returns the feasible center, or nothing after one more cut.
  std::optional<VectorXd> step(const StdConfig& cfg, int& row, double& viol) {
    VectorXd w = p->A.transpose() * e.c - p->u;
    viol = w.maxCoeff(&row);
    if (viol <= cfg.tol_feas) return e.c;
    central_cut(e, p->A.col(row));
    return std::nullopt;
  }
};

// Dual side: search the null-space cone for a ray with u^T lam < 0, scaled
// into the unit ball.
struct DualSide {
  const ProblemData* p = nullptr;
  MatrixXd Z;
  VectorXd Ztu;
  StdEllipsoidState e;
  bool dead = false;

  void init(const Instance& inst) {
    p = &inst.p;
    Z = orthonormal_nullspace(p->A);
    Ztu = Z.transpose() * p->u;
    e = StdEllipsoidState::ball(VectorXd::Zero(Z.cols()), 1.0);
  }

  std::optional<TypeLCertificate> step(const StdConfig& cfg, int& row,
                                       double& viol) {
    VectorXd lam_raw = Z * e.c;
    double scale = lam_raw.cwiseAbs().maxCoeff();
    if (scale > 1e-300) {
      VectorXd lam = lam_raw / scale;
      if (lam.minCoeff() >= -1e-12 && p->u.dot(lam) <= -cfg.tol_strict) {
        row = 0;
        viol = 0.0;
        return make_type_l(*p, std::move(lam));
      }
    }
    // Most violated constraint, violations normalized by row norms.
    int best = -1;  // -1 encodes the u-row
    const double un = Ztu.norm();
    if (un <= 1e-14)
      throw SolverError(ErrorKind::SingularShape, "u is orthogonal to the null space");
    double best_val = e.c.dot(Ztu) / un;
    for (int i = 0; i < p->m; ++i) {
      const double rn = Z.row(i).norm();
      if (rn <= 1e-14) continue;
      const double val = -lam_raw(i) / rn;
      if (val > best_val) {
        best_val = val;
        best = i;
      }
    }
    row = best;  // may be -1
    viol = best_val;
    VectorXd g = best < 0 ? VectorXd(Ztu) : VectorXd(-Z.row(best).transpose());
    central_cut(e, g);
    return std::nullopt;
  }
};

// Rows report the shape at iteration entry, matching the main solver's
// convention; half_log_det must be captured before the step mutates the state.
inline void push_std_trace(std::vector<TraceRow>& trace, const StdConfig& cfg,
                           long iter, double half_log_det, int row,
                           double viol, const char* event, const char* side) {
  if (cfg.trace_every <= 0) return;
  if (iter % cfg.trace_every != 0 && std::string(event) == "none") return;
  TraceRow r;
  r.iter = iter;
  r.f = 0.0;  // no slab product for classic iterates
  r.log_rel_volume = half_log_det;
  r.j = row + 1;  // 0 encodes the dual objective row
  r.max_violation = viol;
  r.event = event;
  r.side = side;
  trace.push_back(std::move(r));
}

}  // namespace detail

// Primal-only classic ellipsoid: Feasible or IterLimit.
inline RunResult run_std_p(const Instance& inst, const StdConfig& cfg = {}) {
  reset_op_counts();
  RunResult res;
  detail::PrimalSide side;
  side.init(inst, cfg);
  const long budget = detail::std_budget(cfg);
  long iter = 0;
  for (; iter < budget; ++iter) {
    int row = -1;
    double viol = 0.0;
    const double entry = 0.5 * side.e.log_det;
    auto x = side.step(cfg, row, viol);
    if (x) {
      detail::push_std_trace(res.trace, cfg, iter, entry, row, viol, "feasible", "P");
      res.status = Status::Feasible;
      res.x = std::move(*x);
      break;
    }
    detail::push_std_trace(res.trace, cfg, iter, entry, row, viol, "none", "P");
  }
  if (!res.x.size()) res.status = Status::IterLimit;
  res.iterations = iter;
  res.ops = op_counts();
  return res;
}

// Dual-only classic ellipsoid: InfeasibleTypeL or IterLimit.
inline RunResult run_std_alt(const Instance& inst, const StdConfig& cfg = {}) {
  reset_op_counts();
  RunResult res;
  detail::DualSide side;
  side.init(inst);
  const long budget = detail::std_budget(cfg);
  long iter = 0;
  for (; iter < budget; ++iter) {
    int row = -1;
    double viol = 0.0;
    const double entry = 0.5 * side.e.log_det;
    auto cert = side.step(cfg, row, viol);
    if (cert) {
      detail::push_std_trace(res.trace, cfg, iter, entry, row, viol,
                             "typeL", "Alt");
      res.status = Status::InfeasibleTypeL;
      res.cert = std::move(cert);
      break;
    }
    detail::push_std_trace(res.trace, cfg, iter, entry, row, viol, "none", "Alt");
  }
  if (!res.cert) res.status = Status::IterLimit;
  res.iterations = iter;
  res.ops = op_counts();
  return res;
}

// Alternation: one primal cut and one dual cut per round, first success wins.
// A side that collapses numerically is retired; the other keeps running.
inline RunResult run_seap(const Instance& inst, const StdConfig& cfg = {}) {
  reset_op_counts();
  RunResult res;
  detail::PrimalSide ps;
  detail::DualSide ds;
  ps.init(inst, cfg);
  ds.init(inst);
  const long budget = detail::std_budget(cfg);
  long iter = 0;
  for (; iter < budget; ++iter) {
    if (ps.dead && ds.dead)
      throw SolverError(ErrorKind::NumericalBreakdown, "both sides collapsed");
    if (!ps.dead) {
      int row = -1;
      double viol = 0.0;
      const double entry = 0.5 * ps.e.log_det;
      try {
        auto x = ps.step(cfg, row, viol);
        if (x) {
          detail::push_std_trace(res.trace, cfg, iter, entry, row, viol,
                                 "feasible", "P");
          res.status = Status::Feasible;
          res.x = std::move(*x);
          res.iterations = iter + 1;
          res.ops = op_counts();
          return res;
        }
        detail::push_std_trace(res.trace, cfg, iter, entry, row, viol, "none", "P");
      } catch (const SolverError& err) {
        if (err.kind() != ErrorKind::SingularShape) throw;
        ps.dead = true;
      }
    }
    if (!ds.dead) {
      int row = -1;
      double viol = 0.0;
      const double entry = 0.5 * ds.e.log_det;
      try {
        auto cert = ds.step(cfg, row, viol);
        if (cert) {
          detail::push_std_trace(res.trace, cfg, iter, entry, row, viol,
                                 "typeL", "Alt");
          res.status = Status::InfeasibleTypeL;
          res.cert = std::move(cert);
          res.iterations = iter + 1;
          res.ops = op_counts();
          return res;
        }
        detail::push_std_trace(res.trace, cfg, iter, entry, row, viol, "none", "Alt");
      } catch (const SolverError& err) {
        if (err.kind() != ErrorKind::SingularShape) throw;
        ds.dead = true;
      }
    }
  }
  res.status = Status::IterLimit;
  res.iterations = iter;
  res.ops = op_counts();
  return res;
}

}  // namespace oea
