#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oea/certificates.hpp"
#include "oea/ellipsoid.hpp"
#include "oea/io.hpp"
#include "oea/problem.hpp"

namespace oea {

struct SolverConfig {
  double tol_feas = 1e-9;
  double tol_f = 1e-12;
  long max_iter = -1;  // -1: derived from the instance, capped at 1e6
  int trace_every = 1;
  std::optional<double> tau_hint;  // enables the potential column in traces
  bool audit_bounds = false;       // re-verify lower-bound witnesses per iteration
  bool collect_stats = true;
  // Called after each completed update with the post-Step-1 state, the final
  // state and the cut row (0-based); used by containment checks.
  std::function<void(const EllipsoidState&, const EllipsoidState&, int)>
      containment_hook;
};

enum class Status { Feasible, InfeasibleTypeL, InfeasibleDeclared, IterLimit };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::Feasible: return "feasible";
    case Status::InfeasibleTypeL: return "infeasible";
    case Status::InfeasibleDeclared: return "infeasible-declared";
    case Status::IterLimit: return "iteration-limit";
  }
  return "?";
}

struct TraceRow {
  long iter = 0;
  double f = 0.0;
  double log_rel_volume = 0.0;
  std::optional<double> phi;
  int j = 0;  // 1-based in output, 0 when not applicable
  double max_violation = 0.0;
  bool l_cert_updated = false;
  std::string event;
  std::string side;  // baseline runs only
};

// Per-update identities captured for verification harnesses.
struct UpdateStats {
  long iter = 0;
  int j = 0;  // 0-based
  double violation = 0.0;
  double gamma = 0.0;
  double f1 = 0.0;     // f after the touch-the-plane shift
  double f2 = 0.0;     // f before the final rescale, must equal m^2/(m^2-1)
  double alpha = 0.0;  // uniform factor in the closed form of the new weights
  double d3_identity_relerr = 0.0;
  double l2_minus_max = 0.0;  // l_j'' - max(l_j, L_j), must be <= ~0
  double vol_log_ratio = 0.0;  // log rel-volume change over the update
  double sqrt_f_over_dj = 0.0;  // sqrt(f/d_j) at the chosen row, pre-update
  double phi_pre = std::numeric_limits<double>::quiet_NaN();
  double phi_post = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
  Status status = Status::IterLimit;
  VectorXd x;  // Feasible
  std::optional<TypeLCertificate> cert;
  long iterations = 0;  // completed ellipsoid updates
  std::vector<TraceRow> trace;
  std::vector<UpdateStats> stats;
  bool degraded = false;  // witness recording hit its capacity
  OpCounts ops;
  BoundsCheck worst_bounds;  // worst residuals seen when auditing
};

inline std::pair<int, double> most_violated(const EllipsoidState& s) {
  const ProblemData& p = s.problem();
  int j = 0;
  double w = (p.A.transpose() * s.y() - p.u).maxCoeff(&j);
  count_flops(static_cast<std::uint64_t>(p.n) * p.m);
  return {j, w};
}

// Iteration budget from the worst-case guarantee with the gap measure floored
// at 1e-9; capped at 1e6.
inline long default_max_iter(const ProblemData& p, const VectorXd& l) {
  const double tau_floor = 1e-9;
  double arg = (p.m + 1.0) * (p.u - l).norm() / (2.0 * p.m * tau_floor);
  double raw = 2.0 * p.m * (p.m + 1.0) * std::log(std::max(arg, 2.0));
  return static_cast<long>(std::min(raw, 1e6));
}

// Worst-case iteration count for an instance whose gap measure tau is known:
// infeasible systems are bounded through the slab widths, feasible box-built
// systems through the box diagonal. Empty when tau (or the needed side data)
// is missing.
inline std::optional<long> theory_iteration_bound(const Instance& inst) {
  if (!inst.meta.tau || !inst.bounds) return std::nullopt;
  const double tau = *inst.meta.tau;
  if (!(tau > 0.0)) return std::nullopt;
  const double m = inst.p.m, n = inst.p.n;
  if (inst.meta.feasible.value_or(false)) {
    if (!inst.box) return std::nullopt;
    const double norm = (inst.box->hi - inst.box->lo).norm();
    const double arg = std::sqrt(inst.box->m_hat() + 2.0) * norm / (2.0 * tau);
    if (arg <= 1.0) return 0;
    return static_cast<long>(std::floor(2.0 * n * (m + 1.0) * std::log(arg)));
  }
  const double arg = (m + 1.0) * (inst.p.u - inst.bounds->l).norm() / (2.0 * m * tau);
  if (arg <= 1.0) return 0;
  return static_cast<long>(std::floor(2.0 * m * (m + 1.0) * std::log(arg)));
}

enum class P2Result { Updated, FeasiblePoint, Certificate, Declared };

namespace detail {

struct P2Out {
  P2Result result = P2Result::Updated;
  VectorXd x;
  std::optional<TypeLCertificate> cert;
};

// One contraction: slide the cut slab until the center touches the violated
// plane, re-center within the slab, grow the slab weight, and rescale back to
// f = 1. The weight growth is applied in the pre-rescale frame (the two
// frames differ by the exact scalar f1), which avoids catastrophic
// cancellation when the center lands near the boundary of the slab.
inline P2Out procedure_2_impl(
    EllipsoidState& s, int j, double w, CertPolicy& pol,
    const SolverConfig& cfg, UpdateStats* us,
    const std::function<void(const EllipsoidState&)>* bounds_audit) {
  const ProblemData& p = s.problem();
  const int m = p.m;
  if (std::abs(s.f() - 1.0) > 1e-8)
    throw SolverError(ErrorKind::PreconditionViolation, "update needs f = 1");
  const double gamma_pre = s.gamma(j);
  if (!(w > 0.0) || w > gamma_pre + 1e-10)
    throw SolverError(ErrorKind::PreconditionViolation,
                      "violation must lie inside the slab radius", j);

  const VectorXd d_pre = s.d();
  const double sjj = gamma_pre * gamma_pre;  // a_j^T B^{-1} a_j at f = 1
  const double dj = d_pre(j);
  const double l_pre_j = s.l()(j);
  const double L_pre = p.A.col(j).dot(s.y()) - gamma_pre;

  // Touch the plane: l_j drops so the new center satisfies a_j^T y = u_j.
  const double f1_pred = 1.0 - (w / gamma_pre) * (w / gamma_pre);
  s.shift_l(j, -2.0 * w / (dj * sjj));
  if (bounds_audit) (*bounds_audit)(s);
  {
    const double touch = p.A.col(j).dot(s.y()) - p.u(j);
    if (std::abs(touch) > 1e-7 * std::max(1.0, std::abs(p.u(j))))
      throw SolverError(ErrorKind::NumericalBreakdown, "center missed the plane", j);
    assert(std::abs(s.f() - f1_pred) <= 1e-8 * std::max(1.0, std::abs(f1_pred)));
  }

  {  // The shifted center may already be feasible.
    double worst = (p.A.transpose() * s.y() - p.u).maxCoeff();
    if (worst <= cfg.tol_feas) {
      P2Out out;
      out.result = P2Result::FeasiblePoint;
      out.x = s.y();
      return out;
    }
  }

  const double f1 = s.f();
  if (f1 <= s.f_zero_band(cfg.tol_f)) {
    // Slab touch collapsed the ellipsoid: convert to a ray (or declare).
    P2Out out;
    auto cert = procedure_1(s, pol, {cfg.tol_feas, cfg.tol_f}, bounds_audit);
    if (cert) {
      out.result = P2Result::Certificate;
      out.cert = std::move(cert);
    } else {
      out.result = P2Result::Declared;
    }
    return out;
  }

  // Re-center: knife-edge placement of the slab floor.
  const double gamma_bar = std::sqrt(f1 * sjj);
  const double v1j = s.v()(j);
  const double beta2 =
      2.0 * (2.0 * v1j - gamma_bar) / ((m - 1.0) * dj * sjj + 2.0);
  s.shift_l(j, beta2);
  if (bounds_audit) (*bounds_audit)(s);

  // Grow the cut row's weight. eta equals f1 times the growth the rescaled
  // frame would use, so the final state matches the nominal sequence exactly.
  const double eta = 2.0 / ((m - 1.0) * sjj);
  s.shift_d_general(j, eta);

  const double f_after = s.f();
  const double f2 = f_after / f1;
  const double f2_target = static_cast<double>(m) * m / (static_cast<double>(m) * m - 1.0);
  if (std::abs(f2 - f2_target) > 1e-6)
    throw SolverError(ErrorKind::NumericalBreakdown,
                      "re-centered volume identity broke down", j);
  assert(std::abs(f2 - f2_target) <= 1e-8);

  if (!(f_after > 0.0))
    throw SolverError(ErrorKind::NumericalBreakdown, "lost positive volume", j);
  s.rescale_unit_f();

  const double alpha_theory = (1.0 - 1.0 / (static_cast<double>(m) * m)) / f1;
  double d3_err = 0.0;
  {
    VectorXd target = d_pre;
    target(j) += eta;
    target *= alpha_theory;
    for (int i = 0; i < m; ++i) {
      double e = std::abs(s.d()(i) - target(i)) / std::max(1.0, std::abs(target(i)));
      d3_err = std::max(d3_err, e);
    }
  }
  if (d3_err > 1e-6)
    throw SolverError(ErrorKind::NumericalBreakdown, "weight closed form diverged", j);
  assert(d3_err <= 1e-8);

  if (us) {
    us->j = j;
    us->violation = w;
    us->gamma = gamma_pre;
    us->f1 = f1;
    us->f2 = f2;
    us->alpha = 1.0 / f_after;  // actual uniform factor applied to d + eta e_j
    us->d3_identity_relerr = d3_err;
    us->l2_minus_max = s.l()(j) - std::max(l_pre_j, L_pre);
    us->sqrt_f_over_dj = std::sqrt(1.0 / dj);
  }
  P2Out out;
  out.result = P2Result::Updated;
  return out;
}

}  // namespace detail

// Bound-maintaining form: keeps the witness matrix in b in sync with l.
inline P2Result procedure_2(EllipsoidState& s, CertifiedBounds& b, int j,
                            SolverConfig cfg = {},
                            std::optional<TypeLCertificate>* cert_out = nullptr,
                            VectorXd* x_out = nullptr) {
  CertPolicy pol = full_policy(b.Lambda);
  const double wj = s.problem().A.col(j).dot(s.y()) - s.problem().u(j);
  auto out = detail::procedure_2_impl(s, j, wj, pol, cfg, nullptr, nullptr);
  b.l = s.l();
  if (cert_out) *cert_out = out.cert;
  if (x_out && out.result == P2Result::FeasiblePoint) *x_out = out.x;
  return out.result;
}

// ---------------------------------------------------------------------------
// Main loop. One pass = feasibility check, degenerate check, witness refresh
// for the most violated row, separation check, then one contraction.
// ---------------------------------------------------------------------------

inline RunResult run_core(
    const Instance& inst, const SolverConfig& cfg, CertPolicy pol,
    const std::function<void(const EllipsoidState&)>* bounds_audit = nullptr) {
  const ProblemData& p = inst.p;
  if (!inst.bounds)
    throw SolverError(ErrorKind::PreconditionViolation,
                      "solver needs certified lower bounds");
  reset_op_counts();
  RunResult res;
  VectorXd d0 = inst.d0.size() == p.m ? inst.d0 : VectorXd::Ones(p.m);
  EllipsoidState s = EllipsoidState::derive(p, d0, inst.bounds->l);
  const long max_iter =
      cfg.max_iter >= 0 ? cfg.max_iter : default_max_iter(p, inst.bounds->l);

  double f_top = 0.0;  // f at iteration entry; rows must not mix frames
  auto push_trace = [&](long iter, const Metrics& mt, int j, double w, bool upd,
                        const char* event) {
    if (cfg.trace_every <= 0) return;
    if (iter % cfg.trace_every != 0 && std::string(event) == "none") return;
    TraceRow row;
    row.iter = iter;
    row.f = f_top;
    row.log_rel_volume = mt.log_rel_volume;
    row.phi = mt.phi;
    row.j = j + 1;
    row.max_violation = w;
    row.l_cert_updated = upd;
    row.event = event;
    res.trace.push_back(std::move(row));
  };

  bool first = true;
  long iter = 0;
  for (;;) {
    auto [j, w] = most_violated(s);
    Metrics mt = s.metrics(cfg.tau_hint);
    f_top = s.f();

    if (w <= cfg.tol_feas) {
      push_trace(iter, mt, j, w, false, "feasible");
      res.status = Status::Feasible;
      res.x = s.y();
      break;
    }

    if (s.f() <= s.f_zero_band(cfg.tol_f)) {
      assert(first);  // reachable only before the first contraction
      auto cert = procedure_1(s, pol, {cfg.tol_feas, cfg.tol_f}, bounds_audit);
      push_trace(iter, mt, j, w, false, cert ? "typeL" : "declared");
      if (cert) {
        res.status = Status::InfeasibleTypeL;
        res.cert = std::move(cert);
      } else {
        res.status = Status::InfeasibleDeclared;
      }
      break;
    }

    if (std::abs(s.f() - 1.0) > 1e-8) {
      assert(first);  // contractions hand back f = 1
      s.rescale_unit_f();
    }

    const double gamma_j = s.gamma(j);
    const double L_j = p.A.col(j).dot(s.y()) - gamma_j;
    const bool upd = s.l()(j) < L_j;
    if (upd && pol.update) pol.update(j, slab_bound_column(s, j));

    if (w > gamma_j + 1e-10) {
      // The whole ellipsoid violates row j; its certified bound beats u_j.
      push_trace(iter, mt, j, w, upd, pol.active() ? "typeL" : "declared");
      if (pol.active()) {
        res.cert =
            make_type_l(p, VectorXd(pol.column(j) + VectorXd::Unit(p.m, j)));
        res.status = Status::InfeasibleTypeL;
      } else {
        res.status = Status::InfeasibleDeclared;
      }
      break;
    }

    if (iter >= max_iter) {
      push_trace(iter, mt, j, w, upd, "none");
      res.status = Status::IterLimit;
      break;
    }

    UpdateStats us;
    us.iter = iter;
    us.phi_pre = mt.phi.value_or(std::numeric_limits<double>::quiet_NaN());
    std::optional<EllipsoidState> mid;
    detail::P2Out out;
    if (cfg.containment_hook) {
      // Re-run the touch shift on a copy to capture the intermediate state.
      EllipsoidState snap = s;
      double sjj = snap.gamma(j) * snap.gamma(j);
      snap.shift_l(j, -2.0 * w / (snap.d()(j) * sjj));
      mid = std::move(snap);
    }
    out = detail::procedure_2_impl(s, j, w, pol, cfg, &us, bounds_audit);
    if (out.result == P2Result::FeasiblePoint) {
      push_trace(iter, mt, j, w, upd, "feasible");
      res.status = Status::Feasible;
      res.x = std::move(out.x);
      break;
    }
    if (out.result != P2Result::Updated) {
      push_trace(iter, mt, j, w, upd,
                 out.result == P2Result::Certificate ? "typeL" : "declared");
      if (out.result == P2Result::Certificate) {
        res.status = Status::InfeasibleTypeL;
        res.cert = std::move(out.cert);
      } else {
        res.status = Status::InfeasibleDeclared;
      }
      break;
    }

    Metrics mt_post = s.metrics(cfg.tau_hint);
    us.vol_log_ratio = mt_post.log_rel_volume - mt.log_rel_volume;
    us.phi_post = mt_post.phi.value_or(std::numeric_limits<double>::quiet_NaN());
    if (cfg.collect_stats) res.stats.push_back(us);
    if (cfg.containment_hook && mid) cfg.containment_hook(*mid, s, j);
    if (bounds_audit) (*bounds_audit)(s);

    push_trace(iter, mt, j, w, upd, "none");
    ++iter;
    first = false;
  }
  res.iterations = iter;
  res.ops = op_counts();
  return res;
}

// Full run: maintains the witness matrix and returns verified certificates.
inline RunResult run_oea(const Instance& inst, const SolverConfig& cfg = {}) {
  if (!inst.bounds)
    throw SolverError(ErrorKind::PreconditionViolation,
                      "solver needs certified lower bounds");
  MatrixXd Lambda = inst.bounds->Lambda;
  CertPolicy pol = full_policy(Lambda);
  RunResult res;
  if (cfg.audit_bounds) {
    BoundsCheck worst;
    std::function<void(const EllipsoidState&)> audit =
        [&](const EllipsoidState& s) {
          CertifiedBounds view{s.l(), Lambda};
          BoundsCheck c = check_certified_bounds(inst.p, view);
          worst.max_eq_residual = std::max(worst.max_eq_residual, c.max_eq_residual);
          worst.min_lambda = std::min(worst.min_lambda, c.min_lambda);
          worst.min_slack = std::min(worst.min_slack, c.min_slack);
          if (!c.ok(1e-8, 1e-12, 1e-8))
            throw SolverError(ErrorKind::InvariantViolation,
                              "lower-bound witnesses drifted out of tolerance");
        };
    res = run_core(inst, cfg, pol, &audit);
    res.worst_bounds = worst;
  } else {
    res = run_core(inst, cfg, pol, nullptr);
  }
  return res;
}

inline std::string trace_csv(const std::vector<TraceRow>& rows,
                             bool with_side = false) {
  std::string out = "iter,f,log_rel_volume,phi,j,max_violation,l_cert_updated,event";
  if (with_side) out += ",side";
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iter);
    out += ',';
    out += fmt_double(r.f);
    out += ',';
    out += fmt_double(r.log_rel_volume);
    out += ',';
    if (r.phi) out += fmt_double(*r.phi);
    out += ',';
    out += std::to_string(r.j);
    out += ',';
    out += fmt_double(r.max_violation);
    out += ',';
    out += r.l_cert_updated ? '1' : '0';
    out += ',';
    out += r.event;
    if (with_side) {
      out += ',';
      out += r.side;
    }
    out += '\n';
  }
  return out;
}

}  // namespace oea
