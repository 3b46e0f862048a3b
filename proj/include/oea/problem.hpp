#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oea/errors.hpp"
#include "oea/opcount.hpp"
#include "oea/rng.hpp"

namespace oea {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Inequality system A^T x <= u. Columns a_1..a_m of A are the constraint
// normals; they must be unit length, m > n, and A must have full row rank so
// that the feasible region contains no line and infeasibility always has a
// finite witness.
struct ProblemData {
  int n = 0;
  int m = 0;
  MatrixXd A;  // n x m
  VectorXd u;  // m

  const VectorXd col(int j) const { return A.col(j); }

  void validate() const {
    if (A.rows() != n || A.cols() != m || u.size() != m)
      throw SolverError(ErrorKind::DimensionMismatch,
                        "A must be n x m and u length m");
    if (m <= n)
      throw SolverError(ErrorKind::BadSpec, "need more constraints than variables");
    for (int j = 0; j < m; ++j) {
      double nrm = A.col(j).norm();
      if (std::abs(nrm - 1.0) > 1e-12)
        throw SolverError(ErrorKind::InvariantViolation,
                          "column " + std::to_string(j + 1) + " is not unit length",
                          j);
    }
    Eigen::JacobiSVD<MatrixXd> svd(A);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(std::min(n, m) - 1);
    if (!(smin > 1e-10 * smax))
      throw SolverError(ErrorKind::RankDeficient, "constraint normals do not span");
  }
};

// Box-with-cuts description: general cuts A_hat^T x <= u_hat inside the box
// lo <= x <= hi.
struct BoxSystem {
  MatrixXd A_hat;  // n x m_hat (may have zero columns count)
  VectorXd u_hat;  // m_hat
  VectorXd lo;     // n
  VectorXd hi;     // n

  int m_hat() const { return static_cast<int>(u_hat.size()); }
};

// Columnwise dual witnesses for lower bounds: A * Lambda = -A, Lambda >= 0,
// and -Lambda^T u >= l, so l_i <= a_i^T x for every feasible x.
struct CertifiedBounds {
  VectorXd l;       // m
  MatrixXd Lambda;  // m x m, column i certifies l_i
};

struct BoundsCheck {
  double max_eq_residual = 0.0;  // ||A*Lambda + A||_max
  double min_lambda = 0.0;       // most negative Lambda entry
  double min_slack = 0.0;        // min_i (-Lambda^T u - l)_i
  bool ok(double tol_eq = 1e-9, double tol_nonneg = 1e-12,
          double tol_lb = 1e-9) const {
    return max_eq_residual <= tol_eq && min_lambda >= -tol_nonneg &&
           min_slack >= -tol_lb;
  }
};

inline BoundsCheck check_certified_bounds(const ProblemData& p,
                                          const CertifiedBounds& b) {
  if (b.l.size() != p.m || b.Lambda.rows() != p.m || b.Lambda.cols() != p.m)
    throw SolverError(ErrorKind::DimensionMismatch, "bounds shape mismatch");
  BoundsCheck r;
  MatrixXd eq = p.A * b.Lambda + p.A;
  r.max_eq_residual = eq.cwiseAbs().maxCoeff();
  r.min_lambda = b.Lambda.minCoeff();
  r.min_slack = (-(b.Lambda.transpose() * p.u) - b.l).minCoeff();
  count_flops(static_cast<std::uint64_t>(p.m) * p.m * (p.n + 1));
  return r;
}

inline bool verify_certified_bounds(const ProblemData& p,
                                    const CertifiedBounds& b,
                                    double tol = 1e-9) {
  BoundsCheck r = check_certified_bounds(p, b);
  return r.ok(tol, 1e-12, tol);
}

struct InstanceMeta {
  std::optional<double> tau;
  std::optional<double> rho;  // informational only, never computed here
  std::optional<bool> feasible;
};

struct Instance {
  ProblemData p;
  std::optional<CertifiedBounds> bounds;
  VectorXd d0;  // initial positive weights, default all ones
  InstanceMeta meta;
  std::optional<BoxSystem> box;  // present when built from a box description

  void ensure_d0() {
    if (d0.size() != p.m) d0 = VectorXd::Ones(p.m);
  }
};

// Scales columns of A to unit length, dividing the matching u entries by the
// same factor. Columns already unit length (within 1e-12) are left untouched
// so the operation is idempotent bit for bit.
inline void normalize_columns(MatrixXd& A, VectorXd& u) {
  if (A.cols() != u.size())
    throw SolverError(ErrorKind::DimensionMismatch, "A and u disagree on m");
  for (int j = 0; j < A.cols(); ++j) {
    double nrm = A.col(j).norm();
    if (nrm < 1e-14)
      throw SolverError(ErrorKind::ZeroColumn,
                        "column " + std::to_string(j + 1) + " is zero", j);
    if (std::abs(nrm - 1.0) <= 1e-12) continue;
    A.col(j) /= nrm;
    u(j) /= nrm;
  }
}

namespace detail {

// max / min of a^T x over the box [lo, hi].
inline double box_max(const VectorXd& a, const VectorXd& lo, const VectorXd& hi) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += a(k) > 0 ? a(k) * hi(k) : a(k) * lo(k);
  return s;
}

inline double box_min(const VectorXd& a, const VectorXd& lo, const VectorXd& hi) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += a(k) > 0 ? a(k) * lo(k) : a(k) * hi(k);
  return s;
}

}  // namespace detail

// Builds the full system [A_hat | I | -I] with u = (u_hat, hi, -lo) and
// closed-form lower-bound witnesses: a general column is certified by the box
// rows that realize its box minimum, a box row by its opposite row.
// Throws RedundantConstraint if a cut cannot touch the box and
// ImmediateInfeasible if a cut excludes the whole box (l_i > u_i).
inline Instance from_box(const BoxSystem& box_in) {
  BoxSystem box = box_in;
  const int n = static_cast<int>(box.lo.size());
  const int mh = box.m_hat();
  if (box.hi.size() != n || (mh > 0 && box.A_hat.rows() != n))
    throw SolverError(ErrorKind::DimensionMismatch, "box shape mismatch");
  for (int k = 0; k < n; ++k)
    if (!(box.lo(k) < box.hi(k)))
      throw SolverError(ErrorKind::BadSpec, "box needs lo < hi in every coordinate");
  if (mh > 0) normalize_columns(box.A_hat, box.u_hat);

  const int m = mh + 2 * n;
  Instance inst;
  inst.p.n = n;
  inst.p.m = m;
  inst.p.A.resize(n, m);
  inst.p.u.resize(m);
  if (mh > 0) inst.p.A.leftCols(mh) = box.A_hat;
  inst.p.A.middleCols(mh, n) = MatrixXd::Identity(n, n);
  inst.p.A.rightCols(n) = -MatrixXd::Identity(n, n);
  if (mh > 0) inst.p.u.head(mh) = box.u_hat;
  inst.p.u.segment(mh, n) = box.hi;
  inst.p.u.tail(n) = -box.lo;

  CertifiedBounds b;
  b.l.resize(m);
  b.Lambda = MatrixXd::Zero(m, m);
  for (int i = 0; i < mh; ++i) {
    VectorXd a = box.A_hat.col(i);
    double mx = detail::box_max(a, box.lo, box.hi);
    double mn = detail::box_min(a, box.lo, box.hi);
    if (box.u_hat(i) > mx + 1e-12)
      throw SolverError(ErrorKind::RedundantConstraint,
                        "cut " + std::to_string(i + 1) + " cannot touch the box", i);
    b.l(i) = mn;
    // a^- on the identity rows, a^+ on the negated rows: A*lambda = -a.
    for (int k = 0; k < n; ++k) {
      b.Lambda(mh + k, i) = std::max(-a(k), 0.0);
      b.Lambda(mh + n + k, i) = std::max(a(k), 0.0);
    }
    if (b.l(i) > box.u_hat(i)) {
      VectorXd ray = b.Lambda.col(i);
      ray(i) += 1.0;
      throw ImmediateInfeasible(i + 1, ray, inst.p.A, inst.p.u);
    }
  }
  for (int k = 0; k < n; ++k) {
    b.l(mh + k) = box.lo(k);
    b.Lambda(mh + n + k, mh + k) = 1.0;  // x_k <= hi_k certified by -x_k row
    b.l(mh + n + k) = -box.hi(k);
    b.Lambda(mh + k, mh + n + k) = 1.0;
  }

  inst.bounds = std::move(b);
  inst.box = box;
  inst.ensure_d0();
  inst.p.validate();
  return inst;
}

// ---------------------------------------------------------------------------
// Exact inner-radius / infeasibility-gap measure.
//
// tau = |z*| with z* = max_x min_i (u_i - a_i^T x): the largest inscribed-ball
// radius when the system is feasible, the smallest uniform relaxation of u
// that restores feasibility otherwise. Solved exactly as the LP
//   max z  s.t.  a_i^T x + z <= u_i
// by enumerating all (n+1)-subsets of constraints as candidate vertex bases.
// ---------------------------------------------------------------------------

struct TauCaps {
  int max_m = 12;
  int max_n = 6;
};

struct TauResult {
  double tau = 0.0;
  double z_star = 0.0;
  bool feasible = false;  // z_star >= 0
};

inline TauResult estimate_tau(const ProblemData& p, TauCaps caps = {}) {
  if (p.m > caps.max_m || p.n > caps.max_n)
    throw SolverError(ErrorKind::TooLarge, "instance exceeds enumeration caps");
  const int n = p.n, m = p.m, k = n + 1;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;

  double best = -std::numeric_limits<double>::infinity();
  const double ftol = 1e-9 * std::max(1.0, p.u.cwiseAbs().maxCoeff());
  MatrixXd M(k, k);
  VectorXd rhs(k);
  bool have_vertex = false;

  for (;;) {
    for (int r = 0; r < k; ++r) {
      M.row(r).head(n) = p.A.col(idx[r]).transpose();
      M(r, n) = 1.0;
      rhs(r) = p.u(idx[r]);
    }
    Eigen::FullPivLU<MatrixXd> lu(M);
    if (lu.isInvertible()) {
      VectorXd xz = lu.solve(rhs);
      double z = xz(n);
      bool ok = true;
      for (int i = 0; i < m && ok; ++i)
        if (p.A.col(i).dot(xz.head(n)) + z > p.u(i) + ftol) ok = false;
      if (ok) {
        have_vertex = true;
        best = std::max(best, z);
      }
    }
    // next combination in lexicographic order
    int pos = k - 1;
    while (pos >= 0 && idx[pos] == m - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int r = pos + 1; r < k; ++r) idx[r] = idx[r - 1] + 1;
  }

  if (!have_vertex)
    throw SolverError(ErrorKind::AssumptionViolated,
                      "relaxation LP has no vertex optimum; normals do not span");
  TauResult out;
  out.z_star = best;
  out.tau = std::abs(best);
  out.feasible = best >= 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Seeded instance generators (byte-deterministic for a fixed seed).
// ---------------------------------------------------------------------------

enum class GenKind { FeasibleBox, InfeasibleShifted, RandomCone };

struct GenSpec {
  GenKind kind = GenKind::FeasibleBox;
  int n = 2;
  int m_hat = 0;        // extra general cuts
  double gap = 1.0;     // InfeasibleShifted: separation of the crossed pair
  std::uint64_t seed = 0;
  bool with_tau = true;  // run the oracle and fill meta
  TauCaps caps{16, 6};   // generator sizes may exceed the default oracle cap
};

namespace detail {

inline Instance gen_feasible_box(const GenSpec& g, Rng& rng) {
  // Lopsided boxes with tight cuts aimed at the box midpoint: the box rows
  // pull the derived ellipsoid's center toward the midpoint, which then sits
  // on the wrong side of those cuts, so a feasible run still has contractions
  // to perform. The origin stays strictly inside, which keeps the system
  // feasible and every cut touching the box.
  BoxSystem box;
  box.lo.resize(g.n);
  box.hi.resize(g.n);
  for (int k = 0; k < g.n; ++k) {
    const double wide = rng.uniform(1.0, 2.0);
    const double slim = rng.uniform(0.015, 0.05);
    const bool flip = rng.below(2) == 0;
    box.lo(k) = flip ? -wide : -slim;
    box.hi(k) = flip ? slim : wide;
  }
  const VectorXd mid = 0.5 * (box.lo + box.hi);
  box.A_hat.resize(g.n, g.m_hat);
  box.u_hat.resize(g.m_hat);
  for (int i = 0; i < g.m_hat; ++i) {
    VectorXd a = mid.normalized();
    double frac;
    if (i % 2 == 0) {
      a += 0.6 * rng.unit_vector(g.n);
      frac = rng.uniform(0.008, 0.05);
    } else {
      a += 0.9 * rng.unit_vector(g.n);
      frac = rng.uniform(0.05, 0.2);
    }
    a.normalize();
    box.A_hat.col(i) = a;
    box.u_hat(i) = frac * box_max(a, box.lo, box.hi);
  }
  return from_box(box);
}

inline Instance gen_infeasible_shifted(const GenSpec& g, Rng& rng) {
  // Coordinate 1 carries a crossed pair x_1 <= -gap/2, -x_1 <= -gap/2; the
  // remaining coordinates get honest [-1, 1] box rows; optional extra cuts
  // are slack at every candidate optimum, so tau = gap/2 exactly.
  const int n = g.n, mh = g.m_hat;
  const int m = mh + 2 * n;
  Instance inst;
  inst.p.n = n;
  inst.p.m = m;
  inst.p.A.resize(n, m);
  inst.p.u.resize(m);
  for (int i = 0; i < mh; ++i) {
    inst.p.A.col(i) = rng.unit_vector(n);
    inst.p.u(i) = 2.5 + rng.uniform(0.0, 0.5);
  }
  inst.p.A.middleCols(mh, n) = MatrixXd::Identity(n, n);
  inst.p.A.rightCols(n) = -MatrixXd::Identity(n, n);
  VectorXd hi = VectorXd::Ones(n), lo = -VectorXd::Ones(n);
  hi(0) = -g.gap / 2.0;  // crossed: upper bound below lower bound
  lo(0) = g.gap / 2.0;
  inst.p.u.segment(mh, n) = hi;
  inst.p.u.tail(n) = -lo;

  CertifiedBounds b;
  b.Lambda = MatrixXd::Zero(m, m);
  for (int i = 0; i < mh; ++i) {
    VectorXd a = inst.p.A.col(i);
    for (int k = 0; k < n; ++k) {
      b.Lambda(mh + k, i) = std::max(-a(k), 0.0);
      b.Lambda(mh + n + k, i) = std::max(a(k), 0.0);
    }
  }
  for (int k = 0; k < n; ++k) {
    b.Lambda(mh + n + k, mh + k) = 1.0;
    b.Lambda(mh + k, mh + n + k) = 1.0;
  }
  // No latent l_i > u_i witness: stay strictly below both u and -Lambda^T u.
  VectorXd cert_cap = -(b.Lambda.transpose() * inst.p.u);
  double pad = std::max(g.gap, 0.5);
  b.l = cert_cap.cwiseMin(inst.p.u).array() - pad;
  inst.bounds = std::move(b);
  inst.ensure_d0();
  inst.p.validate();
  return inst;
}

inline Instance gen_random_cone(const GenSpec& g, Rng& rng) {
  // Random unit columns plus a unit box so lower-bound witnesses exist.
  BoxSystem box;
  box.lo = -VectorXd::Ones(g.n);
  box.hi = VectorXd::Ones(g.n);
  box.A_hat.resize(g.n, g.m_hat);
  box.u_hat.resize(g.m_hat);
  VectorXd x0(g.n);
  for (int k = 0; k < g.n; ++k) x0(k) = rng.uniform(-0.5, 0.5);
  for (int i = 0; i < g.m_hat; ++i) {
    VectorXd a = rng.unit_vector(g.n);
    box.A_hat.col(i) = a;
    double cap = box_max(a, box.lo, box.hi);
    box.u_hat(i) = std::min(a.dot(x0) + rng.uniform(-0.3, 0.7), cap);
  }
  return from_box(box);
}

}  // namespace detail

inline Instance gen_instance(const GenSpec& g) {
  if (g.n < 1 || g.m_hat < 0 || g.gap <= 0.0)
    throw SolverError(ErrorKind::BadSpec, "bad generator sizes");
  Rng rng(g.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(g.n) * 131 +
          static_cast<std::uint64_t>(g.m_hat) * 17 +
          static_cast<std::uint64_t>(g.kind));
  Instance inst;
  switch (g.kind) {
    case GenKind::FeasibleBox: inst = detail::gen_feasible_box(g, rng); break;
    case GenKind::InfeasibleShifted:
      inst = detail::gen_infeasible_shifted(g, rng);
      break;
    case GenKind::RandomCone: inst = detail::gen_random_cone(g, rng); break;
  }
  if (g.with_tau) {
    TauResult t = estimate_tau(inst.p, g.caps);
    inst.meta.tau = t.tau;
    inst.meta.feasible = t.feasible;
  }
  return inst;
}

inline const char* gen_kind_name(GenKind k) {
  switch (k) {
    case GenKind::FeasibleBox: return "feasible-box";
    case GenKind::InfeasibleShifted: return "infeasible-shifted";
    case GenKind::RandomCone: return "random-cone";
  }
  return "?";
}

inline GenKind gen_kind_from_name(const std::string& s) {
  if (s == "feasible-box") return GenKind::FeasibleBox;
  if (s == "infeasible-shifted") return GenKind::InfeasibleShifted;
  if (s == "random-cone") return GenKind::RandomCone;
  throw SolverError(ErrorKind::BadSpec, "unknown generator kind: " + s);
}

}  // namespace oea
