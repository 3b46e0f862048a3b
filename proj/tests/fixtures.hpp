#pragma once

// Small closed-form systems reused across the test files.

#include <cmath>

#include <Eigen/Dense>

#include "oea/problem.hpp"

namespace fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// [-1,1]^2 as four rows: x <= 1, y <= 1, -x <= 1, -y <= 1.
inline oea::Instance unit_square() {
  oea::BoxSystem box;
  box.lo = -VectorXd::Ones(2);
  box.hi = VectorXd::Ones(2);
  box.A_hat.resize(2, 0);
  box.u_hat.resize(0);
  return oea::from_box(box);
}

// Unit square plus one diagonal cut (x + y)/sqrt(2) <= -1.2; still feasible
// (the corner (-1,-1) satisfies the cut).
inline oea::Instance square_with_diagonal_cut() {
  oea::BoxSystem box;
  box.lo = -VectorXd::Ones(2);
  box.hi = VectorXd::Ones(2);
  box.A_hat.resize(2, 1);
  box.A_hat.col(0) = VectorXd::Constant(2, 1.0 / std::sqrt(2.0));
  box.u_hat.resize(1);
  box.u_hat(0) = -1.2;
  return oea::from_box(box);
}

// One variable, two opposing rows x <= -1/2 and -x <= -1/2 (infeasible), with
// the mutual witness matrix: each row's lower bound is certified by the
// opposite row. The slab floor is a free parameter.
inline oea::Instance crossed_pair_1d(double floor_value) {
  oea::Instance inst;
  inst.p.n = 1;
  inst.p.m = 2;
  inst.p.A.resize(1, 2);
  inst.p.A << 1.0, -1.0;
  inst.p.u = VectorXd::Constant(2, -0.5);
  oea::CertifiedBounds b;
  b.Lambda = MatrixXd::Zero(2, 2);
  b.Lambda(1, 0) = 1.0;
  b.Lambda(0, 1) = 1.0;
  b.l = VectorXd::Constant(2, floor_value);
  inst.bounds = std::move(b);
  inst.meta.feasible = false;
  inst.ensure_d0();
  inst.p.validate();
  return inst;
}

}  // namespace fixtures
