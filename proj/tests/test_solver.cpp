#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oea/solver.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using oea::EllipsoidState;
using oea::ErrorKind;
using oea::SolverError;

namespace {

double max_violation(const oea::ProblemData& p, const VectorXd& x) {
  return (p.A.transpose() * x - p.u).maxCoeff();
}

oea::Instance cut_square_with_meta() {
  oea::Instance inst = fixtures::square_with_diagonal_cut();
  oea::TauResult t = oea::estimate_tau(inst.p);
  inst.meta.tau = t.tau;
  inst.meta.feasible = t.feasible;
  return inst;
}

}  // namespace

TEST_CASE("most violated row, ties to the lowest index") {
  oea::Instance sq = fixtures::unit_square();
  EllipsoidState s = EllipsoidState::derive(sq.p, sq.d0, sq.bounds->l);
  auto [j, w] = oea::most_violated(s);
  REQUIRE(j == 0);  // all four rows tie at -1
  REQUIRE(w == -1.0);
}

TEST_CASE("iteration budgets") {
  oea::Instance sq = fixtures::unit_square();

  SECTION("default budget is positive and capped") {
    long b = oea::default_max_iter(sq.p, sq.bounds->l);
    REQUIRE(b > 0);
    REQUIRE(b <= 1000000);
  }

  SECTION("feasible box bound: unit square at tau = 1 gives 13") {
    oea::Instance inst = sq;
    inst.meta.tau = 1.0;
    inst.meta.feasible = true;
    auto bound = oea::theory_iteration_bound(inst);
    REQUIRE(bound.has_value());
    // floor(2 n (m+1) ln(sqrt(2) * ||hi-lo|| / 2)) = floor(20 ln 2) = 13
    REQUIRE(*bound == 13);
  }

  SECTION("missing tau gives nothing") {
    REQUIRE_FALSE(oea::theory_iteration_bound(sq).has_value());
  }

  SECTION("infeasible bound matches the closed form") {
    oea::Instance inst = fixtures::crossed_pair_1d(-1.0);
    inst.meta.tau = 0.25;
    inst.meta.feasible = false;
    auto bound = oea::theory_iteration_bound(inst);
    REQUIRE(bound.has_value());
    const double arg =
        3.0 * (inst.p.u - inst.bounds->l).norm() / (2.0 * 2.0 * 0.25);
    REQUIRE(*bound == static_cast<long>(std::floor(12.0 * std::log(arg))));
  }
}

TEST_CASE("run: the unit square center is feasible immediately") {
  oea::Instance inst = fixtures::unit_square();
  oea::RunResult res = oea::run_oea(inst);

  REQUIRE(res.status == oea::Status::Feasible);
  REQUIRE(res.iterations == 0);
  REQUIRE(res.x.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(res.trace.size() == 1);
  REQUIRE(res.trace[0].event == "feasible");
  REQUIRE(res.trace[0].iter == 0);
  REQUIRE(res.trace[0].f == 4.0);
  REQUIRE(res.trace[0].j == 1);
  REQUIRE(res.trace[0].max_violation == -1.0);
}

TEST_CASE("run: the diagonal cut solves at the touch point") {
  // The first touch shift slides the center onto the cut plane, and on this
  // fixture that point is already inside the box, so the run exits without
  // one completed contraction.
  oea::Instance inst = cut_square_with_meta();
  REQUIRE(inst.meta.feasible.value_or(false));

  oea::SolverConfig cfg;
  cfg.audit_bounds = true;
  cfg.collect_stats = true;
  oea::RunResult res = oea::run_oea(inst, cfg);

  REQUIRE(res.status == oea::Status::Feasible);
  REQUIRE(res.iterations == 0);
  REQUIRE(res.stats.empty());
  REQUIRE(res.worst_bounds.ok(1e-8, 1e-12, 1e-8));

  const double c = -0.6 * std::sqrt(2.0);  // u_hat / sqrt(2) per coordinate
  REQUIRE(std::abs(res.x(0) - c) < 1e-12);
  REQUIRE(std::abs(res.x(1) - c) < 1e-12);
  REQUIRE(std::abs(inst.p.A.col(0).dot(res.x) - inst.p.u(0)) < 1e-12);
  REQUIRE(max_violation(inst.p, res.x) <= 1e-9);

  REQUIRE(res.trace.size() == 1);
  REQUIRE(res.trace[0].event == "feasible");
  REQUIRE(res.trace[0].iter == 0);
  REQUIRE(res.trace[0].j == 1);
  REQUIRE(std::abs(res.trace[0].max_violation - 0.7642977) < 1e-5);
  // Rows report the state at iteration entry, before the rescale to f = 1.
  oracles::DenseState o = oracles::dense_derive(inst.p, inst.d0, inst.bounds->l);
  REQUIRE(std::abs(res.trace[0].f - o.f) < 1e-12);
  REQUIRE(std::abs(res.trace[0].f - 2.8724531) < 1e-6);
}

TEST_CASE("run: generated feasible boxes exercise full updates") {
  long total = 0;
  for (int i = 0; i < 20; ++i) {
    oea::GenSpec g;
    g.kind = oea::GenKind::FeasibleBox;
    g.n = 2 + i % 4;
    g.m_hat = i % 5;
    g.seed = 1000 + i;
    oea::Instance inst = oea::gen_instance(g);
    REQUIRE(inst.meta.feasible.value_or(false));

    oea::SolverConfig cfg;
    cfg.audit_bounds = true;
    cfg.collect_stats = true;
    oea::RunResult res = oea::run_oea(inst, cfg);

    REQUIRE(res.status == oea::Status::Feasible);
    REQUIRE(max_violation(inst.p, res.x) <= 1e-9);
    auto bound = oea::theory_iteration_bound(inst);
    REQUIRE(bound.has_value());
    REQUIRE(res.iterations <= *bound);
    REQUIRE(res.worst_bounds.ok(1e-8, 1e-12, 1e-8));

    const double m = inst.p.m;
    for (std::size_t k = 0; k < res.stats.size(); ++k) {
      const oea::UpdateStats& u = res.stats[k];
      REQUIRE(u.iter == static_cast<long>(k));
      REQUIRE(std::abs(u.f2 - m * m / (m * m - 1.0)) < 1e-8);
      REQUIRE(u.alpha > (m * m - 1.0) / (m * m) - 1e-12);
      REQUIRE(std::abs(u.alpha - (1.0 - 1.0 / (m * m)) / u.f1) < 1e-7);
      REQUIRE(u.d3_identity_relerr <= 1e-8);
      REQUIRE(u.l2_minus_max <= 1e-10);
      REQUIRE(u.vol_log_ratio <= -1.0 / (2.0 * (m + 1.0)) + 1e-10);
    }
    total += static_cast<long>(res.stats.size());
  }
  // The suite is seeded, so the update count is reproducible; the floor just
  // guards against the generator regressing into trivial instances.
  REQUIRE(total >= 40);
}

TEST_CASE("run: crossed pair yields a verified dual ray") {
  oea::GenSpec g;
  g.kind = oea::GenKind::InfeasibleShifted;
  g.n = 2;
  g.m_hat = 2;
  g.gap = 0.4;
  g.seed = 3;
  oea::Instance inst = oea::gen_instance(g);

  oea::SolverConfig cfg;
  cfg.audit_bounds = true;
  cfg.tau_hint = inst.meta.tau;
  oea::RunResult res = oea::run_oea(inst, cfg);

  REQUIRE(res.status == oea::Status::InfeasibleTypeL);
  REQUIRE(res.cert.has_value());
  REQUIRE(oea::verify_type_l(inst.p, res.cert->lambda_bar, 1e-8).ok);
  auto bound = oea::theory_iteration_bound(inst);
  REQUIRE(bound.has_value());
  REQUIRE(res.iterations <= *bound);

  REQUIRE_FALSE(res.trace.empty());
  REQUIRE(res.trace.back().event == "typeL");
  REQUIRE(std::isfinite(res.trace.front().f));
  // Contractions hand back f = 1, and rows report the state at entry.
  for (std::size_t k = 1; k + 1 < res.trace.size(); ++k)
    REQUIRE(std::abs(res.trace[k].f - 1.0) <= 1e-8);

  // The potential column is filled when tau is supplied.
  for (const auto& row : res.trace) REQUIRE(row.phi.has_value());
}

TEST_CASE("run: iteration limit is reported honestly") {
  oea::GenSpec g;
  g.kind = oea::GenKind::InfeasibleShifted;
  g.n = 2;
  g.m_hat = 2;
  g.gap = 0.1;
  g.seed = 5;
  oea::Instance inst = oea::gen_instance(g);

  oea::SolverConfig cfg;
  cfg.max_iter = 1;
  oea::RunResult res = oea::run_oea(inst, cfg);
  REQUIRE(res.status == oea::Status::IterLimit);
  REQUIRE(res.iterations == 1);
  REQUIRE(res.trace.back().event == "none");
}

TEST_CASE("run: trace thinning keeps exit rows") {
  oea::GenSpec g;
  g.kind = oea::GenKind::InfeasibleShifted;
  g.n = 2;
  g.m_hat = 2;
  g.gap = 0.1;
  g.seed = 3;
  oea::Instance inst = oea::gen_instance(g);

  oea::RunResult full = oea::run_oea(inst);
  REQUIRE(full.status == oea::Status::InfeasibleTypeL);
  REQUIRE(full.iterations >= 2);
  REQUIRE(full.iterations % 2 == 1);  // the exit row misses the stride below
  REQUIRE(full.trace.size() == static_cast<std::size_t>(full.iterations) + 1);

  oea::SolverConfig cfg;
  cfg.trace_every = 2;
  oea::RunResult res = oea::run_oea(inst, cfg);
  REQUIRE_FALSE(res.trace.empty());
  REQUIRE(res.trace.size() < full.trace.size());
  for (const auto& row : res.trace) {
    if (row.event == "none") REQUIRE(row.iter % 2 == 0);
  }
  // The exit row survives thinning even when its iteration is skipped.
  REQUIRE(res.trace.back().event == "typeL");
  REQUIRE(res.trace.back().iter == full.iterations);

  oea::SolverConfig off;
  off.trace_every = 0;
  REQUIRE(oea::run_oea(inst, off).trace.empty());
}

TEST_CASE("run: refusal without certified bounds") {
  oea::Instance inst = fixtures::crossed_pair_1d(-1.0);
  inst.bounds.reset();
  REQUIRE_THROWS_MATCHES(
      oea::run_oea(inst), SolverError,
      Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
        return e.kind() == ErrorKind::PreconditionViolation;
      }));
}

TEST_CASE("one contraction: closed form against the dense route") {
  oea::Instance inst = fixtures::square_with_diagonal_cut();
  EllipsoidState s = EllipsoidState::derive(inst.p, inst.d0, inst.bounds->l);
  s.rescale_unit_f();

  SECTION("touch shift puts the center on the plane") {
    auto [j, w] = oea::most_violated(s);
    REQUIRE(j == 0);
    REQUIRE(std::abs(w - 0.7642977) < 1e-5);
    REQUIRE(std::abs(s.gamma(j) - 0.9785113) < 1e-6);
    const double sjj = s.gamma(j) * s.gamma(j);
    s.shift_l(j, -2.0 * w / (s.d()(j) * sjj));
    REQUIRE(std::abs(inst.p.A.col(j).dot(s.y()) - inst.p.u(j)) < 1e-12);
    REQUIRE(std::abs(s.f() - (1.0 - (w / std::sqrt(sjj)) * (w / std::sqrt(sjj)))) <
            1e-12);
  }

  SECTION("the wrapper reports the feasible touch point") {
    oea::CertifiedBounds b = *inst.bounds;
    auto [j, w] = oea::most_violated(s);
    const double gamma_pre = s.gamma(j);
    std::optional<oea::TypeLCertificate> cert;
    VectorXd x;
    oea::P2Result r = oea::procedure_2(s, b, j, {}, &cert, &x);
    REQUIRE(r == oea::P2Result::FeasiblePoint);
    REQUIRE_FALSE(cert.has_value());

    const double c = -0.6 * std::sqrt(2.0);
    REQUIRE(std::abs(x(0) - c) < 1e-12);
    REQUIRE(std::abs(x(1) - c) < 1e-12);
    REQUIRE((x - s.y()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(std::abs(inst.p.A.col(j).dot(x) - inst.p.u(j)) < 1e-12);
    REQUIRE(max_violation(inst.p, x) <= 1e-9);
    // The state stays in the touched frame; the slab floor is still synced.
    const double ratio = w / gamma_pre;
    REQUIRE(std::abs(s.f() - (1.0 - ratio * ratio)) < 1e-12);
    REQUIRE((b.l - s.l()).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("preconditions") {
    oea::CertifiedBounds b = *inst.bounds;
    EllipsoidState raw =
        EllipsoidState::derive(inst.p, inst.d0, inst.bounds->l);
    REQUIRE_THROWS_MATCHES(  // f far from 1
        oea::procedure_2(raw, b, 0), SolverError,
        Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
          return e.kind() == ErrorKind::PreconditionViolation;
        }));

    // Row 1 is satisfied at the center: negative violation is refused.
    REQUIRE_THROWS_MATCHES(
        oea::procedure_2(s, b, 1), SolverError,
        Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
          return e.kind() == ErrorKind::PreconditionViolation;
        }));
  }

  SECTION("violations past the slab radius are refused") {
    oea::Instance wide = fixtures::unit_square();
    wide.p.u(0) = -2.0;  // l_0 = -1 > u_0: whole ellipsoid violates row 1
    EllipsoidState t =
        EllipsoidState::derive(wide.p, wide.d0, wide.bounds->l);
    t.rescale_unit_f();
    oea::CertifiedBounds b = *wide.bounds;
    REQUIRE_THROWS_MATCHES(
        oea::procedure_2(t, b, 0), SolverError,
        Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
          return e.kind() == ErrorKind::PreconditionViolation;
        }));
  }
}

TEST_CASE("one contraction: full update against the dense route") {
  oea::GenSpec g;
  g.kind = oea::GenKind::InfeasibleShifted;
  g.n = 2;
  g.m_hat = 2;
  g.gap = 0.4;
  g.seed = 3;
  oea::Instance inst = oea::gen_instance(g);

  EllipsoidState s = EllipsoidState::derive(inst.p, inst.d0, inst.bounds->l);
  s.rescale_unit_f();
  oea::CertifiedBounds b = *inst.bounds;
  auto [j, w] = oea::most_violated(s);
  REQUIRE(j == 2);
  REQUIRE(std::abs(w - 0.409195208) < 1e-6);
  REQUIRE(w < s.gamma(j));  // inside the slab radius: a full update must land

  oea::P2Result r = oea::procedure_2(s, b, j);
  REQUIRE(r == oea::P2Result::Updated);
  REQUIRE(s.f() == 1.0);
  REQUIRE((b.l - s.l()).cwiseAbs().maxCoeff() == 0.0);
  oracles::DenseState o = oracles::dense_derive(inst.p, s.d(), s.l());
  REQUIRE(oracles::state_gap(s, o) < 1e-10);
  REQUIRE(oea::verify_certified_bounds(inst.p, {s.l(), b.Lambda}, 1e-9));
}

TEST_CASE("run: containment hook fires once per completed update") {
  oea::GenSpec g;
  g.kind = oea::GenKind::InfeasibleShifted;
  g.n = 2;
  g.m_hat = 2;
  g.gap = 0.4;
  g.seed = 3;
  oea::Instance inst = oea::gen_instance(g);

  long calls = 0;
  oea::SolverConfig cfg;
  cfg.containment_hook = [&](const EllipsoidState& mid,
                             const EllipsoidState& post, int j) {
    ++calls;
    REQUIRE(j >= 0);
    REQUIRE(j < inst.p.m);
    // The mid state's center sits on the cut plane.
    REQUIRE(std::abs(inst.p.A.col(j).dot(mid.y()) - inst.p.u(j)) < 1e-9);
    REQUIRE(std::abs(post.f() - 1.0) <= 1e-12);
  };
  oea::RunResult res = oea::run_oea(inst, cfg);
  REQUIRE(res.status == oea::Status::InfeasibleTypeL);
  REQUIRE(res.iterations >= 1);
  REQUIRE(calls == res.iterations);
}

TEST_CASE("trace csv format") {
  std::vector<oea::TraceRow> rows(2);
  rows[0].iter = 0;
  rows[0].f = 4.0;
  rows[0].log_rel_volume = std::log(2.0);
  rows[0].j = 1;
  rows[0].max_violation = -1.0;
  rows[0].l_cert_updated = false;
  rows[0].event = "feasible";
  rows[1].iter = 1;
  rows[1].f = 1.0;
  rows[1].log_rel_volume = 0.25;
  rows[1].phi = 16.0;
  rows[1].j = 3;
  rows[1].max_violation = 0.5;
  rows[1].l_cert_updated = true;
  rows[1].event = "none";
  rows[1].side = "P";

  REQUIRE(oea::trace_csv(rows) ==
          "iter,f,log_rel_volume,phi,j,max_violation,l_cert_updated,event\n"
          "0,4,0.69314718055994529,,1,-1,0,feasible\n"
          "1,1,0.25,16,3,0.5,1,none\n");
  REQUIRE(oea::trace_csv(rows, true) ==
          "iter,f,log_rel_volume,phi,j,max_violation,l_cert_updated,event,side\n"
          "0,4,0.69314718055994529,,1,-1,0,feasible,\n"
          "1,1,0.25,16,3,0.5,1,none,P\n");
}

TEST_CASE("status names are pinned") {
  REQUIRE(std::string(oea::status_name(oea::Status::Feasible)) == "feasible");
  REQUIRE(std::string(oea::status_name(oea::Status::InfeasibleTypeL)) ==
          "infeasible");
  REQUIRE(std::string(oea::status_name(oea::Status::InfeasibleDeclared)) ==
          "infeasible-declared");
  REQUIRE(std::string(oea::status_name(oea::Status::IterLimit)) ==
          "iteration-limit");
}
