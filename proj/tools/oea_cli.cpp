// Command-line front end: solve / certify / generate / bench.
//
// solve prints exactly one JSON document on stdout and reports through the
// exit code: 0 feasible, 1 infeasible with certificate, 2 infeasible
// declared, 3 iteration limit, 4 error.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oea/baseline.hpp"
#include "oea/solver.hpp"
#include "oea/variants.hpp"

namespace {

using namespace oea;

int emit_error(const std::string& msg) {
  detail::JsonWriter w;
  w.begin_obj();
  w.key("status");
  w.value(std::string("error"));
  w.key("message");
  w.value(msg);
  w.end_obj();
  std::cout << w.str() << "\n";
  std::cerr << "error: " << msg << "\n";
  return 4;
}

std::string feasible_json(const VectorXd& x) {
  detail::JsonWriter w;
  w.begin_obj();
  w.key("status");
  w.value(std::string("feasible"));
  w.key("x");
  w.vector(x);
  w.end_obj();
  return w.str();
}

std::string status_json(const char* status) {
  detail::JsonWriter w;
  w.begin_obj();
  w.key("status");
  w.value(std::string(status));
  w.end_obj();
  return w.str();
}

bool is_baseline(const std::string& algo) {
  return algo == "seap" || algo == "std-p" || algo == "std-alt";
}

struct SolveArgs {
  std::string problem;
  std::string algorithm = "oea";
  double tol_feas = 1e-9;
  long max_iter = -1;
  std::string trace_path;
  std::string cert_seq_path;
  std::optional<double> tau;
};

int do_solve(const SolveArgs& a) {
  Instance inst;
  try {
    inst = load_instance(a.problem);
  } catch (const ImmediateInfeasible& ii) {
    // The instance refutes itself during assembly; verify and report.
    ProblemData p;
    p.A = ii.A();
    p.u = ii.u();
    p.n = static_cast<int>(p.A.rows());
    p.m = static_cast<int>(p.A.cols());
    try {
      TypeLCertificate cert = make_type_l(p, ii.lambda_bar());
      std::cout << certificate_json(cert) << "\n";
      std::cerr << ii.what() << "\n";
      return 1;
    } catch (const SolverError& e) {
      return emit_error(e.what());
    }
  } catch (const SolverError& e) {
    return emit_error(e.what());
  }

  RunResult res;
  try {
    if (is_baseline(a.algorithm)) {
      StdConfig cfg;
      cfg.tol_feas = a.tol_feas;
      cfg.max_iter = a.max_iter;
      if (a.algorithm == "seap")
        res = run_seap(inst, cfg);
      else if (a.algorithm == "std-p")
        res = run_std_p(inst, cfg);
      else
        res = run_std_alt(inst, cfg);
    } else {
      SolverConfig cfg;
      cfg.tol_feas = a.tol_feas;
      cfg.max_iter = a.max_iter;
      cfg.tau_hint = a.tau ? a.tau : inst.meta.tau;
      if (a.algorithm == "oea") {
        res = run_oea(inst, cfg);
      } else if (a.algorithm == "oea-no-alt") {
        res = run_oea_no_alt(inst, cfg);
      } else {
        CertIndexSeq seq;
        res = run_oea_mm(inst, cfg, &seq);
        if (!a.cert_seq_path.empty()) save_cert_seq(a.cert_seq_path, seq);
        if (res.degraded)
          std::cerr << "warning: refresh log hit capacity; certificate "
                       "reconstruction disabled for this run\n";
      }
    }
    if (!a.trace_path.empty())
      save_text(a.trace_path, trace_csv(res.trace, is_baseline(a.algorithm)));
  } catch (const SolverError& e) {
    return emit_error(e.what());
  }

  switch (res.status) {
    case Status::Feasible:
      std::cout << feasible_json(res.x) << "\n";
      return 0;
    case Status::InfeasibleTypeL:
      std::cout << certificate_json(*res.cert) << "\n";
      return 1;
    case Status::InfeasibleDeclared:
      std::cout << status_json("infeasible-declared") << "\n";
      return 2;
    case Status::IterLimit:
      std::cout << status_json("iteration-limit") << "\n";
      return 3;
  }
  return 4;
}

struct CertifyArgs {
  std::string problem;
  std::string cert_path;
  std::string cert_seq_path;
  double tol = 1e-8;
};

int do_certify(const CertifyArgs& a) {
  ProblemData p;
  try {
    Instance inst = load_instance(a.problem);
    p = inst.p;
  } catch (const ImmediateInfeasible& ii) {
    p.A = ii.A();
    p.u = ii.u();
    p.n = static_cast<int>(p.A.rows());
    p.m = static_cast<int>(p.A.cols());
  } catch (const SolverError& e) {
    return emit_error(e.what());
  }

  VectorXd lam;
  std::optional<VectorXd> x;
  try {
    if (!a.cert_seq_path.empty()) {
      CertIndexSeq seq = load_cert_seq(a.cert_seq_path);
      if (seq.m != p.m)
        return emit_error("sidecar dimension does not match the problem");
      long q = seq.exit_j >= 0
                   ? seq.exit_j
                   : (seq.pairs.empty() ? -1 : seq.pairs.back().first);
      if (q < 0) return emit_error("sidecar records no exit to reconstruct");
      lam = backsolve_column(seq, static_cast<int>(q), true);
    } else {
      std::ifstream f(a.cert_path);
      if (!f) return emit_error("cannot open " + a.cert_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(f);
      } catch (const nlohmann::json::exception& e) {
        return emit_error(std::string("certificate parse: ") + e.what());
      }
      std::string status = j.value("status", "");
      if (status == "feasible") {
        x = detail::parse_vector(j.at("x"), "x");
      } else if (status == "infeasible") {
        lam = detail::parse_vector(j.at("lambda_bar"), "lambda_bar");
      } else {
        return emit_error("certificate status must be feasible or infeasible");
      }
    }
  } catch (const SolverError& e) {
    return emit_error(e.what());
  } catch (const nlohmann::json::exception& e) {
    return emit_error(std::string("certificate parse: ") + e.what());
  }

  detail::JsonWriter w;
  w.begin_obj();
  if (x) {
    if (x->size() != p.n) return emit_error("x has wrong dimension");
    double worst = (p.A.transpose() * *x - p.u).maxCoeff();
    bool ok = worst <= a.tol;
    w.key("valid");
    w.value(ok);
    w.key("kind");
    w.value(std::string("feasible-point"));
    w.key("max_violation");
    w.value(worst);
    w.end_obj();
    std::cout << w.str() << "\n";
    return ok ? 0 : 1;
  }
  if (lam.size() != p.m) return emit_error("lambda_bar has wrong dimension");
  TypeLCheck c = verify_type_l(p, lam, a.tol);
  w.key("valid");
  w.value(c.ok);
  w.key("kind");
  w.value(std::string("dual-ray"));
  w.key("residuals");
  w.begin_obj();
  w.key("eq");
  w.value(c.eq);
  w.key("min_entry");
  w.value(c.min_entry);
  w.key("u_dot");
  w.value(c.u_dot);
  w.end_obj();
  w.end_obj();
  std::cout << w.str() << "\n";
  return c.ok ? 0 : 1;
}

struct GenerateArgs {
  std::string kind = "feasible-box";
  int n = 2;
  int m_hat = 0;
  double gap = 1.0;
  std::uint64_t seed = 0;
  bool no_tau = false;
  std::string out;
};

int do_generate(const GenerateArgs& a) {
  try {
    GenSpec g;
    g.kind = gen_kind_from_name(a.kind);
    g.n = a.n;
    g.m_hat = a.m_hat;
    g.gap = a.gap;
    g.seed = a.seed;
    g.with_tau = !a.no_tau;
    Instance inst;
    try {
      inst = gen_instance(g);
    } catch (const SolverError& e) {
      if (e.kind() != ErrorKind::TooLarge || !g.with_tau) throw;
      std::cerr << "warning: instance too large for the exact gap oracle; "
                   "emitting without tau\n";
      g.with_tau = false;
      inst = gen_instance(g);
    }
    std::string text = serialize_instance(inst);
    if (a.out.empty())
      std::cout << text << "\n";
    else
      save_text(a.out, text);
    return 0;
  } catch (const SolverError& e) {
    return emit_error(e.what());
  }
}

struct BenchArgs {
  std::string algorithms = "oea,oea-no-alt,oea-mm,seap";
  std::string suite = "mixed";
  int count = 20;
  std::uint64_t seed = 1;
  int workers = 1;
  long max_iter = -1;
  std::string out = "bench.csv";
};

struct BenchRow {
  int id = 0;
  std::string kind;
  int n = 0, m = 0;
  std::string algo;
  std::string status;
  long iterations = 0;
  double wall_ms = 0.0;
  OpCounts ops;
  std::string cert_valid;  // "1", "0" or ""
  std::optional<double> tau;
  std::optional<long> bound;
  std::string bound_ok;  // "1", "0" or ""
  std::string error;
};

GenSpec bench_spec(const std::string& suite, int i, std::uint64_t seed) {
  GenSpec g;
  bool infeasible = suite == "infeasible-shifted" ||
                    (suite == "mixed" && i % 2 == 1);
  g.kind = infeasible ? GenKind::InfeasibleShifted : GenKind::FeasibleBox;
  g.n = 2 + i % 4;
  g.m_hat = i % 5;
  if (g.n + 1 > 6) g.n = 5;
  g.gap = 0.1 + 1.9 * ((i * 37) % 100) / 99.0;
  g.seed = seed + static_cast<std::uint64_t>(i);
  return g;
}

BenchRow bench_one(int id, const std::string& algo, const Instance& inst,
                   const GenSpec& g, long max_iter) {
  BenchRow row;
  row.id = id;
  row.kind = gen_kind_name(g.kind);
  row.n = inst.p.n;
  row.m = inst.p.m;
  row.algo = algo;
  row.tau = inst.meta.tau;
  auto t0 = std::chrono::steady_clock::now();
  try {
    RunResult res;
    if (algo == "oea") {
      SolverConfig cfg;
      cfg.max_iter = max_iter;
      cfg.tau_hint = inst.meta.tau;
      res = run_oea(inst, cfg);
    } else if (algo == "oea-no-alt") {
      SolverConfig cfg;
      cfg.max_iter = max_iter;
      res = run_oea_no_alt(inst, cfg);
    } else if (algo == "oea-mm") {
      SolverConfig cfg;
      cfg.max_iter = max_iter;
      res = run_oea_mm(inst, cfg);
    } else if (algo == "seap") {
      StdConfig cfg;
      cfg.max_iter = max_iter;
      res = run_seap(inst, cfg);
    } else if (algo == "std-p") {
      StdConfig cfg;
      cfg.max_iter = max_iter;
      res = run_std_p(inst, cfg);
    } else if (algo == "std-alt") {
      StdConfig cfg;
      cfg.max_iter = max_iter;
      res = run_std_alt(inst, cfg);
    } else {
      throw SolverError(ErrorKind::BadSpec, "unknown algorithm " + algo);
    }
    auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    row.status = status_name(res.status);
    row.iterations = res.iterations;
    row.ops = res.ops;
    if (res.status == Status::Feasible) {
      double worst = (inst.p.A.transpose() * res.x - inst.p.u).maxCoeff();
      row.cert_valid = worst <= 1e-8 ? "1" : "0";
    } else if (res.status == Status::InfeasibleTypeL) {
      row.cert_valid = verify_type_l(inst.p, res.cert->lambda_bar).ok ? "1" : "0";
    }
    if (!is_baseline(algo)) {
      row.bound = theory_iteration_bound(inst);
      if (row.bound) row.bound_ok = res.iterations <= *row.bound ? "1" : "0";
    }
  } catch (const SolverError& e) {
    auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    row.status = "error";
    row.error = e.what();
  }
  return row;
}

int do_bench(const BenchArgs& a) {
  std::vector<std::string> algos;
  {
    std::stringstream ss(a.algorithms);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) algos.push_back(tok);
    }
  }
  if (algos.empty()) return emit_error("no algorithms selected");
  if (a.suite != "feasible-box" && a.suite != "infeasible-shifted" &&
      a.suite != "mixed")
    return emit_error("unknown suite " + a.suite);

  // Instances are generated up front so results are seed-deterministic
  // regardless of worker count.
  std::vector<GenSpec> specs;
  std::vector<Instance> insts;
  try {
    for (int i = 0; i < a.count; ++i) {
      GenSpec g = bench_spec(a.suite, i, a.seed);
      specs.push_back(g);
      insts.push_back(gen_instance(g));
    }
  } catch (const SolverError& e) {
    return emit_error(std::string("generation failed: ") + e.what());
  }

  struct Task {
    int inst_idx;
    int algo_idx;
  };
  std::vector<Task> tasks;
  for (int i = 0; i < a.count; ++i)
    for (int k = 0; k < static_cast<int>(algos.size()); ++k)
      tasks.push_back({i, k});
  std::vector<BenchRow> rows(tasks.size());

  auto run_task = [&](std::size_t t) {
    const Task& tk = tasks[t];
    rows[t] = bench_one(tk.inst_idx, algos[tk.algo_idx], insts[tk.inst_idx],
                        specs[tk.inst_idx], a.max_iter);
  };
  if (a.workers <= 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int wkr = 0; wkr < a.workers; ++wkr)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t t = next.fetch_add(1);
          if (t >= tasks.size()) break;
          run_task(t);
        }
      });
    for (auto& th : pool) th.join();
  }

  std::string csv =
      "id,kind,n,m,algorithm,status,iterations,wall_ms,flops,rank1_updates,"
      "refactorizations,lambda_col_updates,backsolve_pairs,cert_valid,tau,"
      "bound,bound_satisfied,error\n";
  for (const auto& r : rows) {
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", r.wall_ms);
    csv += std::to_string(r.id) + "," + r.kind + "," + std::to_string(r.n) +
           "," + std::to_string(r.m) + "," + r.algo + "," + r.status + "," +
           std::to_string(r.iterations) + "," + ms + "," +
           std::to_string(r.ops.flops) + "," +
           std::to_string(r.ops.rank1_updates) + "," +
           std::to_string(r.ops.refactorizations) + "," +
           std::to_string(r.ops.lambda_col_updates) + "," +
           std::to_string(r.ops.backsolve_pairs) + "," + r.cert_valid + "," +
           (r.tau ? fmt_double(*r.tau) : std::string()) + "," +
           (r.bound ? std::to_string(*r.bound) : std::string()) + "," +
           r.bound_ok + ",\"" + r.error + "\"\n";
  }
  try {
    save_text(a.out, csv);
  } catch (const SolverError& e) {
    return emit_error(e.what());
  }

  // Aggregate table, one line per algorithm.
  std::printf("%-12s %5s %5s %6s %6s %8s %10s %12s %6s\n", "algorithm", "runs",
              "ok", "feas", "infeas", "iters", "mean_ms", "flops/run", "bviol");
  for (const auto& algo : algos) {
    long runs = 0, ok = 0, feas = 0, infeas = 0, bviol = 0;
    double iters = 0, ms = 0, flops = 0;
    for (const auto& r : rows) {
      if (r.algo != algo) continue;
      ++runs;
      if (r.status != "error") ++ok;
      if (r.status == "feasible") ++feas;
      if (r.status == "infeasible" || r.status == "infeasible-declared") ++infeas;
      if (r.bound_ok == "0") ++bviol;
      iters += static_cast<double>(r.iterations);
      ms += r.wall_ms;
      flops += static_cast<double>(r.ops.flops);
    }
    if (runs == 0) continue;
    std::printf("%-12s %5ld %5ld %6ld %6ld %8.1f %10.3f %12.0f %6ld\n",
                algo.c_str(), runs, ok, feas, infeas,
                iters / static_cast<double>(runs), ms / static_cast<double>(runs),
                flops / static_cast<double>(runs), bviol);
  }
  std::fflush(stdout);
  std::cerr << "wrote " << rows.size() << " rows to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oblivious-ellipsoid feasibility solver"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "solve a problem file");
  solve->add_option("problem", sa.problem, "problem JSON file")->required();
  solve->add_option("--algorithm", sa.algorithm, "solver variant")
      ->check(CLI::IsMember(
          {"oea", "oea-no-alt", "oea-mm", "seap", "std-p", "std-alt"}));
  solve->add_option("--tol-feas", sa.tol_feas, "feasibility tolerance");
  solve->add_option("--max-iter", sa.max_iter, "iteration cap (-1 = auto)");
  solve->add_option("--trace", sa.trace_path, "write per-iteration CSV here");
  solve->add_option("--cert-seq", sa.cert_seq_path,
                    "oea-mm: write the refresh-sequence sidecar here");
  double tau_val = 0.0;
  auto* tau_opt =
      solve->add_option("--tau", tau_val, "known gap measure (trace only)");

  CertifyArgs ca;
  auto* certify = app.add_subcommand("certify", "verify a certificate");
  certify->add_option("problem", ca.problem, "problem JSON file")->required();
  auto* co = certify->add_option("--cert", ca.cert_path, "certificate JSON");
  auto* cs = certify->add_option("--cert-seq", ca.cert_seq_path,
                                 "refresh-sequence sidecar");
  co->excludes(cs);
  certify->add_option("--tol", ca.tol, "verification tolerance");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "emit a seeded instance");
  gen->add_option("--kind", ga.kind, "instance family")
      ->check(CLI::IsMember({"feasible-box", "infeasible-shifted", "random-cone"}));
  gen->add_option("--n", ga.n, "dimension");
  gen->add_option("--m-hat", ga.m_hat, "extra general cuts");
  gen->add_option("--gap", ga.gap, "infeasible separation");
  gen->add_option("--seed", ga.seed, "RNG seed");
  gen->add_flag("--no-tau", ga.no_tau, "skip the exact gap oracle");
  gen->add_option("--out", ga.out, "output file (default stdout)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "run a benchmark sweep");
  bench->add_option("--algorithms", ba.algorithms, "comma-separated list");
  bench->add_option("--suite", ba.suite,
                    "feasible-box | infeasible-shifted | mixed");
  bench->add_option("--count", ba.count, "instances per suite");
  bench->add_option("--seed", ba.seed, "base RNG seed");
  bench->add_option("--workers", ba.workers, "worker threads");
  bench->add_option("--max-iter", ba.max_iter, "iteration cap (-1 = auto)");
  bench->add_option("--out", ba.out, "CSV output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) {
      if (*tau_opt) sa.tau = tau_val;
      return do_solve(sa);
    }
    if (*certify) {
      if (ca.cert_path.empty() && ca.cert_seq_path.empty())
        return emit_error("certify needs --cert or --cert-seq");
      return do_certify(ca);
    }
    if (*gen) return do_generate(ga);
    if (*bench) return do_bench(ba);
  } catch (const std::exception& e) {
    return emit_error(e.what());
  }
  return 4;
}
