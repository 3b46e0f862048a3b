#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "oea/io.hpp"
#include "oea/variants.hpp"

#include "fixtures.hpp"

using Eigen::VectorXd;
using oea::ErrorKind;
using oea::SolverError;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args, bool quiet_stderr = false) {
  static int counter = 0;
  const std::string out_file = "io_cli_out_" + std::to_string(counter++) + ".txt";
  std::string cmd = "./oea " + args + " > " + out_file;
  if (quiet_stderr) cmd += " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.code = (rc >= 0 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out_file);
  std::remove(out_file.c_str());
  return r;
}

void rejects_parse(const std::string& text) {
  REQUIRE_THROWS_MATCHES(
      oea::parse_instance(text), SolverError,
      Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
        return e.kind() == ErrorKind::ParseError;
      }));
}

void rejects_invariant(const std::string& text) {
  REQUIRE_THROWS_MATCHES(
      oea::parse_instance(text), SolverError,
      Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
        return e.kind() == ErrorKind::InvariantViolation;
      }));
}

}  // namespace

TEST_CASE("doubles survive a text round trip") {
  REQUIRE(oea::fmt_double(1.0) == "1");
  REQUIRE(oea::fmt_double(-4.0) == "-4");
  REQUIRE(oea::fmt_double(0.5) == "0.5");
  REQUIRE(oea::fmt_double(std::log(2.0)) == "0.69314718055994529");

  oea::Rng rng(2024);
  for (int k = 0; k < 200; ++k) {
    const double scale = std::pow(10.0, rng.uniform(-12.0, 12.0));
    const double v = rng.uniform(-1.0, 1.0) * scale;
    const std::string s = oea::fmt_double(v);
    REQUIRE(std::strtod(s.c_str(), nullptr) == v);
  }

  REQUIRE_THROWS_AS(oea::fmt_double(std::numeric_limits<double>::infinity()),
                    SolverError);
  REQUIRE_THROWS_AS(oea::fmt_double(std::nan("")), SolverError);
}

TEST_CASE("json writer escapes strings") {
  oea::detail::JsonWriter w;
  w.begin_obj();
  w.key("s");
  w.value(std::string("a\"b\\c\nd\te\x01"));
  w.key("k");
  w.value(1.5);
  w.end_obj();
  REQUIRE(w.str() == "{\"s\":\"a\\\"b\\\\c\\nd\\te\\u0001\",\"k\":1.5}");
}

TEST_CASE("instance round trip: explicit form") {
  oea::Instance inst = fixtures::crossed_pair_1d(-1.0);
  const std::string text = oea::serialize_instance(inst);
  oea::Instance back = oea::parse_instance(text);

  REQUIRE(back.p.n == inst.p.n);
  REQUIRE(back.p.m == inst.p.m);
  REQUIRE((back.p.A - inst.p.A).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.p.u - inst.p.u).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.bounds.has_value());
  REQUIRE((back.bounds->l - inst.bounds->l).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.bounds->Lambda - inst.bounds->Lambda).cwiseAbs().maxCoeff() ==
          0.0);
  REQUIRE(back.meta.feasible.has_value());
  REQUIRE_FALSE(*back.meta.feasible);
  REQUIRE(back.d0.size() == inst.p.m);

  // Serialization is idempotent byte for byte.
  REQUIRE(oea::serialize_instance(back) == text);
}

TEST_CASE("instance round trip: box form") {
  oea::Instance inst = fixtures::square_with_diagonal_cut();
  inst.meta.tau = 0.75;
  const std::string text = oea::serialize_instance(inst);
  oea::Instance back = oea::parse_instance(text);

  REQUIRE(back.box.has_value());
  REQUIRE((back.box->lo - inst.box->lo).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.box->hi - inst.box->hi).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.p.A - inst.p.A).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.p.u - inst.p.u).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.bounds->l - inst.bounds->l).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.meta.tau.has_value());
  REQUIRE(*back.meta.tau == 0.75);
  REQUIRE(oea::serialize_instance(back) == text);

  SECTION("and through the disk") {
    oea::save_text("io_roundtrip.json", text);
    oea::Instance disk = oea::load_instance("io_roundtrip.json");
    REQUIRE(oea::serialize_instance(disk) == text);
    std::remove("io_roundtrip.json");
  }
}

TEST_CASE("instance parsing rejects malformed input") {
  const std::string square =
      R"({"version":1,"n":2,"m":4,"A":[[1,0],[0,1],[-1,0],[0,-1]],"u":[1,1,1,1]})";
  REQUIRE(oea::parse_instance(square).p.m == 4);

  SECTION("broken json") { rejects_parse("{oops"); }
  SECTION("not an object") { rejects_parse("[1,2,3]"); }
  SECTION("wrong version") {
    rejects_parse(
        R"({"version":2,"n":2,"m":4,"A":[[1,0],[0,1],[-1,0],[0,-1]],"u":[1,1,1,1]})");
  }
  SECTION("missing version") {
    rejects_parse(R"({"n":2,"m":4,"A":[[1,0]],"u":[1]})");
  }
  SECTION("missing n") { rejects_parse(R"({"version":1,"m":4,"u":[1]})"); }
  SECTION("missing A") { rejects_parse(R"({"version":1,"n":2,"m":4,"u":[1]})"); }
  SECTION("box and explicit forms together") {
    rejects_parse(
        R"({"version":1,"n":2,"m":4,"A":[[1,0]],"u":[1],)"
        R"("box":{"lo":[-1,-1],"hi":[1,1]}})");
  }
  SECTION("l without Lambda") {
    rejects_parse(
        R"({"version":1,"n":2,"m":4,"A":[[1,0],[0,1],[-1,0],[0,-1]],)"
        R"("u":[1,1,1,1],"l":[-1,-1,-1,-1]})");
  }
  SECTION("ragged columns") {
    rejects_parse(R"({"version":1,"n":2,"m":2,"A":[[1,0],[0]],"u":[1,1]})");
  }
  SECTION("non-numeric entries") {
    rejects_parse(
        R"({"version":1,"n":2,"m":4,"A":[[1,0],[0,1],[-1,0],[0,-1]],)"
        R"("u":[1,"x",1,1]})");
  }
  SECTION("box sizes disagree") {
    rejects_parse(
        R"({"version":1,"n":2,"m":5,"box":{"lo":[-1,-1],"hi":[1,1],)"
        R"("u_hat":[0.5],"A_hat":[[1,0],[0,1]]}})");
  }
  SECTION("declared sizes disagree with the box") {
    rejects_parse(
        R"({"version":1,"n":2,"m":7,"box":{"lo":[-1,-1],"hi":[1,1]}})");
  }
  SECTION("non-unit column") {
    rejects_invariant(
        R"({"version":1,"n":1,"m":2,"A":[[2],[-1]],"u":[0,0]})");
  }
  SECTION("rank deficient") {
    rejects_invariant(
        R"({"version":1,"n":2,"m":3,"A":[[1,0],[-1,0],[1,0]],"u":[1,1,1]})");
  }
  SECTION("witnesses that do not verify") {
    rejects_invariant(
        R"({"version":1,"n":1,"m":2,"A":[[1],[-1]],"u":[-0.5,-0.5],)"
        R"("l":[-1,-1],"Lambda":[[1,0],[0,1]]})");
  }
  SECTION("a box-excluding cut raises the ready dual ray") {
    REQUIRE_THROWS_AS(
        oea::parse_instance(
            R"({"version":1,"n":2,"m":5,"box":{"lo":[-1,-1],"hi":[1,1],)"
            R"("u_hat":[-3],"A_hat":[[1,0]]}})"),
        oea::ImmediateInfeasible);
  }
  SECTION("missing file") {
    REQUIRE_THROWS_MATCHES(
        oea::load_instance("io_no_such_file.json"), SolverError,
        Catch::Matchers::Predicate<SolverError>([](const SolverError& e) {
          return e.kind() == ErrorKind::ParseError;
        }));
  }
}

TEST_CASE("cli: generate, solve and verify a feasible instance") {
  CliResult gen = run_cli(
      "generate --kind feasible-box --n 2 --m-hat 1 --seed 42 "
      "--out io_prob_feas.json");
  REQUIRE(gen.code == 0);
  CliResult gen2 = run_cli(
      "generate --kind feasible-box --n 2 --m-hat 1 --seed 42 "
      "--out io_prob_feas2.json");
  REQUIRE(gen2.code == 0);
  REQUIRE(slurp("io_prob_feas.json") == slurp("io_prob_feas2.json"));
  std::remove("io_prob_feas2.json");

  oea::Instance inst = oea::load_instance("io_prob_feas.json");
  REQUIRE(inst.meta.tau.has_value());

  CliResult sol = run_cli("solve io_prob_feas.json --trace io_trace_feas.csv");
  REQUIRE(sol.code == 0);
  nlohmann::json j = nlohmann::json::parse(sol.out);
  REQUIRE(j["status"] == "feasible");
  VectorXd x(j["x"].size());
  for (std::size_t i = 0; i < j["x"].size(); ++i) x(i) = j["x"][i].get<double>();
  REQUIRE((inst.p.A.transpose() * x - inst.p.u).maxCoeff() <= 1e-8);

  const std::string trace = slurp("io_trace_feas.csv");
  REQUIRE(trace.rfind(
              "iter,f,log_rel_volume,phi,j,max_violation,l_cert_updated,event",
              0) == 0);
  std::remove("io_trace_feas.csv");

  CliResult base = run_cli("solve io_prob_feas.json --algorithm std-p");
  REQUIRE(base.code == 0);
  REQUIRE(nlohmann::json::parse(base.out)["status"] == "feasible");
  std::remove("io_prob_feas.json");
}

TEST_CASE("cli: infeasible pipeline end to end") {
  CliResult gen = run_cli(
      "generate --kind infeasible-shifted --n 2 --m-hat 1 --gap 0.5 --seed 7 "
      "--out io_prob_inf.json");
  REQUIRE(gen.code == 0);
  oea::Instance inst = oea::load_instance("io_prob_inf.json");

  CliResult sol = run_cli("solve io_prob_inf.json");
  REQUIRE(sol.code == 1);
  nlohmann::json j = nlohmann::json::parse(sol.out);
  REQUIRE(j["status"] == "infeasible");
  REQUIRE(j["residuals"]["u_dot"].get<double>() < 0.0);
  oea::save_text("io_cert.json", sol.out);

  CliResult ok = run_cli("certify io_prob_inf.json --cert io_cert.json");
  REQUIRE(ok.code == 0);
  nlohmann::json cj = nlohmann::json::parse(ok.out);
  REQUIRE(cj["valid"] == true);
  REQUIRE(cj["kind"] == "dual-ray");

  // Tampered multipliers must be rejected.
  nlohmann::json bad = nlohmann::json::parse(slurp("io_cert.json"));
  bad["lambda_bar"][0] = -5.0;
  oea::save_text("io_cert_bad.json", bad.dump());
  CliResult tampered =
      run_cli("certify io_prob_inf.json --cert io_cert_bad.json");
  REQUIRE(tampered.code == 1);
  REQUIRE(nlohmann::json::parse(tampered.out)["valid"] == false);
  std::remove("io_cert.json");
  std::remove("io_cert_bad.json");

  CliResult declared = run_cli("solve io_prob_inf.json --algorithm oea-no-alt");
  REQUIRE(declared.code == 2);
  REQUIRE(nlohmann::json::parse(declared.out)["status"] ==
          "infeasible-declared");

  CliResult mm = run_cli(
      "solve io_prob_inf.json --algorithm oea-mm --cert-seq io_seq.bin");
  REQUIRE(mm.code == 1);
  CliResult seq_ok = run_cli("certify io_prob_inf.json --cert-seq io_seq.bin");
  REQUIRE(seq_ok.code == 0);
  REQUIRE(nlohmann::json::parse(seq_ok.out)["valid"] == true);
  std::remove("io_seq.bin");

  CliResult seap = run_cli("solve io_prob_inf.json --algorithm seap");
  REQUIRE(seap.code == 1);
  nlohmann::json sj = nlohmann::json::parse(seap.out);
  VectorXd lam(sj["lambda_bar"].size());
  for (std::size_t i = 0; i < sj["lambda_bar"].size(); ++i)
    lam(i) = sj["lambda_bar"][i].get<double>();
  REQUIRE(oea::verify_type_l(inst.p, lam, 1e-8).ok);
  std::remove("io_prob_inf.json");
}

TEST_CASE("cli: budget exhaustion and error reporting") {
  oea::save_text("io_sq_diag.json",
                 oea::serialize_instance(fixtures::square_with_diagonal_cut()));

  CliResult lim = run_cli("solve io_sq_diag.json --max-iter 0");
  REQUIRE(lim.code == 3);
  REQUIRE(nlohmann::json::parse(lim.out)["status"] == "iteration-limit");

  CliResult missing = run_cli("solve io_missing.json", true);
  REQUIRE(missing.code == 4);
  REQUIRE(nlohmann::json::parse(missing.out)["status"] == "error");

  CliResult no_cert = run_cli("certify io_sq_diag.json", true);
  REQUIRE(no_cert.code == 4);
  std::remove("io_sq_diag.json");
}

TEST_CASE("cli: bench sweep emits a csv and a summary table") {
  CliResult bench = run_cli(
      "bench --count 3 --suite mixed --seed 5 --algorithms oea,seap "
      "--out io_bench.csv",
      true);
  REQUIRE(bench.code == 0);
  REQUIRE(bench.out.find("algorithm") != std::string::npos);
  REQUIRE(bench.out.find("oea") != std::string::npos);
  REQUIRE(bench.out.find("seap") != std::string::npos);

  const std::string csv = slurp("io_bench.csv");
  std::istringstream ss(csv);
  std::string line;
  REQUIRE(std::getline(ss, line));
  REQUIRE(line ==
          "id,kind,n,m,algorithm,status,iterations,wall_ms,flops,"
          "rank1_updates,refactorizations,lambda_col_updates,backsolve_pairs,"
          "cert_valid,tau,bound,bound_satisfied,error");
  int rows = 0;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    ++rows;
    // id,kind,n,m,algorithm,status,...
    std::istringstream ls(line);
    std::string field;
    for (int k = 0; k < 6; ++k) REQUIRE(std::getline(ls, field, ','));
    REQUIRE(field != "error");
    if (field == "feasible" || field == "infeasible") {
      // cert_valid column is the 14th field
      std::istringstream ls2(line);
      for (int k = 0; k < 14; ++k) REQUIRE(std::getline(ls2, field, ','));
      REQUIRE(field == "1");
    }
  }
  REQUIRE(rows == 6);  // 3 instances x 2 algorithms
  std::remove("io_bench.csv");
}
