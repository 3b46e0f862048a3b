#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "oea/errors.hpp"
#include "oea/problem.hpp"

namespace oea {

// Doubles are emitted with 17 significant digits so parse(serialize(x))
// reproduces every bit. Emission is hand-rolled (std::to_chars is
// locale-independent); parsing uses the vendored JSON library.
inline std::string fmt_double(double v) {
  if (!std::isfinite(v))
    throw SolverError(ErrorKind::InvariantViolation, "non-finite value in output");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace detail {

class JsonWriter {
 public:
  void begin_obj() { sep(); out_ << '{'; stack_.push_back(true); fresh_ = true; }
  void end_obj() { out_ << '}'; stack_.pop_back(); fresh_ = false; }
  void begin_arr() { sep(); out_ << '['; stack_.push_back(true); fresh_ = true; }
  void end_arr() { out_ << ']'; stack_.pop_back(); fresh_ = false; }
  void key(const std::string& k) { sep(); out_ << '"' << k << "\":"; fresh_ = true; }
  void value(double v) { sep(); out_ << fmt_double(v); }
  void value(long v) { sep(); out_ << v; }
  void value(int v) { sep(); out_ << v; }
  void value(bool v) { sep(); out_ << (v ? "true" : "false"); }
  void value(const std::string& s) {
    sep();
    out_ << '"';
    for (char c : s) {
      switch (c) {
        case '"': out_ << "\\\""; break;
        case '\\': out_ << "\\\\"; break;
        case '\n': out_ << "\\n"; break;
        case '\r': out_ << "\\r"; break;
        case '\t': out_ << "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char b[8];
            std::snprintf(b, sizeof b, "\\u%04x", c);
            out_ << b;
          } else {
            out_ << c;
          }
      }
    }
    out_ << '"';
  }
  void vector(const Eigen::VectorXd& v) {
    begin_arr();
    for (int i = 0; i < v.size(); ++i) value(v(i));
    end_arr();
  }
  void columns(const Eigen::MatrixXd& M) {
    begin_arr();
    for (int j = 0; j < M.cols(); ++j) vector(M.col(j));
    end_arr();
  }
  std::string str() const { return out_.str(); }

 private:
  void sep() {
    if (!stack_.empty() && !fresh_) out_ << ',';
    fresh_ = false;
  }
  std::ostringstream out_;
  std::vector<bool> stack_;
  bool fresh_ = true;
};

inline Eigen::VectorXd parse_vector(const nlohmann::json& j, const char* what) {
  if (!j.is_array())
    throw SolverError(ErrorKind::ParseError, std::string(what) + " must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw SolverError(ErrorKind::ParseError, std::string(what) + " must be numeric");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd parse_columns(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty())
    throw SolverError(ErrorKind::ParseError,
                      std::string(what) + " must be a non-empty array of columns");
  Eigen::VectorXd c0 = parse_vector(j[0], what);
  Eigen::MatrixXd M(c0.size(), j.size());
  M.col(0) = c0;
  for (std::size_t i = 1; i < j.size(); ++i) {
    Eigen::VectorXd c = parse_vector(j[i], what);
    if (c.size() != M.rows())
      throw SolverError(ErrorKind::ParseError,
                        std::string(what) + " has ragged columns");
    M.col(static_cast<int>(i)) = c;
  }
  return M;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Problem files.
//
//   {"version":1, "n":2, "m":4,
//    "A":[[...column...],...], "u":[...],
//    "l":[...]?, "Lambda":[[...column...],...]?,
//    "box":{"A_hat":[[...]],"u_hat":[...],"lo":[...],"hi":[...]}?,
//    "meta":{"tau":..?,"rho":..?,"feasible":..?}?}
//
// "box" is mutually exclusive with A/u/l/Lambda; the full system is derived
// from it on parse. Columns are stored column-major (list of columns).
// ---------------------------------------------------------------------------

inline std::string serialize_instance(const Instance& inst) {
  detail::JsonWriter w;
  w.begin_obj();
  w.key("version");
  w.value(1);
  w.key("n");
  w.value(inst.p.n);
  w.key("m");
  w.value(inst.p.m);
  if (inst.box) {
    w.key("box");
    w.begin_obj();
    w.key("A_hat");
    w.columns(inst.box->A_hat);
    w.key("u_hat");
    w.vector(inst.box->u_hat);
    w.key("lo");
    w.vector(inst.box->lo);
    w.key("hi");
    w.vector(inst.box->hi);
    w.end_obj();
  } else {
    w.key("A");
    w.columns(inst.p.A);
    w.key("u");
    w.vector(inst.p.u);
    if (inst.bounds) {
      w.key("l");
      w.vector(inst.bounds->l);
      w.key("Lambda");
      w.columns(inst.bounds->Lambda);
    }
  }
  if (inst.meta.tau || inst.meta.rho || inst.meta.feasible) {
    w.key("meta");
    w.begin_obj();
    if (inst.meta.tau) {
      w.key("tau");
      w.value(*inst.meta.tau);
    }
    if (inst.meta.rho) {
      w.key("rho");
      w.value(*inst.meta.rho);
    }
    if (inst.meta.feasible) {
      w.key("feasible");
      w.value(*inst.meta.feasible);
    }
    w.end_obj();
  }
  w.end_obj();
  return w.str();
}

inline Instance parse_instance_checked(const nlohmann::json& j);

inline Instance parse_instance(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw SolverError(ErrorKind::ParseError, e.what());
  }
  try {
    return parse_instance_checked(j);
  } catch (const nlohmann::json::exception& e) {
    throw SolverError(ErrorKind::ParseError, e.what());
  }
}

inline Instance parse_instance_checked(const nlohmann::json& j) {
  if (!j.is_object()) throw SolverError(ErrorKind::ParseError, "not a JSON object");
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != 1)
    throw SolverError(ErrorKind::ParseError, "unsupported or missing version");
  if (!j.contains("n") || !j.contains("m"))
    throw SolverError(ErrorKind::ParseError, "missing n or m");
  const int n = j["n"].get<int>();
  const int m = j["m"].get<int>();

  const bool has_box = j.contains("box");
  const bool has_explicit = j.contains("A") || j.contains("u") ||
                            j.contains("l") || j.contains("Lambda");
  if (has_box && has_explicit)
    throw SolverError(ErrorKind::ParseError,
                      "box form and explicit A/u/l/Lambda are mutually exclusive");

  Instance inst;
  if (has_box) {
    const auto& jb = j["box"];
    BoxSystem box;
    box.lo = detail::parse_vector(jb.at("lo"), "box.lo");
    box.hi = detail::parse_vector(jb.at("hi"), "box.hi");
    box.u_hat = jb.contains("u_hat")
                    ? detail::parse_vector(jb["u_hat"], "box.u_hat")
                    : Eigen::VectorXd(0);
    if (box.u_hat.size() > 0)
      box.A_hat = detail::parse_columns(jb.at("A_hat"), "box.A_hat");
    else
      box.A_hat.resize(box.lo.size(), 0);
    if (box.A_hat.cols() != box.u_hat.size())
      throw SolverError(ErrorKind::ParseError, "box.A_hat / box.u_hat mismatch");
    try {
      inst = from_box(box);
    } catch (const ImmediateInfeasible&) {
      throw;  // carries a usable dual ray; let callers report it
    } catch (const SolverError& e) {
      throw SolverError(ErrorKind::InvariantViolation, e.what());
    }
  } else {
    if (!j.contains("A") || !j.contains("u"))
      throw SolverError(ErrorKind::ParseError, "missing A or u");
    inst.p.A = detail::parse_columns(j["A"], "A");
    inst.p.u = detail::parse_vector(j["u"], "u");
    inst.p.n = n;
    inst.p.m = m;
    if (j.contains("l") != j.contains("Lambda"))
      throw SolverError(ErrorKind::ParseError, "l and Lambda must come together");
    if (j.contains("l")) {
      CertifiedBounds b;
      b.l = detail::parse_vector(j["l"], "l");
      b.Lambda = detail::parse_columns(j["Lambda"], "Lambda");
      inst.bounds = std::move(b);
    }
    try {
      inst.p.validate();
      if (inst.bounds) {
        BoundsCheck c = check_certified_bounds(inst.p, *inst.bounds);
        if (!c.ok())
          throw SolverError(ErrorKind::InvariantViolation,
                            "lower-bound witnesses fail verification");
      }
    } catch (const SolverError& e) {
      if (e.kind() == ErrorKind::InvariantViolation) throw;
      throw SolverError(ErrorKind::InvariantViolation, e.what());
    }
  }
  if (inst.p.n != n || inst.p.m != m)
    throw SolverError(ErrorKind::ParseError, "declared n/m disagree with data");

  if (j.contains("meta")) {
    const auto& jm = j["meta"];
    if (jm.contains("tau")) inst.meta.tau = jm["tau"].get<double>();
    if (jm.contains("rho")) inst.meta.rho = jm["rho"].get<double>();
    if (jm.contains("feasible")) inst.meta.feasible = jm["feasible"].get<bool>();
  }
  inst.ensure_d0();
  return inst;
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SolverError(ErrorKind::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_instance(ss.str());
}

inline void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw SolverError(ErrorKind::ParseError, "cannot write " + path);
  out << text;
}

}  // namespace oea
