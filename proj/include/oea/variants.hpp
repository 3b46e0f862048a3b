#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oea/solver.hpp"

namespace oea {

// Compressed history of witness-column refreshes: the initial matrix plus one
// (row, raw column) pair per refresh, in order. Any current column can be
// reconstructed by a backward substitution over the pairs, so the full matrix
// never has to be kept up to date.
struct CertIndexSeq {
  long m = 0;
  MatrixXd Lambda0;
  std::vector<std::pair<int, VectorXd>> pairs;  // 0-based rows
  long exit_j = -1;  // 0-based row whose column certified the exit; -1 if none
  std::size_t cap = 1u << 21;
  bool degraded = false;  // capacity hit: recording stopped, no certificate

  void append(int j, VectorXd lam_hat) {
    if (pairs.size() >= cap) {
      degraded = true;
      return;
    }
    pairs.emplace_back(j, std::move(lam_hat));
  }
};

// Reconstructs column q of the final witness matrix (optionally plus e_q).
// Pairs whose row never enters the running support are skipped, so the cost
// scales with the dependency chain of q, not with m times the history length.
inline VectorXd backsolve_column(const CertIndexSeq& seq, int q,
                                 bool add_unit) {
  const long m = seq.m;
  if (q < 0 || q >= m)
    throw SolverError(ErrorKind::PreconditionViolation, "column out of range", q);
  VectorXd w = VectorXd::Unit(m, q);
  VectorXd z = VectorXd::Zero(m);
  if (add_unit) z(q) = 1.0;
  for (auto it = seq.pairs.rbegin(); it != seq.pairs.rend(); ++it) {
    const int j = it->first;
    const double c = w(j);
    if (c == 0.0) continue;
    const VectorXd& lam_hat = it->second;
    w(j) -= c;
    w += c * (-lam_hat).cwiseMax(0.0);
    z += c * lam_hat.cwiseMax(0.0);
    op_counts().backsolve_pairs += 1;
    count_flops(4 * static_cast<std::uint64_t>(m));
  }
  count_flops(2 * static_cast<std::uint64_t>(m) * m);
  return seq.Lambda0 * w + z;
}

inline TypeLCertificate backsolve_type_l(const ProblemData& p,
                                         const CertIndexSeq& seq,
                                         double tol = 1e-8) {
  long q = seq.exit_j;
  if (q < 0 && !seq.pairs.empty()) q = seq.pairs.back().first;
  if (q < 0)
    throw SolverError(ErrorKind::EmptySequence,
                      "no recorded refresh to reconstruct a certificate from");
  return make_type_l(p, backsolve_column(seq, static_cast<int>(q), true), tol);
}

// Declares infeasibility without any witness bookkeeping. Stops at the same
// iteration with the same trace as the full run.
inline RunResult run_oea_no_alt(const Instance& inst,
                                const SolverConfig& cfg = {}) {
  return run_core(inst, cfg, declare_policy(), nullptr);
}

// Full stopping behavior at declared-run bookkeeping cost: refreshes are
// recorded as (row, raw column) pairs and only expanded at exit time.
inline RunResult run_oea_mm(const Instance& inst, const SolverConfig& cfg = {},
                            CertIndexSeq* seq_out = nullptr) {
  if (!inst.bounds)
    throw SolverError(ErrorKind::PreconditionViolation,
                      "solver needs certified lower bounds");
  CertIndexSeq seq;
  seq.m = inst.p.m;
  seq.Lambda0 = inst.bounds->Lambda;
  long budget =
      cfg.max_iter >= 0 ? cfg.max_iter : default_max_iter(inst.p, inst.bounds->l);
  seq.cap = static_cast<std::size_t>(budget) + 16;

  CertPolicy pol;
  pol.update = [&seq](int j, VectorXd lam_hat) {
    seq.append(j, std::move(lam_hat));
  };
  pol.column = [&seq](int q) {
    seq.exit_j = q;
    return backsolve_column(seq, q, false);
  };
  pol.is_active = [&seq]() { return !seq.degraded; };

  RunResult res = run_core(inst, cfg, pol, nullptr);
  res.degraded = seq.degraded;
  if (seq_out) *seq_out = std::move(seq);
  return res;
}

// ---------------------------------------------------------------------------
// Sidecar file: little-endian binary dump of a CertIndexSeq.
//   bytes 0-7   magic "OEACSEQ1"
//   u32         format version (1)
//   u64         m
//   u64         pair count k
//   u64         exit row, 1-based (0 when absent)
//   f64[m*m]    initial witness matrix, column-major
//   k times:    u64 row (1-based), f64[m] raw refresh column
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  std::uint64_t u64() {
    if (pos + 8 > buf.size())
      throw SolverError(ErrorKind::ParseError, "sidecar truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace detail

inline std::string serialize_cert_seq(const CertIndexSeq& seq) {
  std::string out = "OEACSEQ1";
  out.push_back(1);
  out.push_back(0);
  out.push_back(0);
  out.push_back(0);
  detail::put_u64(out, static_cast<std::uint64_t>(seq.m));
  detail::put_u64(out, static_cast<std::uint64_t>(seq.pairs.size()));
  detail::put_u64(out, seq.exit_j >= 0 ? static_cast<std::uint64_t>(seq.exit_j + 1) : 0);
  for (long c = 0; c < seq.m; ++c)
    for (long r = 0; r < seq.m; ++r) detail::put_f64(out, seq.Lambda0(r, c));
  for (const auto& [j, col] : seq.pairs) {
    detail::put_u64(out, static_cast<std::uint64_t>(j) + 1);
    for (long r = 0; r < seq.m; ++r) detail::put_f64(out, col(r));
  }
  return out;
}

inline CertIndexSeq parse_cert_seq(const std::string& buf) {
  if (buf.size() < 12 || buf.compare(0, 8, "OEACSEQ1") != 0)
    throw SolverError(ErrorKind::ParseError, "bad sidecar magic");
  std::uint32_t version = static_cast<unsigned char>(buf[8]) |
                          (static_cast<unsigned char>(buf[9]) << 8) |
                          (static_cast<unsigned char>(buf[10]) << 16) |
                          (static_cast<unsigned char>(buf[11]) << 24);
  if (version != 1)
    throw SolverError(ErrorKind::ParseError, "unsupported sidecar version");
  detail::ByteReader rd{buf, 12};
  const std::uint64_t m = rd.u64();
  const std::uint64_t k = rd.u64();
  const std::uint64_t exit1 = rd.u64();
  if (m == 0 || m > 100000 || k > (1u << 24))
    throw SolverError(ErrorKind::ParseError, "implausible sidecar sizes");
  const std::size_t need = 12 + 3 * 8 + 8 * (m * m + k * (m + 1));
  if (buf.size() != need)
    throw SolverError(ErrorKind::ParseError, "sidecar size mismatch");
  CertIndexSeq seq;
  seq.m = static_cast<long>(m);
  seq.Lambda0.resize(m, m);
  for (std::uint64_t c = 0; c < m; ++c)
    for (std::uint64_t r = 0; r < m; ++r) seq.Lambda0(r, c) = rd.f64();
  seq.pairs.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    std::uint64_t j1 = rd.u64();
    if (j1 == 0 || j1 > m)
      throw SolverError(ErrorKind::ParseError, "sidecar row index out of range");
    VectorXd col(m);
    for (std::uint64_t r = 0; r < m; ++r) col(r) = rd.f64();
    seq.pairs.emplace_back(static_cast<int>(j1 - 1), std::move(col));
  }
  if (exit1 > m) throw SolverError(ErrorKind::ParseError, "sidecar exit row out of range");
  seq.exit_j = exit1 == 0 ? -1 : static_cast<long>(exit1 - 1);
  return seq;
}

inline void save_cert_seq(const std::string& path, const CertIndexSeq& seq) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SolverError(ErrorKind::ParseError, "cannot open " + path);
  std::string bytes = serialize_cert_seq(seq);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw SolverError(ErrorKind::ParseError, "write failed: " + path);
}

inline CertIndexSeq load_cert_seq(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SolverError(ErrorKind::ParseError, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return parse_cert_seq(buf);
}

}  // namespace oea
