#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace oea {

enum class ErrorKind {
  ZeroColumn,
  RankDeficient,
  DimensionMismatch,
  BadSpec,
  RedundantConstraint,
  TooLarge,
  AssumptionViolated,
  SingularShape,
  NotPositiveVolume,
  PreconditionViolation,
  RepresentationMismatch,
  MissingTau,
  NotACertificate,
  PreconditionTypeQ,
  NumericalBreakdown,
  EmptySequence,
  ParseError,
  InvariantViolation,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ZeroColumn: return "ZeroColumn";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BadSpec: return "BadSpec";
    case ErrorKind::RedundantConstraint: return "RedundantConstraint";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::SingularShape: return "SingularShape";
    case ErrorKind::NotPositiveVolume: return "NotPositiveVolume";
    case ErrorKind::PreconditionViolation: return "PreconditionViolation";
    case ErrorKind::RepresentationMismatch: return "RepresentationMismatch";
    case ErrorKind::MissingTau: return "MissingTau";
    case ErrorKind::NotACertificate: return "NotACertificate";
    case ErrorKind::PreconditionTypeQ: return "PreconditionTypeQ";
    case ErrorKind::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorKind kind, const std::string& msg, long index = -1)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg),
        kind_(kind),
        index_(index) {}

  ErrorKind kind() const { return kind_; }
  // Constraint index attached to the error, -1 if not applicable.
  long index() const { return index_; }

 private:
  ErrorKind kind_;
  long index_;
};

// Thrown when construction already exposes a dual ray (l_i > u_i for some
// row): carries the ray plus the assembled system so callers can verify and
// report infeasibility without rebuilding the instance.
class ImmediateInfeasible : public SolverError {
 public:
  ImmediateInfeasible(long row, Eigen::VectorXd lambda_bar, Eigen::MatrixXd A,
                      Eigen::VectorXd u)
      : SolverError(ErrorKind::InvariantViolation,
                    "row " + std::to_string(row) +
                        " has a lower bound above its upper bound",
                    row),
        lambda_bar_(std::move(lambda_bar)),
        A_(std::move(A)),
        u_(std::move(u)) {}

  const Eigen::VectorXd& lambda_bar() const { return lambda_bar_; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& u() const { return u_; }

 private:
  Eigen::VectorXd lambda_bar_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd u_;
};

}  // namespace oea
