#pragma once

#include <cstdint>

namespace oea {

// Rough floating-point work estimates for the dominant kernels. Used by the
// bench harness for order-of-growth checks, not for exact accounting.
struct OpCounts {
  std::uint64_t flops = 0;
  std::uint64_t refactorizations = 0;
  std::uint64_t rank1_updates = 0;
  std::uint64_t lambda_col_updates = 0;  // dense certificate-matrix updates
  std::uint64_t backsolve_pairs = 0;     // pairs consumed by a backsolve

  OpCounts& operator+=(const OpCounts& o) {
    flops += o.flops;
    refactorizations += o.refactorizations;
    rank1_updates += o.rank1_updates;
    lambda_col_updates += o.lambda_col_updates;
    backsolve_pairs += o.backsolve_pairs;
    return *this;
  }
};

inline OpCounts& op_counts() {
  thread_local OpCounts counts;
  return counts;
}

inline void reset_op_counts() { op_counts() = OpCounts{}; }

inline void count_flops(std::uint64_t n) { op_counts().flops += n; }

}  // namespace oea
