#pragma once

#include <cstdint>

namespace scoreag {

struct GradCheckReport {
    int cases = 0;
    long coords_checked = 0;
    double max_rel_err = 0.0;
    bool passed(double tol) const { return max_rel_err < tol; }
};

/// Randomized composed-graph gradient check: builds random graphs from the
/// primitive op set (dims <= 8), runs backward, and compares every input
/// coordinate against central finite differences (h = 1e-5).
GradCheckReport run_gradcheck(int n_cases, uint64_t seed);

} // namespace scoreag
