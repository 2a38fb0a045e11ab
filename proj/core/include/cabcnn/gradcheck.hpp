#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cabcnn {

// Test fixture: lets the fault-detection test corrupt one analytic
// gradient and verify the suite catches it.
enum class GradientFault {
    none,
    conv_backward,
};

struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

// Finite-difference verification of every layer's backward pass, the ACB,
// and the end-to-end model: central differences at eps 1e-5, L2 relative
// error, `n_seeds` independent random configurations per row. Inputs are
// drawn away from ReLU/max-pool kinks so the difference quotient estimates
// a true derivative; the end-to-end row additionally probes each checked
// coordinate at +/-eps and swaps out coordinates whose activation pattern
// changes inside the stencil (a two-sided derivative does not exist
// there). Thresholds: 1e-4 per layer and for the ACB, 1e-3 end to end.
std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed, std::int64_t n_seeds = 5,
                                             GradientFault fault = GradientFault::none);

}  // namespace cabcnn
