#pragma once

#include <functional>
#include <string>
#include <vector>

namespace kinetica {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;  // measured value against its tolerance
    double seconds = 0.0;
};

/// Projector adjointness on random image/sinogram pairs over the desk grid.
CheckResult check_adjointness(int pairs = 50);
/// Closed-form v-updates against golden-section maximization; T = 1 RE Logan
/// against Patlak bitwise.
CheckResult check_v_updates(int tuples = 1000);
/// Central differences of the full 8x8 network, kernel and kinetic layers included.
CheckResult check_network_gradient(int coordinates = 20);
/// Kernel rows against a brute-force window search plus the two analytic weights.
CheckResult check_kernel_oracle();
/// Rebinning, cumulative binning and Logan vs RE Logan slopes.
CheckResult check_relogan_plumbing();

/// Every check above, in order.
std::vector<CheckResult> run_selftests();

/// Runs `body`, times it and converts exceptions into a failed result.
CheckResult timed_check(const std::string& name, const std::function<CheckResult()>& body);

}  // namespace kinetica
