#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mgfi {

struct GradCheckOutcome {
    double max_rel_error = 0.0;
    int shapes = 0;
};

struct GradCheckCase {
    std::string name;
    double tolerance = 1e-3;
    std::function<GradCheckOutcome()> run;
};

// Frozen-seed central-difference checks for every differentiable op and each
// composite module. Seeds are searched deterministically for inputs clear of
// relu and bilinear-grid kinks before checking (margins via KinkAudit).
std::vector<GradCheckCase> gradcheck_suite();

}  // namespace mgfi
