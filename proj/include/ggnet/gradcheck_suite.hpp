#pragma once

// Finite-difference checks of every hand-written backward pass on small
// random double-precision problems.

#include <string>
#include <vector>

#include "ggnet/gradcheck.hpp"

namespace ggnet {

/// Names accepted by run_gradcheck, in a fixed order.
const std::vector<std::string>& gradcheck_ops();

/// Checks one op on the problem drawn from `seed`. Reports for the op's
/// separate inputs are merged: worst errors, all must pass.
GradCheckReport run_gradcheck(const std::string& op, int seed);

GradCheckReport merge_reports(const GradCheckReport& a, const GradCheckReport& b);

} // namespace ggnet
