#pragma once

#include <string>

#include "knnshift/common.hpp"

namespace knnshift {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

/// "(x1, x2, ...)" for error messages.
std::string format_point(PointView x);

}  // namespace knnshift
