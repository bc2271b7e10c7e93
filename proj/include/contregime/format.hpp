#pragma once

#include <string>

namespace contregime {

/// Shortest round-trip decimal rendering ("inf"/"-inf"/"nan").
/// Used for every CSV cell so reruns reproduce files byte for byte.
std::string format_double(double x);

}  // namespace contregime
