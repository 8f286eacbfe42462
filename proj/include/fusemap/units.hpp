#pragma once

#include <string_view>

#include "fusemap/workload.hpp"

namespace fusemap {

/// "64MiB", "1.5GiB", "512KB", "4096". Binary suffixes (KiB, MiB, GiB) are
/// powers of 1024, decimal ones (KB, MB, GB) powers of 1000.
Bytes parse_size(std::string_view text);

/// Bytes per second: "900GB/s" (1e9), "1GiB/s" (2^30), or a bare number.
double parse_bandwidth(std::string_view text);

/// Hertz: "1GHz", "800MHz", or a bare number.
double parse_frequency(std::string_view text);

}  // namespace fusemap
