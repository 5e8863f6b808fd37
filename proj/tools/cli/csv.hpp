#pragma once

// Numeric CSV: comma separated, '.' decimal point, optional single header
// row (detected when any field of the first row is not a number).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phaselock/signalcore.hpp"

namespace phaselock::cli {

struct Table {
  std::vector<std::string> header;  // empty when the file has none
  RowMatrix values;                 // rows x columns as in the file
};

Table parse_csv(const std::string& text);
Table read_csv(const std::filesystem::path& path);

/// Time-major CSV (one sample per row) to a channel-major signal.
SignalMatrix read_signal_csv(const std::filesystem::path& path);

std::string format_number(double v, int precision);
std::string to_csv(const RowMatrix& values, const std::vector<std::string>& header, int precision);

/// Channel-major matrix written time-major (transposed).
std::string signal_to_csv(const RowMatrix& channels_by_time, const std::string& prefix, int precision);

}  // namespace phaselock::cli
