#pragma once

#include <filesystem>
#include <vector>

#include "stockode/checkpoint.hpp"
#include "stockode/model.hpp"

namespace stockode {

struct TrajectoryRow {
  std::size_t window_index = 0;
  std::size_t day = 0;  // observation interval index within the window
  double fraction = 0.0;
  std::string stock;
  double hidden_norm = 0.0;
  double decoded_return = 0.0;
};

/// Intermediate-time hidden states for every (window, interval, fraction),
/// decoded through the fusion head. Fraction 1.0 reproduces the standard
/// per-day predictions. Requires a continuous-cell variant.
std::vector<TrajectoryRow> export_trajectories(
    StockOde& model, const std::vector<WindowSample>& windows,
    const std::vector<double>& fractions,
    const std::vector<std::string>& tickers);

void write_trajectories_csv(const std::filesystem::path& path,
                            const std::vector<TrajectoryRow>& rows);

}  // namespace stockode
