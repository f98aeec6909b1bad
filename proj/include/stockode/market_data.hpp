#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "stockode/rng.hpp"
#include "stockode/tensor.hpp"

namespace stockode {

/// Ordered ticker list; the order fixes matrix row order everywhere.
struct StockUniverse {
  std::vector<std::string> tickers;
  std::unordered_map<std::string, std::size_t> index;

  static StockUniverse from_tickers(std::vector<std::string> tickers);
  static StockUniverse load(const std::filesystem::path& path);

  std::size_t size() const { return tickers.size(); }
  bool contains(const std::string& t) const { return index.count(t) > 0; }
};

struct DailyBar {
  std::string date;  // ISO-8601, so lexicographic order is chronological
  double open = 0, high = 0, low = 0, close = 0;
  double volume = 0;
};

/// Bars for every ticker aligned on the union calendar (gaps forward-filled).
struct BarPanel {
  StockUniverse universe;
  std::vector<std::string> calendar;          // sorted unique dates
  std::vector<std::vector<DailyBar>> series;  // [ticker][calendar index]
};

BarPanel load_bars(const std::filesystem::path& path,
                   const StockUniverse& universe);
void write_bars(const std::filesystem::path& path, const BarPanel& panel);

/// One-day return ratios; row t is the return from calendar day t to t+1.
struct ReturnSeries {
  std::vector<std::string> dates;  // dates of the return day (day 2 onward)
  Tensor r;                        // (days-1, N)
};

ReturnSeries compute_returns(const BarPanel& panel);

inline constexpr std::size_t kFeatureCount = 10;
inline constexpr std::size_t kMaWarmup = 30;  // longest moving-average span

/// Per-day feature slabs: 5 raw indicators followed by the 1-day return and
/// its 5/10/20/30-day moving averages. Days start after the warm-up needed
/// by the longest average.
struct FeaturePanel {
  std::vector<std::string> dates;  // usable feature days
  Tensor values;                   // (days, N, 10)
  Tensor returns;                  // (days, N) 1-day return on each usable day
  Tensor next_returns;             // (days, N) return of the following day;
                                   // last row only valid when a next day exists
  std::size_t days_with_target = 0;
  std::vector<std::string> feature_names;
};

FeaturePanel build_features(const BarPanel& panel, const ReturnSeries& rs);

/// A lookback window plus its prediction target.
struct WindowSample {
  Tensor features;        // (w, N, d_e)
  Tensor window_returns;  // (w, N) raw 1-day returns per window day
  Tensor target;          // (N,) next-day return ratios
  std::string start_day, end_day, target_day;
};

std::vector<WindowSample> build_windows(const FeaturePanel& features,
                                        std::size_t w);

struct DatasetSplits {
  std::vector<WindowSample> train, val, test;
};

/// Chronological split by window counts; counts must sum to the total.
DatasetSplits split(std::vector<WindowSample> windows,
                    const std::array<std::size_t, 3>& counts);

/// Full pipeline: returns, features, train-statistics z-normalization of the
/// five raw indicator channels, windows, chronological split. Counts of all
/// zero mean an automatic 60/20/20 split.
DatasetSplits build_dataset(const BarPanel& panel, std::size_t w,
                            std::array<std::size_t, 3> counts = {0, 0, 0});

struct RelationSet {
  struct Hyperedge {
    std::string label;
    std::vector<std::size_t> members;  // sorted universe indices
  };
  std::vector<Hyperedge> edges;
  std::size_t dropped_edges = 0;     // hyperedges with < 2 resolvable members
  std::size_t unknown_members = 0;   // tickers not found in the universe
};

RelationSet load_relations(const std::filesystem::path& path,
                           const StockUniverse& universe);
void write_relations(const std::filesystem::path& path,
                     const RelationSet& relations,
                     const StockUniverse& universe);

/// Synthetic desk-scale market: geometric random walks whose drifts follow a
/// planted per-stock score, group factor noise shared within hyperedges, and
/// hyperedges grouping stocks of similar score.
struct SynthMarket {
  BarPanel bars;
  RelationSet relations;
  std::vector<double> scores;  // planted latent score per stock
};

SynthMarket synth_market(std::size_t n_stocks, std::size_t n_days,
                         std::size_t n_hyperedges, double signal_strength,
                         std::uint64_t seed);

}  // namespace stockode
