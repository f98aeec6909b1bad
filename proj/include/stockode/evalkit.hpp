#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "stockode/tensor.hpp"

namespace stockode {

/// Predicted and realized returns for one evaluation day.
struct DailyEvaluation {
  std::string date;
  Tensor r_hat;   // (N,)
  Tensor r_true;  // (N,)
  std::vector<std::size_t> predicted_order;  // descending r_hat
  std::vector<std::size_t> true_order;       // descending r_true
};

/// Descending sort of stock indices; ties broken by ascending index.
std::vector<std::size_t> ranking_order(const Tensor& r);

DailyEvaluation make_evaluation(std::string date, Tensor r_hat,
                                Tensor r_true);

/// (mean(returns) - risk_free) / sample std (n-1 denominator). Throws
/// NumericError when the returns have zero variance.
double sharpe_ratio(const std::vector<double>& daily_returns,
                    double risk_free);

/// Mean over days of 1 / (1-based true rank of the predicted top stock).
double mrr(const std::vector<DailyEvaluation>& evals);

/// NDCG@k with relevance = true return shifted by the day's minimum.
/// Days whose relevances are all zero are skipped (counted in the optional
/// out-parameter).
double ndcg_at_k(const std::vector<DailyEvaluation>& evals, std::size_t k = 5,
                 std::size_t* skipped_days = nullptr);

struct BacktestReport {
  std::size_t k = 5;
  double risk_free = 0.0;
  double sr = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double cumulative_return = 0.0;
  struct Day {
    std::string date;
    double portfolio_return;
    std::size_t rank_tau;  // true rank of the predicted top stock
  };
  std::vector<Day> daily;
};

/// Equal-weight the predicted top-k each day; aggregate SR, MRR, NDCG@5 and
/// the compounded cumulative return.
BacktestReport backtest_topk(const std::vector<DailyEvaluation>& evals,
                             std::size_t k, double risk_free);

void write_report_json(const std::filesystem::path& path,
                       const BacktestReport& report);

/// Rank-position matrices (rows = stocks subset, cols = days subset) for the
/// true and predicted orders; rank positions are 1-based.
struct RankingHeatmap {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;
  Tensor true_ranks;       // (|tickers|, |dates|)
  Tensor predicted_ranks;  // (|tickers|, |dates|)
};

RankingHeatmap ranking_heatmap(const std::vector<DailyEvaluation>& evals,
                               const std::vector<std::string>& all_tickers,
                               const std::vector<std::size_t>& stock_subset,
                               const std::vector<std::size_t>& day_subset);

void write_heatmap_csv(const std::filesystem::path& path,
                       const RankingHeatmap& hm);

}  // namespace stockode
