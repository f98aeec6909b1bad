#include "stockode/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "stockode/errors.hpp"

namespace stockode {

std::vector<std::size_t> ranking_order(const Tensor& r) {
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
  return order;
}

DailyEvaluation make_evaluation(std::string date, Tensor r_hat,
                                Tensor r_true) {
  check_same_shape(r_hat, r_true, "make_evaluation");
  DailyEvaluation e;
  e.date = std::move(date);
  e.predicted_order = ranking_order(r_hat);
  e.true_order = ranking_order(r_true);
  e.r_hat = std::move(r_hat);
  e.r_true = std::move(r_true);
  return e;
}

double sharpe_ratio(const std::vector<double>& daily_returns,
                    double risk_free) {
  if (daily_returns.size() < 2) {
    throw ContractError("sharpe_ratio: need at least 2 days");
  }
  const double n = double(daily_returns.size());
  double mean = 0.0;
  for (double r : daily_returns) mean += r;
  mean /= n;
  double ss = 0.0;
  for (double r : daily_returns) ss += (r - mean) * (r - mean);
  const double stdev = std::sqrt(ss / (n - 1.0));
  if (stdev == 0.0) {
    throw NumericError("sharpe_ratio: zero standard deviation");
  }
  return (mean - risk_free) / stdev;
}

namespace {

std::size_t true_rank_of_predicted_top(const DailyEvaluation& e) {
  const std::size_t top = e.predicted_order.at(0);
  for (std::size_t pos = 0; pos < e.true_order.size(); ++pos) {
    if (e.true_order[pos] == top) return pos + 1;
  }
  throw ContractError("evaluation orders are not permutations");
}

}  // namespace

double mrr(const std::vector<DailyEvaluation>& evals) {
  if (evals.empty()) throw ContractError("mrr: no evaluation days");
  double acc = 0.0;
  for (const auto& e : evals) {
    acc += 1.0 / double(true_rank_of_predicted_top(e));
  }
  return acc / double(evals.size());
}

double ndcg_at_k(const std::vector<DailyEvaluation>& evals, std::size_t k,
                 std::size_t* skipped_days) {
  if (evals.empty()) throw ContractError("ndcg_at_k: no evaluation days");
  if (evals.front().r_true.size() < k) {
    throw ContractError("ndcg_at_k: k exceeds the number of stocks");
  }
  double acc = 0.0;
  std::size_t counted = 0, skipped = 0;
  for (const auto& e : evals) {
    double min_ret = e.r_true[0];
    for (std::size_t i = 1; i < e.r_true.size(); ++i)
      min_ret = std::min(min_ret, e.r_true[i]);
    auto rel = [&](std::size_t stock) {
      return std::max(e.r_true[stock] - min_ret, 0.0);
    };
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double discount = std::log2(double(i) + 2.0);
      dcg += rel(e.predicted_order[i]) / discount;
      idcg += rel(e.true_order[i]) / discount;
    }
    if (idcg == 0.0) {
      ++skipped;
      std::cerr << "ndcg_at_k: skipping day " << e.date
                << " (all relevances zero)\n";
      continue;
    }
    acc += dcg / idcg;
    ++counted;
  }
  if (skipped_days) *skipped_days = skipped;
  if (counted == 0) throw NumericError("ndcg_at_k: every day was skipped");
  return acc / double(counted);
}

BacktestReport backtest_topk(const std::vector<DailyEvaluation>& evals,
                             std::size_t k, double risk_free) {
  if (evals.empty()) throw ContractError("backtest_topk: no evaluation days");
  if (k == 0 || k > evals.front().r_true.size()) {
    throw ConfigError("backtest_topk: k = " + std::to_string(k) +
                      " outside [1, " +
                      std::to_string(evals.front().r_true.size()) + "]");
  }
  BacktestReport report;
  report.k = k;
  report.risk_free = risk_free;

  std::vector<double> daily_returns;
  double growth = 1.0;
  for (const auto& e : evals) {
    double ret = 0.0;
    for (std::size_t i = 0; i < k; ++i) ret += e.r_true[e.predicted_order[i]];
    ret /= double(k);
    daily_returns.push_back(ret);
    growth *= 1.0 + ret;
    report.daily.push_back({e.date, ret, true_rank_of_predicted_top(e)});
  }
  report.cumulative_return = growth - 1.0;
  report.sr = sharpe_ratio(daily_returns, risk_free);
  report.mrr = mrr(evals);
  report.ndcg5 = ndcg_at_k(evals, std::min<std::size_t>(5, k));
  return report;
}

void write_report_json(const std::filesystem::path& path,
                       const BacktestReport& report) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["risk_free"] = report.risk_free;
  j["sr"] = report.sr;
  j["mrr"] = report.mrr;
  j["ndcg5"] = report.ndcg5;
  j["cumulative_return"] = report.cumulative_return;
  j["daily"] = nlohmann::ordered_json::array();
  for (const auto& d : report.daily) {
    j["daily"].push_back({{"date", d.date},
                          {"portfolio_return", d.portfolio_return},
                          {"rank_tau", d.rank_tau}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report " + path.string());
  out << j.dump(2) << '\n';
}

RankingHeatmap ranking_heatmap(const std::vector<DailyEvaluation>& evals,
                               const std::vector<std::string>& all_tickers,
                               const std::vector<std::size_t>& stock_subset,
                               const std::vector<std::size_t>& day_subset) {
  if (stock_subset.empty() || day_subset.empty()) {
    throw ContractError("ranking_heatmap: empty subset");
  }
  RankingHeatmap hm;
  hm.true_ranks = Tensor({stock_subset.size(), day_subset.size()});
  hm.predicted_ranks = Tensor({stock_subset.size(), day_subset.size()});
  for (std::size_t s : stock_subset) {
    if (s >= all_tickers.size()) {
      throw ContractError("ranking_heatmap: stock index out of range");
    }
    hm.tickers.push_back(all_tickers[s]);
  }
  for (std::size_t c = 0; c < day_subset.size(); ++c) {
    const DailyEvaluation& e = evals.at(day_subset[c]);
    hm.dates.push_back(e.date);
    const std::size_t n = e.r_true.size();
    std::vector<std::size_t> true_pos(n), pred_pos(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
      true_pos[e.true_order[pos]] = pos + 1;
      pred_pos[e.predicted_order[pos]] = pos + 1;
    }
    for (std::size_t r = 0; r < stock_subset.size(); ++r) {
      hm.true_ranks.at(r, c) = double(true_pos[stock_subset[r]]);
      hm.predicted_ranks.at(r, c) = double(pred_pos[stock_subset[r]]);
    }
  }
  return hm;
}

void write_heatmap_csv(const std::filesystem::path& path,
                       const RankingHeatmap& hm) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write heatmap " + path.string());
  out << "kind,ticker";
  for (const auto& d : hm.dates) out << ',' << d;
  out << '\n';
  for (int kind = 0; kind < 2; ++kind) {
    const Tensor& m = kind == 0 ? hm.true_ranks : hm.predicted_ranks;
    for (std::size_t r = 0; r < hm.tickers.size(); ++r) {
      out << (kind == 0 ? "true" : "predicted") << ',' << hm.tickers[r];
      for (std::size_t c = 0; c < hm.dates.size(); ++c)
        out << ',' << std::size_t(m.at(r, c));
      out << '\n';
    }
  }
}

}  // namespace stockode
