#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stockode/evalkit.hpp"
#include "stockode/rng.hpp"

using namespace stockode;
namespace fs = std::filesystem;

namespace {

DailyEvaluation random_eval(Rng& rng, std::size_t n, const std::string& date) {
  return make_evaluation(date, rng.normal_tensor({n}),
                         rng.normal_tensor({n}));
}

// independent rank lookup: position of the predicted top stock in a freshly
// sorted copy of the true returns
std::size_t brute_force_rank(const DailyEvaluation& e) {
  const std::size_t top = e.predicted_order[0];
  std::size_t rank = 1;
  for (std::size_t s = 0; s < e.r_true.size(); ++s) {
    if (e.r_true[s] > e.r_true[top]) ++rank;
    if (e.r_true[s] == e.r_true[top] && s < top) ++rank;
  }
  return rank;
}

// textbook NDCG with explicit sorts, kept free of the library's helpers
double brute_force_ndcg(const DailyEvaluation& e, std::size_t k) {
  double min_ret = e.r_true[0];
  for (std::size_t i = 1; i < e.r_true.size(); ++i)
    min_ret = std::min(min_ret, e.r_true[i]);
  std::vector<double> rel(e.r_true.size());
  for (std::size_t i = 0; i < rel.size(); ++i)
    rel[i] = e.r_true[i] - min_ret;
  std::vector<double> ideal = rel;
  std::sort(ideal.rbegin(), ideal.rend());
  double dcg = 0, idcg = 0;
  for (std::size_t i = 0; i < k; ++i) {
    dcg += rel[e.predicted_order[i]] / std::log2(double(i) + 2.0);
    idcg += ideal[i] / std::log2(double(i) + 2.0);
  }
  return dcg / idcg;
}

}  // namespace

TEST_CASE("sharpe ratio") {
  SUBCASE("constant returns have no defined ratio") {
    CHECK_THROWS_AS(sharpe_ratio({0.01, 0.01}, 0.0), NumericError);
  }
  SUBCASE("two-point hand computation") {
    CHECK(sharpe_ratio({0.01, 0.03}, 0.0) ==
          doctest::Approx(0.02 / 0.0141421356).epsilon(1e-6));
    CHECK(sharpe_ratio({0.01, 0.03}, 0.0) ==
          doctest::Approx(1.41421).epsilon(1e-4));
  }
  SUBCASE("strictly decreasing in the risk-free rate") {
    Rng rng(3);
    std::vector<double> rets;
    for (int i = 0; i < 30; ++i) rets.push_back(0.01 * rng.normal());
    double prev = sharpe_ratio(rets, -0.01);
    for (double rf : {0.0, 0.01, 0.02}) {
      const double cur = sharpe_ratio(rets, rf);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("mrr") {
  SUBCASE("perfect predictions give 1") {
    Rng rng(5);
    std::vector<DailyEvaluation> evals;
    for (int d = 0; d < 10; ++d) {
      Tensor truth = rng.normal_tensor({6});
      evals.push_back(make_evaluation("day", truth, truth));
    }
    CHECK(mrr(evals) == 1.0);
  }
  SUBCASE("hand-computed ranks 1, 2, 4") {
    std::vector<DailyEvaluation> evals;
    // predicted top stock 0; its true ranks: 1, 2, 4
    evals.push_back(make_evaluation("a", Tensor({4}, {9, 1, 2, 3}),
                                    Tensor({4}, {4, 1, 2, 3})));
    evals.push_back(make_evaluation("b", Tensor({4}, {9, 1, 2, 3}),
                                    Tensor({4}, {3, 4, 1, 2})));
    evals.push_back(make_evaluation("c", Tensor({4}, {9, 1, 2, 3}),
                                    Tensor({4}, {1, 2, 3, 4})));
    CHECK(mrr(evals) == doctest::Approx((1.0 + 0.5 + 0.25) / 3.0));
    CHECK(mrr(evals) == doctest::Approx(0.58333).epsilon(1e-4));
  }
  SUBCASE("matches the brute-force rank lookup on random data") {
    Rng rng(7);
    std::vector<DailyEvaluation> evals;
    double expect = 0.0;
    for (int d = 0; d < 1000; ++d) {
      evals.push_back(random_eval(rng, 20, "d" + std::to_string(d)));
      expect += 1.0 / double(brute_force_rank(evals.back()));
    }
    CHECK(mrr(evals) == expect / 1000.0);
  }
  SUBCASE("value range") {
    Rng rng(9);
    std::vector<DailyEvaluation> evals = {random_eval(rng, 8, "x")};
    const double v = mrr(evals);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("ndcg at k") {
  SUBCASE("predicted order equal to true order gives exactly 1") {
    Rng rng(11);
    std::vector<DailyEvaluation> evals;
    for (int d = 0; d < 5; ++d) {
      Tensor truth = rng.normal_tensor({7});
      evals.push_back(make_evaluation("day", truth, truth));
    }
    CHECK(ndcg_at_k(evals, 5) == 1.0);
  }
  SUBCASE("two items reversed") {
    // relevances 1, 0; reversed prediction puts the zero first
    std::vector<DailyEvaluation> evals = {make_evaluation(
        "day", Tensor({2}, {0.0, 1.0}), Tensor({2}, {1.0, 0.0}))};
    CHECK(ndcg_at_k(evals, 2) ==
          doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-9));
    CHECK(ndcg_at_k(evals, 2) == doctest::Approx(0.63093).epsilon(1e-4));
  }
  SUBCASE("matches an independent implementation to 1e-12") {
    Rng rng(13);
    for (int d = 0; d < 200; ++d) {
      std::vector<DailyEvaluation> one = {random_eval(rng, 20, "d")};
      CHECK(std::abs(ndcg_at_k(one, 5) - brute_force_ndcg(one[0], 5)) <
            1e-12);
    }
  }
  SUBCASE("all-equal returns are skipped") {
    std::vector<DailyEvaluation> evals = {
        make_evaluation("flat", Tensor({5}, {1, 2, 3, 4, 5}),
                        Tensor::full({5}, 0.01)),
        make_evaluation("ok", Tensor({5}, {5, 4, 3, 2, 1}),
                        Tensor({5}, {0.05, 0.04, 0.03, 0.02, 0.01}))};
    std::size_t skipped = 0;
    CHECK(ndcg_at_k(evals, 5, &skipped) == 1.0);
    CHECK(skipped == 1);
  }
}

TEST_CASE("backtest") {
  Rng rng(17);
  std::vector<DailyEvaluation> oracle;
  for (int d = 0; d < 30; ++d) {
    Tensor truth = rng.normal_tensor({10});
    oracle.push_back(
        make_evaluation("d" + std::to_string(d), truth, truth));
  }

  SUBCASE("oracle predictions earn the true top-k mean each day") {
    BacktestReport rep = backtest_topk(oracle, 3, 0.0);
    for (std::size_t d = 0; d < oracle.size(); ++d) {
      const auto& e = oracle[d];
      double best = 0.0;
      for (std::size_t i = 0; i < 3; ++i) best += e.r_true[e.true_order[i]];
      CHECK(rep.daily[d].portfolio_return == doctest::Approx(best / 3.0));
    }
    CHECK(rep.mrr == 1.0);
  }

  SUBCASE("k = N is model independent") {
    Rng noise(19);
    std::vector<DailyEvaluation> scrambled;
    for (const auto& e : oracle) {
      scrambled.push_back(
          make_evaluation(e.date, noise.normal_tensor({10}), e.r_true));
    }
    BacktestReport a = backtest_topk(oracle, 10, 0.0);
    BacktestReport b = backtest_topk(scrambled, 10, 0.0);
    for (std::size_t d = 0; d < a.daily.size(); ++d)
      CHECK(a.daily[d].portfolio_return ==
            doctest::Approx(b.daily[d].portfolio_return).epsilon(1e-12));
  }

  SUBCASE("cumulative return compounds") {
    BacktestReport rep = backtest_topk(oracle, 3, 0.0);
    double growth = 1.0;
    for (const auto& d : rep.daily) growth *= 1.0 + d.portfolio_return;
    CHECK(rep.cumulative_return == doctest::Approx(growth - 1.0));
  }

  SUBCASE("k beyond the universe is rejected") {
    CHECK_THROWS_AS(backtest_topk(oracle, 11, 0.0), ConfigError);
  }

  SUBCASE("metrics are invariant under consistent relabeling") {
    const std::size_t perm[10] = {3, 1, 4, 0, 9, 2, 7, 5, 8, 6};
    std::vector<DailyEvaluation> relabeled;
    for (const auto& e : oracle) {
      Tensor rh({10}), rt({10});
      for (std::size_t s = 0; s < 10; ++s) {
        rh[s] = e.r_hat[perm[s]];
        rt[s] = e.r_true[perm[s]];
      }
      relabeled.push_back(make_evaluation(e.date, rh, rt));
    }
    BacktestReport a = backtest_topk(oracle, 5, 0.0);
    BacktestReport b = backtest_topk(relabeled, 5, 0.0);
    CHECK(a.sr == doctest::Approx(b.sr).epsilon(1e-12));
    CHECK(a.mrr == doctest::Approx(b.mrr).epsilon(1e-12));
    CHECK(a.ndcg5 == doctest::Approx(b.ndcg5).epsilon(1e-12));
  }
}

TEST_CASE("report json is deterministic") {
  Rng rng(23);
  std::vector<DailyEvaluation> evals;
  for (int d = 0; d < 5; ++d)
    evals.push_back(random_eval(rng, 6, "2021-0" + std::to_string(d + 1)));
  BacktestReport rep = backtest_topk(evals, 3, 0.001);

  auto pa = fs::temp_directory_path() / "report_a.json";
  auto pb = fs::temp_directory_path() / "report_b.json";
  write_report_json(pa, rep);
  write_report_json(pb, rep);
  std::ifstream a(pa), b(pb);
  std::string sa((std::istreambuf_iterator<char>(a)),
                 std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)),
                 std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa.find("\"sr\"") != std::string::npos);
  CHECK(sa.find("\"rank_tau\"") != std::string::npos);
}

TEST_CASE("ranking heatmap") {
  Rng rng(29);
  std::vector<DailyEvaluation> evals;
  for (int d = 0; d < 25; ++d)
    evals.push_back(random_eval(rng, 24, "d" + std::to_string(d)));
  std::vector<std::string> tickers;
  for (int s = 0; s < 24; ++s) tickers.push_back("S" + std::to_string(s));

  SUBCASE("degenerate 1x1") {
    RankingHeatmap hm = ranking_heatmap(evals, tickers, {2}, {3});
    CHECK(hm.true_ranks.dim(0) == 1);
    CHECK(hm.true_ranks.dim(1) == 1);
  }

  SUBCASE("20 stocks over 20 days") {
    std::vector<std::size_t> stocks(20), days(20);
    for (std::size_t i = 0; i < 20; ++i) stocks[i] = days[i] = i;
    RankingHeatmap hm = ranking_heatmap(evals, tickers, stocks, days);
    CHECK(hm.true_ranks.dim(0) == 20);
    CHECK(hm.true_ranks.dim(1) == 20);

    // predicted column equals rank positions derived from predicted_order
    for (std::size_t c = 0; c < 20; ++c) {
      const auto& order = evals[c].predicted_order;
      for (std::size_t s = 0; s < 20; ++s) {
        std::size_t pos = 0;
        while (order[pos] != s) ++pos;
        CHECK(hm.predicted_ranks.at(s, c) == double(pos + 1));
      }
    }
  }
}
