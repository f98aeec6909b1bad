#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stockode/optimizer.hpp"
#include "stockode/trend.hpp"

using namespace stockode;

TEST_CASE("sign correlation follows the sign definition") {
  Tensor r({1, 3}, {0.02, -0.01, 0.0});
  Tensor ups = sign_correlation(r);
  const double expected[3][3] = {{1, -1, 0}, {-1, 1, 0}, {0, 0, 0}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(ups.at(0, i, j) == expected[i][j]);
}

TEST_CASE("all-positive returns give the all-ones slice") {
  Tensor r({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.01, 0.02, 0.03, 0.04});
  Tensor ups = sign_correlation(r);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(ups.at(t, i, j) == 1.0);
}

TEST_CASE("sign correlation matches the pairwise oracle") {
  Rng rng(31);
  Tensor r = rng.normal_tensor({3, 6});
  Tensor ups = sign_correlation(r);
  auto sgn = [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); };
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(ups.at(t, i, j) == sgn(r.at(t, i)) * sgn(r.at(t, j)));
        CHECK(ups.at(t, i, j) == ups.at(t, j, i));  // symmetric slices
      }
    }
  }
}

TEST_CASE("negating one stock's return flips its row and column") {
  Rng rng(37);
  Tensor r = rng.normal_tensor({1, 5});
  Tensor flipped = r;
  const std::size_t k = 2;
  flipped.at(0, k) = -flipped.at(0, k);
  Tensor a = sign_correlation(r);
  Tensor b = sign_correlation(flipped);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double sign = (i == k) != (j == k) ? -1.0 : 1.0;
      CHECK(b.at(0, i, j) == sign * a.at(0, i, j));
    }
  }
}

TEST_CASE("explicit aggregate with zero correlation is the residual path") {
  Rng rng(41);
  TrendWeights weights(4, 3, 0, true, rng);
  Tensor x = rng.normal_tensor({2, 5, 4});
  Tensor zero_returns({2, 5});  // sign(0) = 0 everywhere
  Tape tape;
  auto h = explicit_aggregate(tape, x, sign_correlation(zero_returns),
                              weights);
  for (std::size_t t = 0; t < 2; ++t) {
    Tensor expect = matmul(day_slice(x, t), weights.w_feat.value);
    const Tensor& got = h[t].value();
    for (std::size_t i = 0; i < expect.size(); ++i)
      CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("explicit aggregate equals the dense per-day oracle") {
  Rng rng(43);
  TrendWeights weights(4, 3, 0, true, rng);
  Tensor x = rng.normal_tensor({2, 3, 4});
  Tensor returns = rng.normal_tensor({2, 3});
  Tensor ups = sign_correlation(returns);
  Tape tape;
  auto h = explicit_aggregate(tape, x, ups, weights);
  for (std::size_t t = 0; t < 2; ++t) {
    Tensor xt = day_slice(x, t);
    Tensor expect = add(matmul(matmul(day_slice(ups, t), xt),
                               weights.w_corr.value),
                        matmul(xt, weights.w_feat.value));
    const Tensor& got = h[t].value();
    for (std::size_t i = 0; i < expect.size(); ++i)
      CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-10));
  }
}

TEST_CASE("single stock attends only to itself") {
  Rng rng(47);
  TrendWeights weights(4, 3, 1, true, rng);
  Tensor x = rng.normal_tensor({1, 1, 4});
  Tensor returns = rng.normal_tensor({1, 1});
  Tape tape;
  TrendOutput out = trend_forward(tape, x, returns, weights);
  REQUIRE(out.attention_rows.size() == 1);
  CHECK(out.attention_rows[0].at(0, 0) == 1.0);
}

TEST_CASE("identical stock rows attend uniformly") {
  Rng rng(53);
  TrendWeights weights(4, 3, 1, true, rng);
  Tensor x({1, 4, 4});
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t k = 0; k < 4; ++k) x.at(0, s, k) = 0.3 * double(k) - 0.5;
  Tensor returns = Tensor::full({1, 4}, 0.02);
  Tape tape;
  TrendOutput out = trend_forward(tape, x, returns, weights);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(out.attention_rows[0].at(i, j) == doctest::Approx(0.25));
}

TEST_CASE("attention matches the reference formula and rows sum to one") {
  Rng rng(59);
  TrendWeights weights(5, 4, 1, true, rng);
  Tensor x = rng.normal_tensor({1, 4, 5});
  Tensor returns = rng.normal_tensor({1, 4});
  Tape tape;
  TrendOutput out = trend_forward(tape, x, returns, weights);

  // independent evaluation with raw tensor math
  Tensor ups = sign_correlation(returns);
  Tensor xt = day_slice(x, 0);
  Tensor h = add(matmul(matmul(day_slice(ups, 0), xt), weights.w_corr.value),
                 matmul(xt, weights.w_feat.value));
  const auto& layer = weights.attention[0];
  Tensor scores = matmul(matmul(h, layer.w_q.value),
                         transpose(matmul(h, layer.w_k.value)));
  Tensor omega({4, 4});
  for (std::size_t i = 0; i < 4; ++i) {
    double mx = scores.at(i, 0);
    for (std::size_t j = 1; j < 4; ++j) mx = std::max(mx, scores.at(i, j));
    double sum = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      omega.at(i, j) = std::exp(scores.at(i, j) - mx);
      sum += omega.at(i, j);
    }
    double row = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      omega.at(i, j) /= sum;
      row += omega.at(i, j);
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(out.attention_rows[0][i] ==
          doctest::Approx(omega[i]).epsilon(1e-10));
    CHECK(out.attention_rows[0][i] >= 0.0);
  }

  Tensor mixed = scale(matmul(omega, matmul(h, layer.w_v.value)), 0.5);
  // layer norm + relu
  for (std::size_t i = 0; i < 4; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < 4; ++j) mu += mixed.at(i, j);
    mu /= 4;
    for (std::size_t j = 0; j < 4; ++j) {
      const double c = mixed.at(i, j) - mu;
      var += c * c;
    }
    var /= 4;
    for (std::size_t j = 0; j < 4; ++j) {
      double v = (mixed.at(i, j) - mu) / std::sqrt(var + 1e-5);
      v = layer.ln_gain.value[j] * v + layer.ln_bias.value[j];
      v = v > 0 ? v : 0.0;
      CHECK(out.p_days[0].value().at(i, j) ==
            doctest::Approx(v).epsilon(1e-10));
    }
  }
}

TEST_CASE("attention mixes stocks within a day, never across days") {
  Rng rng(61);
  TrendWeights weights(4, 3, 1, true, rng);
  Tensor x = rng.normal_tensor({2, 3, 4});
  Tensor returns = rng.normal_tensor({2, 3});

  Tape t1;
  TrendOutput base = trend_forward(t1, x, returns, weights);
  Tensor day1 = base.p_days[0].value();

  // perturb day 2 only
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < 4; ++k) x.at(1, s, k) += 0.7;
  returns.at(1, 0) = -returns.at(1, 0);
  Tape t2;
  TrendOutput bumped = trend_forward(t2, x, returns, weights);
  const Tensor& day1_after = bumped.p_days[0].value();
  for (std::size_t i = 0; i < day1.size(); ++i)
    CHECK(day1[i] == day1_after[i]);
}

TEST_CASE("permutation equivariance of the trend module") {
  Rng rng(67);
  TrendWeights weights(4, 3, 1, true, rng);
  const std::size_t n = 5;
  Tensor x = rng.normal_tensor({2, n, 4});
  Tensor returns = rng.normal_tensor({2, n});

  const std::size_t perm[n] = {3, 0, 4, 1, 2};
  Tensor xp({2, n, 4});
  Tensor rp({2, n});
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t s = 0; s < n; ++s) {
      rp.at(t, s) = returns.at(t, perm[s]);
      for (std::size_t k = 0; k < 4; ++k)
        xp.at(t, s, k) = x.at(t, perm[s], k);
    }

  Tape ta, tb;
  TrendOutput base = trend_forward(ta, x, returns, weights);
  TrendOutput permuted = trend_forward(tb, xp, rp, weights);
  for (std::size_t t = 0; t < 2; ++t) {
    const Tensor& pb = base.p_days[t].value();
    const Tensor& pp = permuted.p_days[t].value();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::abs(pp.at(s, k) - pb.at(perm[s], k)) < 1e-10);
  }
}

TEST_CASE("trend gradients match finite differences") {
  Rng rng(71);
  TrendWeights weights(4, 3, 1, true, rng);
  std::vector<Parameter*> params;
  weights.collect(params);
  Tensor x = rng.normal_tensor({2, 3, 4});
  Tensor returns = rng.normal_tensor({2, 3});
  Tensor probe = rng.normal_tensor({3, 3});

  auto model = [&](Tape& t) {
    TrendOutput out = trend_forward(t, x, returns, weights);
    Var acc = t.sum(t.mul(out.p_days[0], t.constant(probe)));
    return t.add(acc, t.sum(t.mul(out.p_days[1], out.p_days[1])));
  };
  CHECK(gradcheck(model, params, 1e-6) < 1e-5);
}
