#include "stockode/trend.hpp"

#include <cmath>

#include "stockode/errors.hpp"

namespace stockode {

Tensor sign_correlation(const Tensor& window_returns) {
  if (window_returns.rank() != 2) {
    throw ShapeError("sign_correlation: expected (w, N) returns, got " +
                     window_returns.shape_string());
  }
  const std::size_t w = window_returns.dim(0);
  const std::size_t n = window_returns.dim(1);
  Tensor ups({w, n, n});
  for (std::size_t t = 0; t < w; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double si = double(window_returns.at(t, i) > 0.0) -
                        double(window_returns.at(t, i) < 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double sj = double(window_returns.at(t, j) > 0.0) -
                          double(window_returns.at(t, j) < 0.0);
        ups.at(t, i, j) = si * sj;
      }
    }
  }
  return ups;
}

Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  return rng.uniform_tensor({fan_in, fan_out}, -bound, bound);
}

AttentionLayerWeights::AttentionLayerWeights(const std::string& prefix,
                                             std::size_t d, Rng& rng)
    : w_q(prefix + ".w_q", init_weight(rng, d, d)),
      w_k(prefix + ".w_k", init_weight(rng, d, d)),
      w_v(prefix + ".w_v", init_weight(rng, d, d)),
      ln_gain(prefix + ".ln_gain", Tensor::full({d}, 1.0)),
      ln_bias(prefix + ".ln_bias", Tensor({d})) {}

void AttentionLayerWeights::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(), {&w_q, &w_k, &w_v, &ln_gain, &ln_bias});
}

TrendWeights::TrendWeights(std::size_t d_e, std::size_t d,
                           std::size_t attention_layers, bool use_corr,
                           Rng& rng)
    : d_in(d_e),
      d(d),
      use_correlation(use_corr),
      w_corr("trend.w_corr", use_corr ? init_weight(rng, d_e, d)
                                      : Tensor({d_e, d})),
      w_feat("trend.w_feat", init_weight(rng, d_e, d)) {
  for (std::size_t l = 0; l < attention_layers; ++l) {
    attention.emplace_back("trend.attn" + std::to_string(l), d, rng);
  }
}

void TrendWeights::collect(std::vector<Parameter*>& out) {
  if (use_correlation) out.push_back(&w_corr);
  out.push_back(&w_feat);
  for (auto& layer : attention) layer.collect(out);
}

Tensor day_slice(const Tensor& t, std::size_t day) {
  const std::size_t rows = t.dim(1), cols = t.dim(2);
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = t.at(day, i, j);
  return out;
}

std::vector<Var> explicit_aggregate(Tape& tape, const Tensor& window_features,
                                    const Tensor& correlation,
                                    TrendWeights& weights) {
  const std::size_t w = window_features.dim(0);
  std::vector<Var> h_days;
  h_days.reserve(w);
  Var w_feat = tape.param(weights.w_feat);
  Var w_corr = weights.use_correlation ? tape.param(weights.w_corr) : Var{};
  for (std::size_t t = 0; t < w; ++t) {
    Var x = tape.constant(day_slice(window_features, t));
    Var h = tape.matmul(x, w_feat);
    if (weights.use_correlation) {
      Var ups = tape.constant(day_slice(correlation, t));
      h = tape.add(tape.matmul(tape.matmul(ups, x), w_corr), h);
    }
    h_days.push_back(h);
  }
  return h_days;
}

TrendOutput implicit_aggregate(Tape& tape, const std::vector<Var>& h_days,
                               TrendWeights& weights) {
  TrendOutput out;
  out.p_days = h_days;
  if (weights.attention.empty()) return out;

  const double inv_sqrt_d = 1.0 / std::sqrt(double(weights.d));
  for (auto& layer : weights.attention) {
    Var w_q = tape.param(layer.w_q);
    Var w_k = tape.param(layer.w_k);
    Var w_v = tape.param(layer.w_v);
    Var gain = tape.param(layer.ln_gain);
    Var bias = tape.param(layer.ln_bias);
    out.attention_rows.clear();
    for (Var& h : out.p_days) {
      Var scores = tape.matmul(tape.matmul(h, w_q),
                               tape.transpose(tape.matmul(h, w_k)));
      Var omega = tape.softmax_rows(scores);
      out.attention_rows.push_back(omega.value());
      Var mixed = tape.scale(tape.matmul(omega, tape.matmul(h, w_v)),
                             inv_sqrt_d);
      h = tape.relu(tape.layer_norm_rows(mixed, gain, bias));
    }
  }
  return out;
}

TrendOutput trend_forward(Tape& tape, const Tensor& window_features,
                          const Tensor& window_returns,
                          TrendWeights& weights) {
  Tensor correlation;
  if (weights.use_correlation) {
    correlation = sign_correlation(window_returns);
  }
  std::vector<Var> h =
      explicit_aggregate(tape, window_features, correlation, weights);
  return implicit_aggregate(tape, h, weights);
}

}  // namespace stockode
