#pragma once

#include <vector>

#include "stockode/autodiff.hpp"
#include "stockode/rng.hpp"

namespace stockode {

/// sign(r_i) * sign(r_j) per day: (w, N) returns -> (w, N, N) with entries in
/// {-1, 0, +1}. Constant with respect to differentiation (sign has zero
/// derivative almost everywhere).
Tensor sign_correlation(const Tensor& window_returns);

/// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weight initialization.
Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out);

struct AttentionLayerWeights {
  Parameter w_q, w_k, w_v;
  Parameter ln_gain, ln_bias;

  AttentionLayerWeights(const std::string& prefix, std::size_t d, Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

struct TrendWeights {
  std::size_t d_in, d;
  bool use_correlation;  // false for the variant that zeroes the correlation
  Parameter w_corr;      // (d_e, d), multiplies the correlation-aggregated X
  Parameter w_feat;      // (d_e, d), residual path
  std::vector<AttentionLayerWeights> attention;  // empty = skip attention

  TrendWeights(std::size_t d_e, std::size_t d, std::size_t attention_layers,
               bool use_correlation, Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

/// One day slab of a (w, N, k) tensor as an (N, k) matrix.
Tensor day_slice(const Tensor& t, std::size_t day);

/// H_tau = Upsilon_tau X_tau W_corr + X_tau W_feat per day.
std::vector<Var> explicit_aggregate(Tape& tape, const Tensor& window_features,
                                    const Tensor& correlation,
                                    TrendWeights& weights);

struct TrendOutput {
  std::vector<Var> p_days;              // per-day (N, d) slices of P
  std::vector<Tensor> attention_rows;   // per-day (N, N) attention scores
};

/// Cross-stock self-attention per day; attention mixes stocks, never days.
TrendOutput implicit_aggregate(Tape& tape, const std::vector<Var>& h_days,
                               TrendWeights& weights);

/// Full module: correlation tensor, explicit aggregation, attention.
TrendOutput trend_forward(Tape& tape, const Tensor& window_features,
                          const Tensor& window_returns,
                          TrendWeights& weights);

}  // namespace stockode
