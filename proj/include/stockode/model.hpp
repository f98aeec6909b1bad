#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stockode/autodiff.hpp"
#include "stockode/evalkit.hpp"
#include "stockode/hhcn.hpp"
#include "stockode/market_data.hpp"
#include "stockode/nrode.hpp"
#include "stockode/optimizer.hpp"
#include "stockode/trend.hpp"

namespace stockode {

/// Model variants: the full pipeline, the four component ablations, and the
/// two alternative ODE cells.
enum class Variant { kFull, kB, kI, kH, kA, kOdeGru, kLatentOde };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  std::size_t d = 64;         // hidden size
  std::size_t d_prime = 32;   // hypergraph output space
  std::size_t w = 5;          // lookback window
  std::size_t substeps = 5;   // Euler substeps per observation interval
  double beta = 0.1;          // ELBO weight
  std::size_t graph_layers = 1;
  std::size_t attention_layers = 1;
  Variant variant = Variant::kFull;
  GateConvention gate_convention = GateConvention::kGateKeepsPrevious;
  LatentMean latent_mean = LatentMean::kHidden;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t pair_sampling = 65536;  // hinge pairs sampled when N > 256
  std::size_t d_e = kFeatureCount;
  std::array<std::size_t, 3> split_counts = {0, 0, 0};  // 0,0,0 = 60/20/20

  // which components the variant runs
  bool uses_correlation() const { return variant != Variant::kI; }
  bool uses_attention() const { return variant != Variant::kI; }
  bool uses_hhcn() const { return variant != Variant::kB; }
  bool uses_meta() const {
    return uses_hhcn() && variant != Variant::kH;
  }
  bool uses_latent() const {
    return variant == Variant::kFull || variant == Variant::kI ||
           variant == Variant::kH || variant == Variant::kLatentOde;
  }
  bool uses_ode() const {
    return variant != Variant::kB && variant != Variant::kA;
  }

  void validate() const;
  std::string to_json() const;  // canonical key-sorted JSON
  static ModelConfig from_json(const std::string& json_text);
};

struct RankingPrediction {
  Tensor r_hat;                     // (N,)
  std::vector<std::size_t> order;   // descending, ties to the lower index
};

/// Value snapshots of one deterministic forward pass, enough to decode
/// intermediate-time states and build evaluations without keeping the tape.
struct ForwardArtifacts {
  RankingPrediction prediction;
  std::vector<Tensor> p_days;           // (N, d) per window day
  std::vector<Tensor> z_days;           // (N, d) per window day
  Tensor fused;                          // (N, d); empty when HHCN is off
  std::vector<Tensor> day_predictions;  // (N,) decoded prediction per day
  std::vector<IntervalArchive> trajectory;  // empty for discrete cells
};

class StockOde {
 public:
  StockOde(ModelConfig cfg, const Hypergraph& graph,
           const MetaHypergraph& meta);

  const ModelConfig& config() const { return cfg_; }
  const Hypergraph& graph() const { return graph_; }
  std::vector<Parameter*>& parameters() { return params_; }
  Parameter& parameter(const std::string& name);

  struct Forward {
    Var r_hat;                  // (N, 1)
    std::vector<Var> p_days;
    std::vector<Var> z_days;
    Var fused;                  // invalid when HHCN is off
    std::vector<Var> mu_seq, sigma_seq;   // latent heads (may be empty)
    std::vector<Var> recon;               // reconstructed p per day
    std::vector<IntervalArchive> trajectory;
  };

  /// Differentiable forward pass. noise == nullptr takes the deterministic
  /// path (latent eps = 0).
  Forward forward(Tape& tape, const WindowSample& window, Rng* noise);

  /// Full training objective: squared error - beta * ELBO + pairwise hinge.
  Var loss(Tape& tape, Forward& fw, const Tensor& target, Rng* pair_rng);

  /// Squared error + hinge only (the deterministic prediction quality).
  Var prediction_loss(Tape& tape, Var r_hat, const Tensor& target,
                      Rng* pair_rng);

  /// Deterministic forward with value snapshots for export and evaluation.
  ForwardArtifacts evaluate(const WindowSample& window);

  /// Decode one hidden/latent state through the fusion head; p_day and fused
  /// must come from the same forward pass.
  Tensor decode_state(const Tensor& p_day, const Tensor& z,
                      const Tensor& fused);

  /// Derivative function of the continuous cell, for trajectory queries.
  /// Throws ContractError for the discrete-cell variants.
  DerivFn ode_deriv();

 private:
  Var fusion_head(Tape& tape, Var p_last, Var z_last, Var fused);

  ModelConfig cfg_;
  Hypergraph graph_;
  MetaHypergraph meta_;

  std::unique_ptr<TrendWeights> trend_;
  std::unique_ptr<NrodeWeights> cell_;        // full / I / H
  std::unique_ptr<GruWeights> gru_;           // B / A / latent-ode encoder
  std::unique_ptr<OdeGruWeights> ode_gru_;    // ode_gru variant
  std::unique_ptr<OdeFunctionWeights> latent_ode_fn_;  // latent-ode dynamics
  std::unique_ptr<Parameter> lode_w_z_, lode_b_z_;     // latent-ode heads
  std::unique_ptr<NrodeWeights> generative_;  // reconstruction NRODE
  std::unique_ptr<Parameter> w_dec_, b_dec_;  // reconstruction decoder
  std::unique_ptr<HhcnWeights> hhcn_;
  std::unique_ptr<Parameter> w_fusion_, b_fusion_, w_head_, b_head_;

  std::vector<Parameter*> params_;
};

RankingPrediction predict_ranking(StockOde& model, const WindowSample& window);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  std::optional<double> sr, mrr, ndcg5;
};

struct TrainOptions {
  std::optional<std::size_t> epochs;  // overrides the config when set
  std::size_t backtest_k = 5;
  double risk_free = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
  double best_val_mrr = 0.0;
  double final_train_loss = 0.0;
  std::uint64_t noise_counter = 0;  // training random streams at the
  std::uint64_t pair_counter = 0;   // retained checkpoint
};

/// Adam over full-window steps, one window per step in chronological order;
/// logs train loss and validation metrics per epoch and restores the
/// best-validation-MRR parameters into the model before returning.
TrainResult train(StockOde& model, AdamState& adam, const DatasetSplits& data,
                  Rng& run_rng, const TrainOptions& options = {});

void write_metric_log(const std::filesystem::path& path,
                      const std::vector<EpochMetrics>& log);

/// Evaluations for a window list (deterministic forwards).
std::vector<DailyEvaluation> evaluate_windows(
    StockOde& model, const std::vector<WindowSample>& windows);

}  // namespace stockode
