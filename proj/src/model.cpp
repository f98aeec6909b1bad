#include "stockode/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "stockode/errors.hpp"

namespace stockode {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kB: return "B";
    case Variant::kI: return "I";
    case Variant::kH: return "H";
    case Variant::kA: return "A";
    case Variant::kOdeGru: return "ode_gru";
    case Variant::kLatentOde: return "latent_ode";
  }
  throw ContractError("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "B") return Variant::kB;
  if (name == "I") return Variant::kI;
  if (name == "H") return Variant::kH;
  if (name == "A") return Variant::kA;
  if (name == "ode_gru") return Variant::kOdeGru;
  if (name == "latent_ode") return Variant::kLatentOde;
  throw ConfigError("unknown variant '" + name +
                    "' (expected full|B|I|H|A|ode_gru|latent_ode)");
}

void ModelConfig::validate() const {
  if (d < 1 || d_prime < 1 || w < 1 || substeps < 1 || d_e < 1) {
    throw ConfigError("model sizes must be positive");
  }
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (graph_layers < 1) throw ConfigError("graph_layers must be >= 1");
  if (attention_layers < 1) throw ConfigError("attention_layers must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (pair_sampling < 1) throw ConfigError("pair_sampling must be >= 1");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;  // std::map keys: dumped in sorted order
  j["attention_layers"] = attention_layers;
  j["beta"] = beta;
  j["d"] = d;
  j["d_e"] = d_e;
  j["d_prime"] = d_prime;
  j["epochs"] = epochs;
  j["gate_convention"] =
      gate_convention == GateConvention::kGateKeepsPrevious ? "keep_previous"
                                                            : "keep_candidate";
  j["graph_layers"] = graph_layers;
  j["latent_mean"] = latent_mean == LatentMean::kHidden ? "hidden" : "mu";
  j["lr"] = lr;
  j["pair_sampling"] = pair_sampling;
  j["seed"] = seed;
  j["split_test"] = split_counts[2];
  j["split_train"] = split_counts[0];
  j["split_val"] = split_counts[1];
  j["substeps"] = substeps;
  j["variant"] = variant_name(variant);
  j["w"] = w;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  ModelConfig cfg;
  cfg.attention_layers = j.at("attention_layers").get<std::size_t>();
  cfg.beta = j.at("beta").get<double>();
  cfg.d = j.at("d").get<std::size_t>();
  cfg.d_e = j.at("d_e").get<std::size_t>();
  cfg.d_prime = j.at("d_prime").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.gate_convention = j.at("gate_convention").get<std::string>() ==
                                "keep_candidate"
                            ? GateConvention::kGateKeepsCandidate
                            : GateConvention::kGateKeepsPrevious;
  cfg.graph_layers = j.at("graph_layers").get<std::size_t>();
  cfg.latent_mean = j.at("latent_mean").get<std::string>() == "mu"
                        ? LatentMean::kMu
                        : LatentMean::kHidden;
  cfg.lr = j.at("lr").get<double>();
  cfg.pair_sampling = j.at("pair_sampling").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.split_counts = {j.at("split_train").get<std::size_t>(),
                      j.at("split_val").get<std::size_t>(),
                      j.at("split_test").get<std::size_t>()};
  cfg.substeps = j.at("substeps").get<std::size_t>();
  cfg.variant = variant_from_name(j.at("variant").get<std::string>());
  cfg.w = j.at("w").get<std::size_t>();
  return cfg;
}

StockOde::StockOde(ModelConfig cfg, const Hypergraph& graph,
                   const MetaHypergraph& meta)
    : cfg_(cfg), graph_(graph), meta_(meta) {
  cfg_.validate();
  Rng base(cfg_.seed);
  Rng trend_rng = base.fork("init-trend");
  Rng cell_rng = base.fork("init-cell");
  Rng gen_rng = base.fork("init-generative");
  Rng hhcn_rng = base.fork("init-hhcn");
  Rng fusion_rng = base.fork("init-fusion");

  trend_ = std::make_unique<TrendWeights>(
      cfg_.d_e, cfg_.d, cfg_.uses_attention() ? cfg_.attention_layers : 0,
      cfg_.uses_correlation(), trend_rng);

  switch (cfg_.variant) {
    case Variant::kFull:
    case Variant::kI:
    case Variant::kH:
      cell_ = std::make_unique<NrodeWeights>("cell", cfg_.d, true, cell_rng);
      break;
    case Variant::kB:
    case Variant::kA:
      gru_ = std::make_unique<GruWeights>("cell.gru", cfg_.d, cell_rng);
      break;
    case Variant::kOdeGru:
      ode_gru_ = std::make_unique<OdeGruWeights>("cell", cfg_.d, cell_rng);
      break;
    case Variant::kLatentOde:
      gru_ = std::make_unique<GruWeights>("cell.encoder", cfg_.d, cell_rng);
      lode_w_z_ = std::make_unique<Parameter>(
          "cell.latent.w", init_weight(cell_rng, cfg_.d, 2 * cfg_.d));
      lode_b_z_ = std::make_unique<Parameter>("cell.latent.b",
                                              Tensor({2 * cfg_.d}));
      latent_ode_fn_ = std::make_unique<OdeFunctionWeights>(
          "cell.dynamics", cfg_.d, false, cell_rng);
      break;
  }

  if (cfg_.uses_latent()) {
    if (cfg_.variant != Variant::kLatentOde) {
      generative_ =
          std::make_unique<NrodeWeights>("generative", cfg_.d, false, gen_rng);
    }
    w_dec_ = std::make_unique<Parameter>("generative.dec.w",
                                         init_weight(gen_rng, cfg_.d, cfg_.d));
    b_dec_ = std::make_unique<Parameter>("generative.dec.b", Tensor({cfg_.d}));
  }

  if (cfg_.uses_hhcn()) {
    hhcn_ = std::make_unique<HhcnWeights>(cfg_.d, cfg_.d_prime, cfg_.d,
                                          cfg_.graph_layers, graph_.n_edges(),
                                          cfg_.uses_meta(), hhcn_rng);
  }

  const std::size_t fusion_width = (cfg_.uses_hhcn() ? 3 : 2) * cfg_.d;
  w_fusion_ = std::make_unique<Parameter>(
      "fusion.w", init_weight(fusion_rng, fusion_width, cfg_.d));
  b_fusion_ = std::make_unique<Parameter>("fusion.b", Tensor({cfg_.d}));
  w_head_ = std::make_unique<Parameter>("head.w",
                                        init_weight(fusion_rng, cfg_.d, 1));
  b_head_ = std::make_unique<Parameter>("head.b", Tensor({1}));

  trend_->collect(params_);
  if (cell_) cell_->collect(params_);
  if (gru_) gru_->collect(params_);
  if (ode_gru_) ode_gru_->collect(params_);
  if (latent_ode_fn_) latent_ode_fn_->collect(params_);
  if (lode_w_z_) params_.insert(params_.end(), {lode_w_z_.get(),
                                                lode_b_z_.get()});
  if (generative_) generative_->collect(params_);
  if (w_dec_) params_.insert(params_.end(), {w_dec_.get(), b_dec_.get()});
  if (hhcn_) hhcn_->collect(params_);
  params_.insert(params_.end(), {w_fusion_.get(), b_fusion_.get(),
                                 w_head_.get(), b_head_.get()});
}

Parameter& StockOde::parameter(const std::string& name) {
  for (Parameter* p : params_) {
    if (p->name == name) return *p;
  }
  throw ContractError("no parameter named '" + name + "'");
}

Var StockOde::fusion_head(Tape& tape, Var p_last, Var z_last, Var fused) {
  Var cat = tape.concat_cols(p_last, z_last);
  if (fused.valid()) cat = tape.concat_cols(cat, fused);
  Var hidden = tape.leaky_relu(
      tape.add_rowvec(tape.matmul(cat, tape.param(*w_fusion_)),
                      tape.param(*b_fusion_)),
      0.01);
  return tape.add_rowvec(tape.matmul(hidden, tape.param(*w_head_)),
                         tape.param(*b_head_));
}

StockOde::Forward StockOde::forward(Tape& tape, const WindowSample& window,
                                    Rng* noise) {
  if (window.features.dim(0) != cfg_.w ||
      window.features.dim(2) != cfg_.d_e) {
    throw ConfigError("forward: window shape " +
                      window.features.shape_string() +
                      " does not match the configured (w, N, d_e)");
  }
  Forward fw;
  const std::size_t n = window.features.dim(1);
  const SolverConfig solver{cfg_.substeps};

  TrendOutput trend =
      trend_forward(tape, window.features, window.window_returns, *trend_);
  fw.p_days = trend.p_days;

  switch (cfg_.variant) {
    case Variant::kFull:
    case Variant::kI:
    case Variant::kH: {
      NrodeResult res =
          nrode_unroll(tape, fw.p_days, *cell_, solver, noise,
                       cfg_.gate_convention, cfg_.latent_mean);
      fw.z_days = res.z_seq;
      fw.mu_seq = res.mu_seq;
      fw.sigma_seq = res.sigma_seq;
      fw.trajectory = std::move(res.trajectory);
      break;
    }
    case Variant::kB:
    case Variant::kA: {
      Var h = tape.constant(Tensor({n, cfg_.d}));
      for (Var p : fw.p_days) {
        h = gru_cell(tape, p, h, *gru_);
        fw.z_days.push_back(h);
      }
      break;
    }
    case Variant::kOdeGru: {
      Var h = tape.constant(Tensor({n, cfg_.d}));
      for (std::size_t t = 0; t < fw.p_days.size(); ++t) {
        OdeGruStepResult step =
            ode_gru_step(tape, h, fw.p_days[t], double(t), double(t + 1),
                         *ode_gru_, solver);
        h = step.h;
        step.archive.z = step.archive.h;
        fw.trajectory.push_back(std::move(step.archive));
        fw.z_days.push_back(h);
      }
      break;
    }
    case Variant::kLatentOde: {
      Var h = tape.constant(Tensor({n, cfg_.d}));
      for (Var p : fw.p_days) h = gru_cell(tape, p, h, *gru_);
      Var heads = tape.add_rowvec(tape.matmul(h, tape.param(*lode_w_z_)),
                                  tape.param(*lode_b_z_));
      Var mu = tape.slice_cols(heads, 0, cfg_.d);
      Var sigma = tape.add_scalar(
          tape.softplus(tape.slice_cols(heads, cfg_.d, cfg_.d)), 1e-6);
      fw.mu_seq = {mu};
      fw.sigma_seq = {sigma};
      Var z = mu;
      if (noise != nullptr) {
        z = tape.add(mu, tape.mul(sigma, tape.constant(
                                             noise->normal_tensor({n, cfg_.d}))));
      }
      fw.z_days.push_back(z);
      for (std::size_t t = 1; t < cfg_.w; ++t) {
        IntervalArchive arch;
        arch.t_prev = double(t - 1);
        arch.t_cur = double(t);
        z = euler_solve(tape, latent_ode_fn_->as_deriv_fn(), z,
                        double(t - 1), double(t), cfg_.substeps,
                        &arch.substeps);
        arch.h_prime = arch.h = arch.z = z.value();
        fw.trajectory.push_back(std::move(arch));
        fw.z_days.push_back(z);
      }
      break;
    }
  }

  if (cfg_.uses_latent()) {
    Var dec_w = tape.param(*w_dec_);
    Var dec_b = tape.param(*b_dec_);
    if (cfg_.variant == Variant::kLatentOde) {
      for (Var z : fw.z_days) {
        fw.recon.push_back(
            tape.add_rowvec(tape.matmul(z, dec_w), dec_b));
      }
    } else {
      NrodeResult gen = nrode_unroll(tape, fw.z_days, *generative_, solver,
                                     nullptr, cfg_.gate_convention,
                                     cfg_.latent_mean);
      for (Var gh : gen.h_seq) {
        fw.recon.push_back(
            tape.add_rowvec(tape.matmul(gh, dec_w), dec_b));
      }
    }
  }

  if (cfg_.uses_hhcn()) {
    fw.fused = hhcn_forward(tape, fw.p_days.back(), graph_, meta_, *hhcn_).f;
  }

  fw.r_hat = fusion_head(tape, fw.p_days.back(), fw.z_days.back(), fw.fused);
  return fw;
}

namespace {

// ordered hinge pairs and their target differences; exact below the
// sampling threshold, uniformly sampled above it
std::pair<std::vector<std::pair<int, int>>, Tensor> hinge_pairs(
    const Tensor& target, std::size_t limit, Rng* rng) {
  const std::size_t n = target.size();
  std::vector<std::pair<int, int>> pairs;
  if (n <= 256) {
    pairs.reserve(n * (n - 1));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) pairs.emplace_back(int(i), int(j));
  } else {
    if (rng == nullptr) {
      throw ContractError("hinge_pairs: sampling requires a random source");
    }
    pairs.reserve(limit);
    while (pairs.size() < limit) {
      const std::size_t i = rng->uniform_index(n);
      const std::size_t j = rng->uniform_index(n);
      if (i != j) pairs.emplace_back(int(i), int(j));
    }
  }
  Tensor diffs({pairs.size()});
  for (std::size_t p = 0; p < pairs.size(); ++p)
    diffs[p] = target[pairs[p].first] - target[pairs[p].second];
  return {std::move(pairs), std::move(diffs)};
}

Tensor as_column(const Tensor& v) {
  return Tensor({v.size(), 1},
                std::vector<double>(v.data().begin(), v.data().end()));
}

}  // namespace

Var StockOde::prediction_loss(Tape& tape, Var r_hat, const Tensor& target,
                              Rng* pair_rng) {
  Var diff = tape.sub(r_hat, tape.constant(as_column(target)));
  Var mse = tape.sum(tape.mul(diff, diff));
  auto [pairs, diffs] = hinge_pairs(target, cfg_.pair_sampling, pair_rng);
  Var hinge = tape.pairwise_hinge(r_hat, std::move(pairs), std::move(diffs));
  return tape.add(mse, hinge);
}

Var StockOde::loss(Tape& tape, Forward& fw, const Tensor& target,
                   Rng* pair_rng) {
  Var total = prediction_loss(tape, fw.r_hat, target, pair_rng);
  if (cfg_.uses_latent() && cfg_.beta > 0.0) {
    const std::size_t n = fw.recon.front().value().dim(0);
    Var recon_sq;
    for (std::size_t t = 0; t < fw.recon.size(); ++t) {
      Var diff = tape.sub(fw.recon[t], fw.p_days[t]);
      Var sq = tape.sum(tape.mul(diff, diff));
      recon_sq = recon_sq.valid() ? tape.add(recon_sq, sq) : sq;
    }
    const double norm = 1.0 / (double(n) * double(fw.recon.size()));
    Var recon = tape.scale(recon_sq, -0.5 * norm);
    Var kl = kl_to_standard_normal(tape, fw.mu_seq, fw.sigma_seq);
    Var elbo = tape.sub(recon, kl);
    total = tape.add(total, tape.scale(elbo, -cfg_.beta));
  }
  return total;
}

ForwardArtifacts StockOde::evaluate(const WindowSample& window) {
  Tape tape;
  Forward fw = forward(tape, window, nullptr);

  ForwardArtifacts art;
  const Tensor& col = fw.r_hat.value();
  Tensor flat({col.dim(0)});
  for (std::size_t i = 0; i < col.dim(0); ++i) flat[i] = col.at(i, 0);
  art.prediction.r_hat = flat;
  art.prediction.order = ranking_order(flat);
  for (const Var& p : fw.p_days) art.p_days.push_back(p.value());
  for (const Var& z : fw.z_days) art.z_days.push_back(z.value());
  if (fw.fused.valid()) art.fused = fw.fused.value();
  art.trajectory = std::move(fw.trajectory);

  for (std::size_t t = 0; t < fw.p_days.size(); ++t) {
    if (t + 1 == fw.p_days.size()) {
      art.day_predictions.push_back(flat);
    } else {
      Var day = fusion_head(tape, fw.p_days[t], fw.z_days[t], fw.fused);
      const Tensor& c = day.value();
      Tensor v({c.dim(0)});
      for (std::size_t i = 0; i < c.dim(0); ++i) v[i] = c.at(i, 0);
      art.day_predictions.push_back(std::move(v));
    }
  }
  return art;
}

Tensor StockOde::decode_state(const Tensor& p_day, const Tensor& z,
                              const Tensor& fused) {
  Tape tape;
  Var f = cfg_.uses_hhcn() ? tape.constant(fused) : Var{};
  Var out = fusion_head(tape, tape.constant(p_day), tape.constant(z), f);
  const Tensor& c = out.value();
  Tensor v({c.dim(0)});
  for (std::size_t i = 0; i < c.dim(0); ++i) v[i] = c.at(i, 0);
  return v;
}

DerivFn StockOde::ode_deriv() {
  if (cell_) return cell_->ode.as_deriv_fn();
  if (ode_gru_) return ode_gru_->ode.as_deriv_fn();
  if (latent_ode_fn_) return latent_ode_fn_->as_deriv_fn();
  throw ContractError("variant '" + variant_name(cfg_.variant) +
                      "' has no continuous trajectory");
}

RankingPrediction predict_ranking(StockOde& model,
                                  const WindowSample& window) {
  Tape tape;
  auto fw = model.forward(tape, window, nullptr);
  const Tensor& col = fw.r_hat.value();
  RankingPrediction pred;
  pred.r_hat = Tensor({col.dim(0)});
  for (std::size_t i = 0; i < col.dim(0); ++i) pred.r_hat[i] = col.at(i, 0);
  pred.order = ranking_order(pred.r_hat);
  return pred;
}

std::vector<DailyEvaluation> evaluate_windows(
    StockOde& model, const std::vector<WindowSample>& windows) {
  std::vector<DailyEvaluation> evals;
  evals.reserve(windows.size());
  for (const auto& w : windows) {
    RankingPrediction pred = predict_ranking(model, w);
    evals.push_back(make_evaluation(w.target_day, pred.r_hat, w.target));
  }
  return evals;
}

namespace {

double raw_prediction_loss(const Tensor& r_hat, const Tensor& target) {
  double mse = 0.0;
  for (std::size_t i = 0; i < r_hat.size(); ++i) {
    const double d = r_hat[i] - target[i];
    mse += d * d;
  }
  double hinge = 0.0;
  for (std::size_t i = 0; i < r_hat.size(); ++i) {
    for (std::size_t j = 0; j < r_hat.size(); ++j) {
      if (i == j) continue;
      const double m = -(r_hat[i] - r_hat[j]) * (target[i] - target[j]);
      if (m > 0.0) hinge += m;
    }
  }
  return mse + hinge;
}

struct Snapshot {
  std::vector<Tensor> values;
  AdamState adam;
  std::uint64_t noise_counter = 0, pair_counter = 0;
};

Snapshot take_snapshot(StockOde& model, const AdamState& adam,
                       const Rng& noise, const Rng& pairs) {
  Snapshot s;
  for (Parameter* p : model.parameters()) s.values.push_back(p->value);
  s.adam = adam;
  s.noise_counter = noise.counter();
  s.pair_counter = pairs.counter();
  return s;
}

}  // namespace

TrainResult train(StockOde& model, AdamState& adam, const DatasetSplits& data,
                  Rng& run_rng, const TrainOptions& options) {
  if (data.train.empty()) throw ContractError("train: empty training split");
  const std::size_t epochs =
      options.epochs.value_or(model.config().epochs);

  Rng noise = run_rng.fork("train-noise");
  Rng pairs = run_rng.fork("train-pairs");
  adam.lr = model.config().lr;

  TrainResult result;
  Snapshot best = take_snapshot(model, adam, noise, pairs);
  double best_mrr = -1.0;

  const std::size_t k =
      std::min<std::size_t>(options.backtest_k, data.train[0].target.size());

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t idx = 0; idx < data.train.size(); ++idx) {
      const WindowSample& window = data.train[idx];
      Tape tape;
      auto fw = model.forward(tape, window, &noise);
      Var loss = model.loss(tape, fw, window.target, &pairs);
      const double value = loss.value().scalar_value();
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", window " +
                           std::to_string(idx) + " (target day " +
                           window.target_day + ")");
      }
      total += value;
      tape.backward(loss);
      adam_step(adam, model.parameters());
    }
    const double train_loss = total / double(data.train.size());
    result.log.push_back({epoch, "train", train_loss, {}, {}, {}});
    result.final_train_loss = train_loss;

    if (!data.val.empty()) {
      auto evals = evaluate_windows(model, data.val);
      double val_loss = 0.0;
      for (std::size_t i = 0; i < data.val.size(); ++i) {
        val_loss += raw_prediction_loss(evals[i].r_hat, evals[i].r_true);
      }
      val_loss /= double(data.val.size());

      EpochMetrics m{epoch, "val", val_loss, {}, {}, {}};
      m.mrr = mrr(evals);
      m.ndcg5 = ndcg_at_k(evals, std::min<std::size_t>(5, k));
      try {
        std::vector<double> rets;
        for (const auto& e : evals) {
          double r = 0.0;
          for (std::size_t i = 0; i < k; ++i) r += e.r_true[e.predicted_order[i]];
          rets.push_back(r / double(k));
        }
        m.sr = sharpe_ratio(rets, options.risk_free);
      } catch (const Error&) {
        m.sr = std::nullopt;  // degenerate split (constant returns)
      }
      result.log.push_back(m);

      if (*m.mrr > best_mrr) {
        best_mrr = *m.mrr;
        best = take_snapshot(model, adam, noise, pairs);
        result.best_epoch = epoch;
        result.best_val_mrr = best_mrr;
      }
    } else {
      best = take_snapshot(model, adam, noise, pairs);
      result.best_epoch = epoch;
    }
  }

  // restore the best-validation state
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = best.values[i];
    params[i]->zero_grad();
  }
  adam = best.adam;
  result.noise_counter = best.noise_counter;
  result.pair_counter = best.pair_counter;
  return result;
}

void write_metric_log(const std::filesystem::path& path,
                      const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metric log " + path.string());
  out << "epoch,split,loss,sr,mrr,ndcg5\n";
  char buf[64];
  auto fmt = [&](const std::optional<double>& v) -> std::string {
    if (!v.has_value()) return "";
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
  };
  for (const auto& m : log) {
    std::snprintf(buf, sizeof(buf), "%.17g", m.loss);
    out << m.epoch << ',' << m.split << ',' << buf << ',' << fmt(m.sr) << ','
        << fmt(m.mrr) << ',' << fmt(m.ndcg5) << '\n';
  }
}

}  // namespace stockode
