#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "stockode/autodiff.hpp"
#include "stockode/rng.hpp"

namespace stockode {

struct SolverConfig {
  std::size_t substeps = 5;  // Euler substeps per unit observation interval
};

/// Which state the update gate I retains: h = (1-I) h'' + I h_prev (the
/// default) or the flipped form. The two differ only by relabeling the
/// learned gate.
enum class GateConvention { kGateKeepsPrevious, kGateKeepsCandidate };

/// Whether latent samples center on the hidden state or on the mu head.
enum class LatentMean { kHidden, kMu };

/// Derivative callback for the Euler solver: (tape, h, t) -> dh/dt.
using DerivFn = std::function<Var(Tape&, Var, double)>;

/// Explicit Euler: h <- h + dt * f(h, t) over K equal substeps. When archive
/// is given, it receives K+1 states starting with h0. Throws RangeError when
/// t1 <= t0.
Var euler_solve(Tape& tape, const DerivFn& deriv, Var h0, double t0, double t1,
                std::size_t substeps, std::vector<Tensor>* archive = nullptr);

/// Attention-integrated layer: h ⊗ sigmoid(a).
Var gate_g(Tape& tape, Var h, Var a);

/// The ODE function: a three-layer d->d MLP with tanh between layers,
/// applied to g(h, a(h)) where a(h) = h W_a + b_a. The variant without the
/// multiplicative gate feeds h straight into the MLP.
struct OdeFunctionWeights {
  std::size_t d;
  bool use_gate;
  Parameter w1, b1, w2, b2, w3, b3;
  Parameter w_gate, b_gate;

  OdeFunctionWeights(const std::string& prefix, std::size_t d, bool use_gate,
                     Rng& rng);
  void collect(std::vector<Parameter*>& out);

  Var deriv(Tape& tape, Var h);
  DerivFn as_deriv_fn() {
    return [this](Tape& t, Var h, double) { return deriv(t, h); };
  }
};

struct NrodeWeights {
  std::size_t d;
  bool has_latent;
  OdeFunctionWeights ode;
  Parameter w_in, b_in;      // v = p W_v + b_v
  Parameter w_cand, b_cand;  // h'' = [v ; h'] W_h + b_h   (2d x d)
  Parameter w_gate, b_gate;  // I = sigmoid(v W_I + b_I)
  Parameter w_latent, b_latent;  // [mu, sigma_raw] = h W_z + b_z  (d x 2d)

  NrodeWeights(const std::string& prefix, std::size_t d, bool has_latent,
               Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Value snapshots of one observation interval, kept for intermediate-time
/// queries and trajectory export.
struct IntervalArchive {
  double t_prev = 0.0, t_cur = 1.0;
  std::vector<Tensor> substeps;  // K+1 states, [0] = h at t_prev
  Tensor v, h_prime, h, mu, sigma, z;
};

struct NrodeStepResult {
  Var h;
  Var mu, sigma, z;  // invalid when the cell has no latent head
  IntervalArchive archive;
};

/// One recursive step: linear input map, Euler-evolved candidate, learned
/// interpolation gate, then the variational head. eps, when present, must be
/// an (N, d) standard-normal draw; absent means the deterministic path
/// (eps = 0).
NrodeStepResult nrode_step(Tape& tape, Var h_prev, Var p_tau, double t_prev,
                           double t_cur, NrodeWeights& weights,
                           const SolverConfig& cfg,
                           const std::optional<Tensor>& eps,
                           GateConvention convention,
                           LatentMean latent_mean);

struct NrodeResult {
  std::vector<Var> h_seq, mu_seq, sigma_seq, z_seq;
  std::vector<IntervalArchive> trajectory;
};

/// Runs nrode_step over the window with unit-spaced observation times,
/// starting from h_0 = 0. noise == nullptr runs the deterministic path.
NrodeResult nrode_unroll(Tape& tape, const std::vector<Var>& p_days,
                         NrodeWeights& weights, const SolverConfig& cfg,
                         Rng* noise,
                         GateConvention convention = GateConvention::kGateKeepsPrevious,
                         LatentMean latent_mean = LatentMean::kHidden);

/// Hidden state at t_prev + fraction * (t_cur - t_prev) for fraction in
/// (0, 1]. Grid-aligned fractions return the archived state; off-grid ones
/// re-integrate one partial Euler step from the nearest archived substep.
Tensor query_trajectory(const IntervalArchive& interval, const DerivFn& deriv,
                        const SolverConfig& cfg, double fraction);

/// Standard GRU cell weights (d -> d).
struct GruWeights {
  std::size_t d;
  Parameter w_ir, w_hr, b_r;
  Parameter w_iu, w_hu, b_u;
  Parameter w_in, w_hn, b_n;

  GruWeights(const std::string& prefix, std::size_t d, Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

Var gru_cell(Tape& tape, Var x, Var h_prev, GruWeights& weights);

struct OdeGruWeights {
  OdeFunctionWeights ode;  // no attention gate
  GruWeights gru;

  OdeGruWeights(const std::string& prefix, std::size_t d, Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

struct OdeGruStepResult {
  Var h;
  IntervalArchive archive;
};

/// h' = Euler-evolved previous state (no attention gate), then a standard
/// GRU observation update.
OdeGruStepResult ode_gru_step(Tape& tape, Var h_prev, Var p_tau,
                              double t_prev, double t_cur,
                              OdeGruWeights& weights, const SolverConfig& cfg);

/// Analytic KL(N(mu, sigma^2) || N(0, 1)): 0.5 (sigma^2 + mu^2 - 1 -
/// ln sigma^2) summed over feature entries, averaged over stocks and steps.
/// Throws RangeError on non-positive sigma.
Var kl_to_standard_normal(Tape& tape, const std::vector<Var>& mu_seq,
                          const std::vector<Var>& sigma_seq);

/// Scalar closed form, used by oracles: 0.5 (sigma^2 + mu^2 - 1 - ln sigma^2).
double kl_scalar(double mu, double sigma);

}  // namespace stockode
