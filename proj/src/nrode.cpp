#include "stockode/nrode.hpp"

#include <cmath>

#include "stockode/errors.hpp"
#include "stockode/trend.hpp"  // init_weight

namespace stockode {

Var euler_solve(Tape& tape, const DerivFn& deriv, Var h0, double t0, double t1,
                std::size_t substeps, std::vector<Tensor>* archive) {
  if (!(t1 > t0)) {
    throw RangeError("euler_solve: need t1 > t0, got [" + std::to_string(t0) +
                     ", " + std::to_string(t1) + "]");
  }
  if (substeps < 1) throw ContractError("euler_solve: substeps must be >= 1");
  const double dt = (t1 - t0) / double(substeps);
  Var h = h0;
  if (archive) {
    archive->clear();
    archive->push_back(h.value());
  }
  for (std::size_t k = 0; k < substeps; ++k) {
    const double t = t0 + dt * double(k);
    Var dh = deriv(tape, h, t);
    h = tape.add(h, tape.scale(dh, dt));
    if (archive) archive->push_back(h.value());
  }
  return h;
}

Var gate_g(Tape& tape, Var h, Var a) {
  return tape.mul(h, tape.sigmoid(a));
}

OdeFunctionWeights::OdeFunctionWeights(const std::string& prefix,
                                       std::size_t d, bool use_gate, Rng& rng)
    : d(d),
      use_gate(use_gate),
      w1(prefix + ".mlp1.w", init_weight(rng, d, d)),
      b1(prefix + ".mlp1.b", Tensor({d})),
      w2(prefix + ".mlp2.w", init_weight(rng, d, d)),
      b2(prefix + ".mlp2.b", Tensor({d})),
      w3(prefix + ".mlp3.w", init_weight(rng, d, d)),
      b3(prefix + ".mlp3.b", Tensor({d})),
      w_gate(prefix + ".attn.w",
             use_gate ? init_weight(rng, d, d) : Tensor({d, d})),
      b_gate(prefix + ".attn.b", Tensor({d})) {}

void OdeFunctionWeights::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(), {&w1, &b1, &w2, &b2, &w3, &b3});
  if (use_gate) out.insert(out.end(), {&w_gate, &b_gate});
}

Var OdeFunctionWeights::deriv(Tape& tape, Var h) {
  Var x = h;
  if (use_gate) {
    Var a = tape.add_rowvec(tape.matmul(h, tape.param(w_gate)),
                            tape.param(b_gate));
    x = gate_g(tape, h, a);
  }
  Var l1 = tape.tanh(
      tape.add_rowvec(tape.matmul(x, tape.param(w1)), tape.param(b1)));
  Var l2 = tape.tanh(
      tape.add_rowvec(tape.matmul(l1, tape.param(w2)), tape.param(b2)));
  return tape.add_rowvec(tape.matmul(l2, tape.param(w3)), tape.param(b3));
}

NrodeWeights::NrodeWeights(const std::string& prefix, std::size_t d,
                           bool has_latent, Rng& rng)
    : d(d),
      has_latent(has_latent),
      ode(prefix + ".ode", d, true, rng),
      w_in(prefix + ".in.w", init_weight(rng, d, d)),
      b_in(prefix + ".in.b", Tensor({d})),
      w_cand(prefix + ".cand.w", init_weight(rng, 2 * d, d)),
      b_cand(prefix + ".cand.b", Tensor({d})),
      w_gate(prefix + ".gate.w", init_weight(rng, d, d)),
      b_gate(prefix + ".gate.b", Tensor({d})),
      w_latent(prefix + ".latent.w",
               has_latent ? init_weight(rng, d, 2 * d) : Tensor({d, 2 * d})),
      b_latent(prefix + ".latent.b", Tensor({2 * d})) {}

void NrodeWeights::collect(std::vector<Parameter*>& out) {
  ode.collect(out);
  out.insert(out.end(), {&w_in, &b_in, &w_cand, &b_cand, &w_gate, &b_gate});
  if (has_latent) out.insert(out.end(), {&w_latent, &b_latent});
}

namespace {

void check_finite(const Var& v, const char* stage) {
  if (!v.value().all_finite()) {
    throw NumericError(std::string("nrode: non-finite values at stage '") +
                       stage + "'");
  }
}

constexpr double kSigmaFloor = 1e-6;

}  // namespace

NrodeStepResult nrode_step(Tape& tape, Var h_prev, Var p_tau, double t_prev,
                           double t_cur, NrodeWeights& weights,
                           const SolverConfig& cfg,
                           const std::optional<Tensor>& eps,
                           GateConvention convention,
                           LatentMean latent_mean) {
  NrodeStepResult out;
  out.archive.t_prev = t_prev;
  out.archive.t_cur = t_cur;

  Var v = tape.add_rowvec(tape.matmul(p_tau, tape.param(weights.w_in)),
                          tape.param(weights.b_in));
  check_finite(v, "input map");

  Var h_prime = euler_solve(tape, weights.ode.as_deriv_fn(), h_prev, t_prev,
                            t_cur, cfg.substeps, &out.archive.substeps);
  check_finite(h_prime, "ode solve");

  Var cand = tape.add_rowvec(
      tape.matmul(tape.concat_cols(v, h_prime), tape.param(weights.w_cand)),
      tape.param(weights.b_cand));
  check_finite(cand, "candidate map");

  Var gate = tape.sigmoid(tape.add_rowvec(
      tape.matmul(v, tape.param(weights.w_gate)), tape.param(weights.b_gate)));

  Var keep = convention == GateConvention::kGateKeepsPrevious
                 ? gate
                 : tape.add_scalar(tape.scale(gate, -1.0), 1.0);
  Var take = tape.add_scalar(tape.scale(keep, -1.0), 1.0);
  out.h = tape.add(tape.mul(take, cand), tape.mul(keep, h_prev));
  check_finite(out.h, "gate update");

  if (weights.has_latent) {
    const std::size_t d = weights.d;
    Var heads = tape.add_rowvec(
        tape.matmul(out.h, tape.param(weights.w_latent)),
        tape.param(weights.b_latent));
    out.mu = tape.slice_cols(heads, 0, d);
    out.sigma = tape.add_scalar(
        tape.softplus(tape.slice_cols(heads, d, d)), kSigmaFloor);
    Var center = latent_mean == LatentMean::kHidden ? out.h : out.mu;
    if (eps.has_value()) {
      check_same_shape(*eps, out.sigma.value(), "nrode_step noise");
      out.z = tape.add(center, tape.mul(out.sigma, tape.constant(*eps)));
    } else {
      out.z = center;
    }
    check_finite(out.z, "latent sample");
    out.archive.mu = out.mu.value();
    out.archive.sigma = out.sigma.value();
    out.archive.z = out.z.value();
  }

  out.archive.v = v.value();
  out.archive.h_prime = h_prime.value();
  out.archive.h = out.h.value();
  return out;
}

NrodeResult nrode_unroll(Tape& tape, const std::vector<Var>& p_days,
                         NrodeWeights& weights, const SolverConfig& cfg,
                         Rng* noise, GateConvention convention,
                         LatentMean latent_mean) {
  if (p_days.empty()) throw ContractError("nrode_unroll: empty window");
  const std::size_t n = p_days[0].value().dim(0);
  const std::size_t d = weights.d;

  NrodeResult result;
  Var h = tape.constant(Tensor({n, d}));  // h_0 = 0
  for (std::size_t t = 0; t < p_days.size(); ++t) {
    std::optional<Tensor> eps;
    if (noise != nullptr && weights.has_latent) {
      eps = noise->normal_tensor({n, d});
    }
    NrodeStepResult step =
        nrode_step(tape, h, p_days[t], double(t), double(t + 1), weights, cfg,
                   eps, convention, latent_mean);
    h = step.h;
    result.h_seq.push_back(step.h);
    if (weights.has_latent) {
      result.mu_seq.push_back(step.mu);
      result.sigma_seq.push_back(step.sigma);
      result.z_seq.push_back(step.z);
    }
    result.trajectory.push_back(std::move(step.archive));
  }
  return result;
}

Tensor query_trajectory(const IntervalArchive& interval, const DerivFn& deriv,
                        const SolverConfig& cfg, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw RangeError("query_trajectory: fraction " + std::to_string(fraction) +
                     " outside (0, 1]");
  }
  const double pos = fraction * double(cfg.substeps);
  const long nearest = std::lround(pos);
  if (std::abs(pos - double(nearest)) < 1e-9) {
    return interval.substeps.at(std::size_t(nearest));
  }
  // off the substep grid: one partial Euler step from the grid point below
  const std::size_t base = std::size_t(std::floor(pos));
  const double span = interval.t_cur - interval.t_prev;
  const double dt_full = span / double(cfg.substeps);
  const double t_base = interval.t_prev + dt_full * double(base);
  const double dt_partial = (pos - double(base)) * dt_full;

  Tape scratch;
  Var h = scratch.constant(interval.substeps.at(base));
  Var dh = deriv(scratch, h, t_base);
  Var out = scratch.add(h, scratch.scale(dh, dt_partial));
  return out.value();
}

GruWeights::GruWeights(const std::string& prefix, std::size_t d, Rng& rng)
    : d(d),
      w_ir(prefix + ".w_ir", init_weight(rng, d, d)),
      w_hr(prefix + ".w_hr", init_weight(rng, d, d)),
      b_r(prefix + ".b_r", Tensor({d})),
      w_iu(prefix + ".w_iu", init_weight(rng, d, d)),
      w_hu(prefix + ".w_hu", init_weight(rng, d, d)),
      b_u(prefix + ".b_u", Tensor({d})),
      w_in(prefix + ".w_in", init_weight(rng, d, d)),
      w_hn(prefix + ".w_hn", init_weight(rng, d, d)),
      b_n(prefix + ".b_n", Tensor({d})) {}

void GruWeights::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(),
             {&w_ir, &w_hr, &b_r, &w_iu, &w_hu, &b_u, &w_in, &w_hn, &b_n});
}

Var gru_cell(Tape& tape, Var x, Var h_prev, GruWeights& w) {
  Var r = tape.sigmoid(tape.add_rowvec(
      tape.add(tape.matmul(x, tape.param(w.w_ir)),
               tape.matmul(h_prev, tape.param(w.w_hr))),
      tape.param(w.b_r)));
  Var u = tape.sigmoid(tape.add_rowvec(
      tape.add(tape.matmul(x, tape.param(w.w_iu)),
               tape.matmul(h_prev, tape.param(w.w_hu))),
      tape.param(w.b_u)));
  Var n = tape.tanh(tape.add_rowvec(
      tape.add(tape.matmul(x, tape.param(w.w_in)),
               tape.mul(r, tape.matmul(h_prev, tape.param(w.w_hn)))),
      tape.param(w.b_n)));
  Var one_minus_u = tape.add_scalar(tape.scale(u, -1.0), 1.0);
  return tape.add(tape.mul(one_minus_u, n), tape.mul(u, h_prev));
}

OdeGruWeights::OdeGruWeights(const std::string& prefix, std::size_t d,
                             Rng& rng)
    : ode(prefix + ".ode", d, false, rng), gru(prefix + ".gru", d, rng) {}

void OdeGruWeights::collect(std::vector<Parameter*>& out) {
  ode.collect(out);
  gru.collect(out);
}

OdeGruStepResult ode_gru_step(Tape& tape, Var h_prev, Var p_tau,
                              double t_prev, double t_cur,
                              OdeGruWeights& weights,
                              const SolverConfig& cfg) {
  OdeGruStepResult out;
  out.archive.t_prev = t_prev;
  out.archive.t_cur = t_cur;
  Var h_prime = euler_solve(tape, weights.ode.as_deriv_fn(), h_prev, t_prev,
                            t_cur, cfg.substeps, &out.archive.substeps);
  check_finite(h_prime, "ode solve");
  out.h = gru_cell(tape, p_tau, h_prime, weights.gru);
  check_finite(out.h, "gru update");
  out.archive.h_prime = h_prime.value();
  out.archive.h = out.h.value();
  return out;
}

Var kl_to_standard_normal(Tape& tape, const std::vector<Var>& mu_seq,
                          const std::vector<Var>& sigma_seq) {
  if (mu_seq.empty() || mu_seq.size() != sigma_seq.size()) {
    throw ContractError("kl_to_standard_normal: mismatched sequences");
  }
  Var total;
  std::size_t n_stocks = 0;
  for (std::size_t t = 0; t < mu_seq.size(); ++t) {
    Var mu = mu_seq[t];
    Var sigma = sigma_seq[t];
    for (double s : sigma.value().data()) {
      if (!(s > 0.0)) {
        throw RangeError("kl_to_standard_normal: sigma must be positive");
      }
    }
    n_stocks = mu.value().rank() >= 1 ? mu.value().dim(0) : 1;
    Var var = tape.mul(sigma, sigma);
    Var inner = tape.add_scalar(
        tape.sub(tape.add(var, tape.mul(mu, mu)), tape.log(var)), -1.0);
    Var day = tape.scale(tape.sum(inner), 0.5);
    total = total.valid() ? tape.add(total, day) : day;
  }
  const double norm = 1.0 / (double(n_stocks) * double(mu_seq.size()));
  return tape.scale(total, norm);
}

double kl_scalar(double mu, double sigma) {
  return 0.5 * (sigma * sigma + mu * mu - 1.0 - std::log(sigma * sigma));
}

}  // namespace stockode
