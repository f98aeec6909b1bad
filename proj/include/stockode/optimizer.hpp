#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <utility>

#include "stockode/autodiff.hpp"

namespace stockode {

/// Adam with bias correction. Moment tensors are created lazily per
/// parameter on the first step.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;

  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::unordered_map<const Parameter*, Moments> moments;
};

/// One Adam update over the given parameters; gradients are zeroed
/// afterwards.
void adam_step(AdamState& state, std::span<Parameter* const> params);

/// Compares tape gradients of a scalar-valued model function against central
/// finite differences. Returns the max over all parameter entries of
/// |analytic - fd| / max(|analytic|, |fd|, 1e-12).
///
/// The function is evaluated twice up front; any value drift between the two
/// evaluations throws DeterminismError.
double gradcheck(const std::function<Var(Tape&)>& model_fn,
                 std::span<Parameter* const> params, double fd_step = 1e-6,
                 std::string* worst_parameter = nullptr);

}  // namespace stockode
