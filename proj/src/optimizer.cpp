#include "stockode/optimizer.hpp"

#include <cmath>

#include "stockode/errors.hpp"

namespace stockode {

void adam_step(AdamState& state, std::span<Parameter* const> params) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  for (Parameter* p : params) {
    auto& mo = state.moments[p];
    if (mo.m.size() == 0) {
      mo.m = Tensor(p->value.shape());
      mo.v = Tensor(p->value.shape());
    }
    check_same_shape(mo.m, p->grad, "adam_step");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      mo.m[i] = state.beta1 * mo.m[i] + (1.0 - state.beta1) * g;
      mo.v[i] = state.beta2 * mo.v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      p->value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p->zero_grad();
  }
}

double gradcheck(const std::function<Var(Tape&)>& model_fn,
                 std::span<Parameter* const> params, double fd_step,
                 std::string* worst_parameter) {
  const auto eval = [&]() {
    Tape tape;
    return model_fn(tape).value().scalar_value();
  };

  const double l1 = eval();
  const double l2 = eval();
  if (l1 != l2) {
    throw DeterminismError(
        "gradcheck: model function is not deterministic (values " +
        std::to_string(l1) + " vs " + std::to_string(l2) + ")");
  }

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = model_fn(tape);
    tape.backward(loss);
  }

  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + fd_step;
      const double up = eval();
      p->value[i] = saved - fd_step;
      const double down = eval();
      p->value[i] = saved;
      const double fd = (up - down) / (2.0 * fd_step);
      const double analytic = p->grad[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(fd), 1e-12});
      const double err = std::abs(analytic - fd) / denom;
      if (err > worst) {
        worst = err;
        if (worst_parameter) *worst_parameter = p->name;
      }
    }
  }
  return worst;
}

}  // namespace stockode
