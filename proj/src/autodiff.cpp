#include "stockode/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace stockode {

Var Tape::push(Tensor value, std::function<void(Tape&, const Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

Var Tape::constant(Tensor t) { return push(std::move(t), nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Var v = push(p.value, nullptr);
  nodes_[v.id].param = &p;
  param_nodes_[&p] = v.id;
  return v;
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = stockode::add(a.value(), b.value());
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, const Node& self) {
    add_inplace(t.grad_ref(ia), self.grad);
    add_inplace(t.grad_ref(ib), self.grad);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = stockode::sub(a.value(), b.value());
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, const Node& self) {
    add_inplace(t.grad_ref(ia), self.grad);
    axpy_inplace(t.grad_ref(ib), -1.0, self.grad);
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = stockode::mul(a.value(), b.value());
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, const Node& self) {
    {
      Tensor& ga = t.grad_ref(ia);
      const Tensor& bv = t.nodes_[ib].value;
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga[i] += self.grad[i] * bv[i];
    }
    {
      Tensor& gb = t.grad_ref(ib);
      const Tensor& av = t.nodes_[ia].value;
      for (std::size_t i = 0; i < gb.size(); ++i)
        gb[i] += self.grad[i] * av[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = stockode::scale(a.value(), c);
  int ia = a.id;
  return push(std::move(out), [ia, c](Tape& t, const Node& self) {
    axpy_inplace(t.grad_ref(ia), c, self.grad);
  });
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& x : out.data()) x += c;
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, const Node& self) {
    add_inplace(t.grad_ref(ia), self.grad);
  });
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = stockode::matmul(a.value(), b.value());
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, const Node& self) {
    gemm(t.grad_ref(ia), self.grad, t.nodes_[ib].value, false, true, true);
    gemm(t.grad_ref(ib), t.nodes_[ia].value, self.grad, true, false, true);
  });
}

Var Tape::transpose(Var a) {
  Tensor out = stockode::transpose(a.value());
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, const Node& self) {
    add_inplace(t.grad_ref(ia), stockode::transpose(self.grad));
  });
}

Var Tape::add_rowvec(Var m, Var v) {
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.size() != mv.dim(1)) {
    throw ShapeError("add_rowvec: matrix " + mv.shape_string() +
                     " vs row vector " + vv.shape_string());
  }
  Tensor out = mv;
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) += vv[j];
  int im = m.id, iv = v.id;
  return push(std::move(out), [im, iv, rows, cols](Tape& t, const Node& self) {
    add_inplace(t.grad_ref(im), self.grad);
    Tensor& gv = t.grad_ref(iv);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) gv[j] += self.grad[i * cols + j];
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
    throw ShapeError("concat_cols: " + av.shape_string() + " and " +
                     bv.shape_string());
  }
  const std::size_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({rows, ca + cb});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
    for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
  }
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib, rows, ca, cb](Tape& t,
                                                     const Node& self) {
    Tensor& ga = t.grad_ref(ia);
    Tensor& gb = t.grad_ref(ib);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < ca; ++j)
        ga[i * ca + j] += self.grad[i * (ca + cb) + j];
      for (std::size_t j = 0; j < cb; ++j)
        gb[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
    }
  });
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t len) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || start + len > av.dim(1)) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") of " +
                     av.shape_string());
  }
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out({rows, len});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < len; ++j) out.at(i, j) = av.at(i, start + j);
  int ia = a.id;
  return push(std::move(out), [ia, start, len, rows, cols](Tape& t,
                                                           const Node& self) {
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < len; ++j)
        ga[i * cols + start + j] += self.grad[i * len + j];
  });
}

Var Tape::unary(Var a, Tensor value, Tensor dydx) {
  int ia = a.id;
  return push(std::move(value),
              [ia, d = std::move(dydx)](Tape& t, const Node& self) {
                Tensor& ga = t.grad_ref(ia);
                for (std::size_t i = 0; i < ga.size(); ++i)
                  ga[i] += self.grad[i] * d[i];
              });
}

static double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var Tape::sigmoid(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = sigmoid_scalar(x[i]);
    d[i] = y[i] * (1.0 - y[i]);
  }
  return unary(a, std::move(y), std::move(d));
}

Var Tape::tanh(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::tanh(x[i]);
    d[i] = 1.0 - y[i] * y[i];
  }
  return unary(a, std::move(y), std::move(d));
}

Var Tape::relu(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
    d[i] = x[i] > 0.0 ? 1.0 : 0.0;
  }
  return unary(a, std::move(y), std::move(d));
}

Var Tape::leaky_relu(Var a, double slope) {
  const Tensor& x = a.value();
  Tensor y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    d[i] = x[i] > 0.0 ? 1.0 : slope;
  }
  return unary(a, std::move(y), std::move(d));
}

Var Tape::softplus(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] + std::log1p(std::exp(-x[i]))
                      : std::log1p(std::exp(x[i]));
    d[i] = sigmoid_scalar(x[i]);
  }
  return unary(a, std::move(y), std::move(d));
}

Var Tape::log(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::log(x[i]);
    d[i] = 1.0 / x[i];
  }
  return unary(a, std::move(y), std::move(d));
}

Var Tape::softmax_rows(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) {
    throw ShapeError("softmax_rows: expected rank-2, got " + x.shape_string());
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y.at(i, j) = std::exp(x.at(i, j) - mx);
      sum += y.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) y.at(i, j) /= sum;
  }
  int ia = a.id;
  return push(std::move(y), [ia, rows, cols](Tape& t, const Node& self) {
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j)
        dot += self.grad[i * cols + j] * self.value[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        ga[i * cols + j] +=
            self.value[i * cols + j] * (self.grad[i * cols + j] - dot);
    }
  });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || gv.size() != xv.dim(1) || bv.size() != xv.dim(1)) {
    throw ShapeError("layer_norm_rows: x " + xv.shape_string() + ", gain " +
                     gv.shape_string() + ", bias " + bv.shape_string());
  }
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor y({rows, cols});
  Tensor xhat({rows, cols});
  std::vector<double> inv_sigma(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xv.at(i, j);
    mu /= double(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = xv.at(i, j) - mu;
      var += c * c;
    }
    var /= double(cols);
    inv_sigma[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      xhat.at(i, j) = (xv.at(i, j) - mu) * inv_sigma[i];
      y.at(i, j) = gv[j] * xhat.at(i, j) + bv[j];
    }
  }
  int ix = x.id, ig = gain.id, ib = bias.id;
  return push(std::move(y), [ix, ig, ib, rows, cols, xh = std::move(xhat),
                             is = std::move(inv_sigma)](Tape& t,
                                                        const Node& self) {
    Tensor& gx = t.grad_ref(ix);
    Tensor& gg = t.grad_ref(ig);
    Tensor& gb = t.grad_ref(ib);
    const Tensor& gamma = t.nodes_[ig].value;
    for (std::size_t i = 0; i < rows; ++i) {
      double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
      for (std::size_t j = 0; j < cols; ++j) {
        const double dy = self.grad[i * cols + j];
        const double dxh = dy * gamma[j];
        gg[j] += dy * xh.at(i, j);
        gb[j] += dy;
        m1 += dxh;
        m2 += dxh * xh.at(i, j);
      }
      m1 /= double(cols);
      m2 /= double(cols);
      for (std::size_t j = 0; j < cols; ++j) {
        const double dxh = self.grad[i * cols + j] * gamma[j];
        gx[i * cols + j] += is[i] * (dxh - m1 - xh.at(i, j) * m2);
      }
    }
  });
}

Var Tape::sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  int ia = a.id;
  return push(Tensor::scalar(s), [ia](Tape& t, const Node& self) {
    Tensor& ga = t.grad_ref(ia);
    const double g = self.grad[0];
    for (double& v : ga.data()) v += g;
  });
}

Var Tape::mean(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv_n = 1.0 / double(x.size());
  int ia = a.id;
  return push(Tensor::scalar(s * inv_n), [ia, inv_n](Tape& t,
                                                     const Node& self) {
    Tensor& ga = t.grad_ref(ia);
    const double g = self.grad[0] * inv_n;
    for (double& v : ga.data()) v += g;
  });
}

Var Tape::pairwise_hinge(Var rhat, std::vector<std::pair<int, int>> pairs,
                         Tensor true_diff) {
  const Tensor& r = rhat.value();
  if (true_diff.size() != pairs.size()) {
    throw ShapeError("pairwise_hinge: " + std::to_string(pairs.size()) +
                     " pairs but " + std::to_string(true_diff.size()) +
                     " target differences");
  }
  double loss = 0.0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double margin =
        -(r[pairs[p].first] - r[pairs[p].second]) * true_diff[p];
    if (margin > 0.0) loss += margin;
  }
  int ia = rhat.id;
  return push(
      Tensor::scalar(loss),
      [ia, ps = std::move(pairs), td = std::move(true_diff)](
          Tape& t, const Node& self) {
        Tensor& ga = t.grad_ref(ia);
        const Tensor& r = t.nodes_[ia].value;
        const double g = self.grad[0];
        for (std::size_t p = 0; p < ps.size(); ++p) {
          const double margin =
              -(r[ps[p].first] - r[ps[p].second]) * td[p];
          if (margin > 0.0) {
            ga[ps[p].first] -= g * td[p];
            ga[ps[p].second] += g * td[p];
          }
        }
      });
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape != this) {
    throw ContractError("backward: loss does not belong to this tape");
  }
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[loss.id].value.shape_string());
  }
  for (Node& n : nodes_) {
    if (n.grad.size() != 0) n.grad.fill(0.0);
  }
  grad_ref(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (n.grad.size() != 0 && n.back) n.back(*this, n);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.grad.size() != 0)
      add_inplace(n.param->grad, n.grad);
  }
}

}  // namespace stockode
