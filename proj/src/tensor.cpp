#include "stockode/tensor.hpp"

#include <sstream>

namespace stockode {

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shapes " + a.shape_string() +
                     " and " + b.shape_string() + " differ");
  }
}

static void check_2d(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected rank-2 tensor, got " +
                     t.shape_string());
  }
}

void gemm(Tensor& dst, const Tensor& a, const Tensor& b, bool trans_a,
          bool trans_b, bool accumulate) {
  check_2d(a, "gemm");
  check_2d(b, "gemm");
  const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions disagree between " +
                     a.shape_string() + (trans_a ? "^T" : "") + " and " +
                     b.shape_string() + (trans_b ? "^T" : ""));
  }
  if (!accumulate) {
    dst = Tensor({m, n});
  } else if (dst.rank() != 2 || dst.dim(0) != m || dst.dim(1) != n) {
    throw ShapeError("gemm: accumulator shape " + dst.shape_string() +
                     " does not match product");
  }

  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = dst.data().data();
  const std::size_t lda = a.dim(1);
  const std::size_t ldb = b.dim(1);

  if (!trans_a && !trans_b) {
    // ikj order keeps the inner loop contiguous for both B and C.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = pa[i * lda + kk];
        const double* brow = pb + kk * ldb;
        double* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* arow = pa + kk * lda;
      const double* brow = pb + kk * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = arow[i];
        double* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = pb + j * ldb;
        double s = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
        pc[i * n + j] += s;
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk)
          s += pa[kk * lda + i] * pb[j * ldb + kk];
        pc[i * n + j] += s;
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c;
  gemm(c, a, b, false, false, false);
  return c;
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor c = a;
  add_inplace(c, b);
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor c = a;
  axpy_inplace(c, -1.0, b);
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Tensor scale(const Tensor& a, double c) {
  Tensor r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= c;
  return r;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  check_same_shape(dst, src, "add_inplace");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void axpy_inplace(Tensor& dst, double alpha, const Tensor& src) {
  check_same_shape(dst, src, "axpy_inplace");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

}  // namespace stockode
