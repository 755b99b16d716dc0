// Dense row-major double tensor plus the small matmul kernels the model is
// built on. Everything runs in double; shapes are known at call time.
#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace avcn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) { reshape(std::move(s)); }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  void reshape(std::vector<int> s) {
    shape = std::move(s);
    v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  double& at(int i) { return v[static_cast<size_t>(i)]; }
  const double& at(int i) const { return v[static_cast<size_t>(i)]; }
  double& at(int i, int j) {
    return v[static_cast<size_t>(i) * shape[1] + j];
  }
  const double& at(int i, int j) const {
    return v[static_cast<size_t>(i) * shape[1] + j];
  }
  double& at(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const double& at(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return v[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
};

// C(M,N) += A(M,K) * B(K,N)
inline void gemm_nn(const double* a, const double* b, double* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const double* arow = a + static_cast<size_t>(i) * K;
    double* crow = c + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(M,N) += A(M,K) * B(N,K)^T
inline void gemm_nt(const double* a, const double* b, double* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const double* arow = a + static_cast<size_t>(i) * K;
    double* crow = c + static_cast<size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const double* brow = b + static_cast<size_t>(j) * K;
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
      crow[j] += s;
    }
  }
}

// C(M,N) += A(K,M)^T * B(K,N)
inline void gemm_tn(const double* a, const double* b, double* c, int M, int K, int N) {
  for (int k = 0; k < K; ++k) {
    const double* arow = a + static_cast<size_t>(k) * M;
    const double* brow = b + static_cast<size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace avcn
