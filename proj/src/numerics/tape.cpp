// Copyright 2026 The modbridge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mb/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <type_traits>

#include "mb/kernels.hpp"

namespace mb {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Inner products accumulate in double on both instantiations. The float
// path goes through the kernel dispatch table so results do not depend on
// which backend is active.
template <class T>
double dot_acc(const T* a, const T* b, size_t n);

template <>
double dot_acc<float>(const float* a, const float* b, size_t n) {
  return kern::active().dot(a, b, n);
}

template <>
double dot_acc<double>(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// C[M,N] = A[M,K] * B[K,N]
template <class T>
void mm_raw(const T* A, int64_t M, int64_t K, const T* B, int64_t N, T* C) {
  static thread_local std::vector<T> bt;
  bt.resize(static_cast<size_t>(N * K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t n = 0; n < N; ++n) bt[static_cast<size_t>(n * K + k)] = B[k * N + n];
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n)
      C[m * N + n] = static_cast<T>(
          dot_acc(A + m * K, bt.data() + n * K, static_cast<size_t>(K)));
}

// C[M,N] = A[M,K] * B[N,K]^T
template <class T>
void mm_nt_raw(const T* A, int64_t M, int64_t K, const T* B, int64_t N, T* C) {
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n)
      C[m * N + n] =
          static_cast<T>(dot_acc(A + m * K, B + n * K, static_cast<size_t>(K)));
}

// C[M,N] = A[K,M]^T * B[K,N]
template <class T>
void mm_tn_raw(const T* A, int64_t K, int64_t M, const T* B, int64_t N, T* C) {
  static thread_local std::vector<T> at;
  static thread_local std::vector<T> btn;
  at.resize(static_cast<size_t>(M * K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t m = 0; m < M; ++m) at[static_cast<size_t>(m * K + k)] = A[k * M + m];
  btn.resize(static_cast<size_t>(N * K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t n = 0; n < N; ++n) btn[static_cast<size_t>(n * K + k)] = B[k * N + n];
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n)
      C[m * N + n] = static_cast<T>(
          dot_acc(at.data() + m * K, btn.data() + n * K, static_cast<size_t>(K)));
}

template <class T>
void acc_into(Tens<T>& g, const Tens<T>& d) {
  for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += d.data[i];
}

}  // namespace

// ---- Tape members --------------------------------------------------------

template <class T>
int Tape<T>::push(Tens<T> val, bool requires_grad, BackFn back) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <class T>
int Tape<T>::constant32(const Tensor& v) {
  if constexpr (std::is_same_v<T, float>) {
    return constant(v);
  } else {
    return constant(widen(v));
  }
}

template <class T>
int Tape<T>::trainable(Parameter& p) {
  Tens<T> v;
  auto it = overrides_.find(&p);
  if (it != overrides_.end()) {
    v = it->second;
  } else if constexpr (std::is_same_v<T, float>) {
    v = p.value;
  } else {
    v = widen(p.value);
  }
  const int id = push(std::move(v), true, nullptr);
  params_.emplace_back(id, &p);
  return id;
}

template <class T>
Tens<T>& Tape<T>::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) {
    throw std::logic_error("Tape::grad: no gradient on node (before backward, or "
                           "node does not require grad)");
  }
  return n.grad;
}

template <class T>
void Tape<T>::backward(int loss) {
  Node& ln = nodes_[static_cast<size_t>(loss)];
  if (ln.val.shape.rank() != 0) {
    throw std::logic_error("Tape::backward: loss must be rank-0, got shape " +
                           ln.val.shape.str());
  }
  if (!ln.requires_grad) {
    throw std::logic_error("Tape::backward: loss does not depend on any trainable leaf");
  }
  for (int i = 0; i <= loss; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad) {
      n.grad = Tens<T>(n.val.shape);
      n.grad_live = true;
    }
  }
  ln.grad.data[0] = T(1);
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.back) n.back(*this);
  }
  ran_backward_ = true;
}

template <class T>
void Tape<T>::apply_param_grads() {
  if (!ran_backward_) throw std::logic_error("apply_param_grads before backward");
  for (auto& [id, p] : params_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_live) continue;
    for (size_t i = 0; i < n.grad.data.size(); ++i) {
      p->grad.data[i] += static_cast<float>(n.grad.data[i]);
    }
  }
}

// ---- Ops -----------------------------------------------------------------

template <class T>
int add(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape == B.shape,
          "add: shape mismatch " + A.shape.str() + " vs " + B.shape.str());
  Tens<T> out(A.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] + B.data[i];
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        if (t.needs(a)) acc_into(t.grad(a), g);
        if (t.needs(b)) acc_into(t.grad(b), g);
      });
}

template <class T>
int sub(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape == B.shape,
          "sub: shape mismatch " + A.shape.str() + " vs " + B.shape.str());
  Tens<T> out(A.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] - B.data[i];
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        if (t.needs(a)) acc_into(t.grad(a), g);
        if (t.needs(b)) {
          Tens<T>& gb = t.grad(b);
          for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
        }
      });
}

template <class T>
int hadamard(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape == B.shape,
          "hadamard: shape mismatch " + A.shape.str() + " vs " + B.shape.str());
  Tens<T> out(A.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * B.data[i];
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& A = t.val(a);
        const Tens<T>& B = t.val(b);
        if (t.needs(a)) {
          Tens<T>& ga = t.grad(a);
          for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
        }
        if (t.needs(b)) {
          Tens<T>& gb = t.grad(b);
          for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
        }
      });
}

template <class T>
int scale(Tape<T>& t, int a, double c) {
  const Tens<T>& A = t.val(a);
  Tens<T> out(A.shape);
  const T cf = static_cast<T>(c);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * cf;
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, cf, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& ga = t.grad(a);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * cf;
      });
}

template <class T>
int scale_by(Tape<T>& t, int a, int s) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& S = t.val(s);
  require(S.shape.rank() == 0, "scale_by: scale must be rank-0");
  Tens<T> out(A.shape);
  const T sv = S.data[0];
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = A.data[i] * sv;
  const bool rq = t.needs(a) || t.needs(s);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, s, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& A = t.val(a);
        const T sv = t.val(s).data[0];
        if (t.needs(a)) {
          Tens<T>& ga = t.grad(a);
          for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * sv;
        }
        if (t.needs(s)) {
          double acc = 0.0;
          for (size_t i = 0; i < g.data.size(); ++i)
            acc += static_cast<double>(g.data[i]) * static_cast<double>(A.data[i]);
          t.grad(s).data[0] += static_cast<T>(acc);
        }
      });
}

template <class T>
int exp_scalar(Tape<T>& t, int s) {
  const Tens<T>& S = t.val(s);
  require(S.shape.rank() == 0, "exp_scalar: input must be rank-0");
  Tens<T> out(Shape{});
  out.data[0] = static_cast<T>(std::exp(static_cast<double>(S.data[0])));
  const bool rq = t.needs(s);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [s, id](Tape<T>& t) {
        t.grad(s).data[0] += t.grad(id).data[0] * t.val(id).data[0];
      });
}

template <class T>
int sum_scalars(Tape<T>& t, const std::vector<int>& ids) {
  require(!ids.empty(), "sum_scalars: empty input");
  double acc = 0.0;
  bool rq = false;
  for (int v : ids) {
    require(t.val(v).shape.rank() == 0, "sum_scalars: all inputs must be rank-0");
    acc += static_cast<double>(t.val(v).data[0]);
    rq = rq || t.needs(v);
  }
  Tens<T> out(Shape{});
  out.data[0] = static_cast<T>(acc);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [ids, id](Tape<T>& t) {
        const T g = t.grad(id).data[0];
        for (int v : ids)
          if (t.needs(v)) t.grad(v).data[0] += g;
      });
}

template <class T>
int matmul(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape.rank() == 2 && B.shape.rank() == 2 && A.shape.cols() == B.shape.rows(),
          "matmul: incompatible shapes " + A.shape.str() + " x " + B.shape.str());
  const int64_t M = A.shape.rows(), K = A.shape.cols(), N = B.shape.cols();
  Tens<T> out(Shape{M, N});
  mm_raw(A.data.data(), M, K, B.data.data(), N, out.data.data());
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id, M, K, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& A = t.val(a);
        const Tens<T>& B = t.val(b);
        if (t.needs(a)) {
          Tens<T> tmp(Shape{M, K});
          mm_nt_raw(g.data.data(), M, N, B.data.data(), K, tmp.data.data());
          acc_into(t.grad(a), tmp);
        }
        if (t.needs(b)) {
          Tens<T> tmp(Shape{K, N});
          mm_tn_raw(A.data.data(), M, K, g.data.data(), N, tmp.data.data());
          acc_into(t.grad(b), tmp);
        }
      });
}

template <class T>
int matmul_nt(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape.rank() == 2 && B.shape.rank() == 2 && A.shape.cols() == B.shape.cols(),
          "matmul_nt: incompatible shapes " + A.shape.str() + " x " + B.shape.str());
  const int64_t M = A.shape.rows(), K = A.shape.cols(), N = B.shape.rows();
  Tens<T> out(Shape{M, N});
  mm_nt_raw(A.data.data(), M, K, B.data.data(), N, out.data.data());
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id, M, K, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& A = t.val(a);
        const Tens<T>& B = t.val(b);
        if (t.needs(a)) {
          Tens<T> tmp(Shape{M, K});
          mm_raw(g.data.data(), M, N, B.data.data(), K, tmp.data.data());
          acc_into(t.grad(a), tmp);
        }
        if (t.needs(b)) {
          Tens<T> tmp(Shape{N, K});
          mm_tn_raw(g.data.data(), M, N, A.data.data(), K, tmp.data.data());
          acc_into(t.grad(b), tmp);
        }
      });
}

template <class T>
int transpose(Tape<T>& t, int a) {
  const Tens<T>& A = t.val(a);
  require(A.shape.rank() == 2, "transpose: input must be rank-2");
  const int64_t M = A.shape.rows(), N = A.shape.cols();
  Tens<T> out(Shape{N, M});
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n) out.data[static_cast<size_t>(n * M + m)] = A.data[static_cast<size_t>(m * N + n)];
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id, M, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& ga = t.grad(a);
        for (int64_t m = 0; m < M; ++m)
          for (int64_t n = 0; n < N; ++n)
            ga.data[static_cast<size_t>(m * N + n)] += g.data[static_cast<size_t>(n * M + m)];
      });
}

template <class T>
int reshape(Tape<T>& t, int a, Shape s) {
  const Tens<T>& A = t.val(a);
  require(A.shape.numel() == s.numel(),
          "reshape: numel mismatch " + A.shape.str() + " -> " + s.str());
  Tens<T> out(s, A.data);
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& ga = t.grad(a);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
      });
}

template <class T>
int slice_rows(Tape<T>& t, int a, int64_t r0, int64_t r1) {
  const Tens<T>& A = t.val(a);
  require(A.shape.rank() == 2, "slice_rows: input must be rank-2");
  require(0 <= r0 && r0 < r1 && r1 <= A.shape.rows(),
          "slice_rows: bad range on " + A.shape.str());
  const int64_t N = A.shape.cols();
  Tens<T> out(Shape{r1 - r0, N});
  for (int64_t r = r0; r < r1; ++r)
    for (int64_t n = 0; n < N; ++n) out.at(r - r0, n) = A.at(r, n);
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id, r0, r1, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& ga = t.grad(a);
        for (int64_t r = r0; r < r1; ++r)
          for (int64_t n = 0; n < N; ++n) ga.at(r, n) += g.at(r - r0, n);
      });
}

template <class T>
int slice_cols(Tape<T>& t, int a, int64_t c0, int64_t c1) {
  const Tens<T>& A = t.val(a);
  require(A.shape.rank() == 2, "slice_cols: input must be rank-2");
  require(0 <= c0 && c0 < c1 && c1 <= A.shape.cols(),
          "slice_cols: bad range on " + A.shape.str());
  const int64_t M = A.shape.rows();
  Tens<T> out(Shape{M, c1 - c0});
  for (int64_t m = 0; m < M; ++m)
    for (int64_t c = c0; c < c1; ++c) out.at(m, c - c0) = A.at(m, c);
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id, c0, c1, M](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& ga = t.grad(a);
        for (int64_t m = 0; m < M; ++m)
          for (int64_t c = c0; c < c1; ++c) ga.at(m, c) += g.at(m, c - c0);
      });
}

template <class T>
int concat_rows(Tape<T>& t, const std::vector<int>& ids) {
  require(!ids.empty(), "concat_rows: empty input");
  const int64_t N = t.val(ids[0]).shape.cols();
  int64_t M = 0;
  bool rq = false;
  for (int v : ids) {
    const Tens<T>& A = t.val(v);
    require(A.shape.rank() == 2 && A.shape.cols() == N,
            "concat_rows: column mismatch at " + A.shape.str());
    M += A.shape.rows();
    rq = rq || t.needs(v);
  }
  Tens<T> out(Shape{M, N});
  int64_t r = 0;
  for (int v : ids) {
    const Tens<T>& A = t.val(v);
    for (int64_t i = 0; i < A.shape.rows(); ++i, ++r)
      for (int64_t n = 0; n < N; ++n) out.at(r, n) = A.at(i, n);
  }
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [ids, id, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        int64_t r = 0;
        for (int v : ids) {
          const int64_t rows = t.val(v).shape.rows();
          if (t.needs(v)) {
            Tens<T>& gv = t.grad(v);
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t n = 0; n < N; ++n) gv.at(i, n) += g.at(r + i, n);
          }
          r += rows;
        }
      });
}

template <class T>
int concat_cols(Tape<T>& t, const std::vector<int>& ids) {
  require(!ids.empty(), "concat_cols: empty input");
  const int64_t M = t.val(ids[0]).shape.rows();
  int64_t N = 0;
  bool rq = false;
  for (int v : ids) {
    const Tens<T>& A = t.val(v);
    require(A.shape.rank() == 2 && A.shape.rows() == M,
            "concat_cols: row mismatch at " + A.shape.str());
    N += A.shape.cols();
    rq = rq || t.needs(v);
  }
  Tens<T> out(Shape{M, N});
  int64_t c = 0;
  for (int v : ids) {
    const Tens<T>& A = t.val(v);
    for (int64_t m = 0; m < M; ++m)
      for (int64_t j = 0; j < A.shape.cols(); ++j) out.at(m, c + j) = A.at(m, j);
    c += A.shape.cols();
  }
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [ids, id, M](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        int64_t c = 0;
        for (int v : ids) {
          const int64_t cols = t.val(v).shape.cols();
          if (t.needs(v)) {
            Tens<T>& gv = t.grad(v);
            for (int64_t m = 0; m < M; ++m)
              for (int64_t j = 0; j < cols; ++j) gv.at(m, j) += g.at(m, c + j);
          }
          c += cols;
        }
      });
}

template <class T>
int stack_rows(Tape<T>& t, const std::vector<int>& ids) {
  require(!ids.empty(), "stack_rows: empty input");
  const int64_t D = t.val(ids[0]).shape.dim(0);
  bool rq = false;
  for (int v : ids) {
    const Tens<T>& A = t.val(v);
    require(A.shape.rank() == 1 && A.shape.dim(0) == D,
            "stack_rows: inputs must be rank-1 of equal length");
    rq = rq || t.needs(v);
  }
  const int64_t M = static_cast<int64_t>(ids.size());
  Tens<T> out(Shape{M, D});
  for (int64_t m = 0; m < M; ++m) {
    const Tens<T>& A = t.val(ids[static_cast<size_t>(m)]);
    for (int64_t d = 0; d < D; ++d) out.at(m, d) = A.data[static_cast<size_t>(d)];
  }
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [ids, id, D](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        for (size_t m = 0; m < ids.size(); ++m) {
          if (!t.needs(ids[m])) continue;
          Tens<T>& gv = t.grad(ids[m]);
          for (int64_t d = 0; d < D; ++d)
            gv.data[static_cast<size_t>(d)] += g.at(static_cast<int64_t>(m), d);
        }
      });
}

template <class T>
int add_row_broadcast(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape.rank() == 2 && B.shape.rank() == 1 && B.shape.dim(0) == A.shape.cols(),
          "add_row_broadcast: shapes " + A.shape.str() + " + " + B.shape.str());
  const int64_t M = A.shape.rows(), N = A.shape.cols();
  Tens<T> out(Shape{M, N});
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n) out.at(m, n) = A.at(m, n) + B.data[static_cast<size_t>(n)];
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id, M, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        if (t.needs(a)) acc_into(t.grad(a), g);
        if (t.needs(b)) {
          Tens<T>& gb = t.grad(b);
          for (int64_t n = 0; n < N; ++n) {
            double s = 0.0;
            for (int64_t m = 0; m < M; ++m) s += static_cast<double>(g.at(m, n));
            gb.data[static_cast<size_t>(n)] += static_cast<T>(s);
          }
        }
      });
}

template <class T>
int embed_rows(Tape<T>& t, int table, const std::vector<int>& ids) {
  const Tens<T>& W = t.val(table);
  require(W.shape.rank() == 2, "embed_rows: table must be rank-2");
  require(!ids.empty(), "embed_rows: empty id list");
  const int64_t V = W.shape.rows(), D = W.shape.cols();
  for (int v : ids)
    require(0 <= v && v < V, "embed_rows: id " + std::to_string(v) + " out of range");
  const int64_t L = static_cast<int64_t>(ids.size());
  Tens<T> out(Shape{L, D});
  for (int64_t i = 0; i < L; ++i)
    for (int64_t d = 0; d < D; ++d) out.at(i, d) = W.at(ids[static_cast<size_t>(i)], d);
  const bool rq = t.needs(table);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [table, ids, id, D](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& gw = t.grad(table);
        for (size_t i = 0; i < ids.size(); ++i)
          for (int64_t d = 0; d < D; ++d)
            gw.at(ids[i], d) += g.at(static_cast<int64_t>(i), d);
      });
}

template <class T>
int mean_rows(Tape<T>& t, int a) {
  const Tens<T>& A = t.val(a);
  require(A.shape.rank() == 2, "mean_rows: input must be rank-2");
  const int64_t M = A.shape.rows(), N = A.shape.cols();
  Tens<T> out(Shape{N});
  std::vector<double> acc(static_cast<size_t>(N), 0.0);
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n) acc[static_cast<size_t>(n)] += static_cast<double>(A.at(m, n));
  for (int64_t n = 0; n < N; ++n)
    out.data[static_cast<size_t>(n)] = static_cast<T>(acc[static_cast<size_t>(n)] / static_cast<double>(M));
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id, M, N](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        Tens<T>& ga = t.grad(a);
        const T inv = static_cast<T>(1.0 / static_cast<double>(M));
        for (int64_t m = 0; m < M; ++m)
          for (int64_t n = 0; n < N; ++n) ga.at(m, n) += g.data[static_cast<size_t>(n)] * inv;
      });
}

template <class T>
int unit_normalize(Tape<T>& t, int a) {
  const Tens<T>& A = t.val(a);
  require(A.shape.rank() == 1, "unit_normalize: input must be rank-1");
  const size_t D = A.data.size();
  const double n2 = dot_acc(A.data.data(), A.data.data(), D);
  const double norm = std::sqrt(n2);
  if (norm < 1e-12) throw std::runtime_error("unit_normalize: norm underflow");
  Tens<T> out(A.shape);
  for (size_t i = 0; i < D; ++i)
    out.data[i] = static_cast<T>(static_cast<double>(A.data[i]) / norm);
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id, norm](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& y = t.val(id);
        Tens<T>& ga = t.grad(a);
        double s = 0.0;
        for (size_t i = 0; i < g.data.size(); ++i)
          s += static_cast<double>(g.data[i]) * static_cast<double>(y.data[i]);
        for (size_t i = 0; i < g.data.size(); ++i) {
          const double d =
              (static_cast<double>(g.data[i]) - static_cast<double>(y.data[i]) * s) / norm;
          ga.data[i] += static_cast<T>(d);
        }
      });
}

template <class T>
int layer_norm(Tape<T>& t, int a, int gain, int bias, double eps) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& G = t.val(gain);
  const Tens<T>& B = t.val(bias);
  require(A.shape.rank() == 2, "layer_norm: input must be rank-2");
  const int64_t M = A.shape.rows(), N = A.shape.cols();
  require(G.shape.rank() == 1 && G.shape.dim(0) == N && B.shape.rank() == 1 &&
              B.shape.dim(0) == N,
          "layer_norm: gain/bias must be rank-1 of width " + std::to_string(N));
  Tens<T> out(Shape{M, N});
  for (int64_t m = 0; m < M; ++m) {
    double mu = 0.0;
    for (int64_t n = 0; n < N; ++n) mu += static_cast<double>(A.at(m, n));
    mu /= static_cast<double>(N);
    double var = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const double d = static_cast<double>(A.at(m, n)) - mu;
      var += d * d;
    }
    var /= static_cast<double>(N);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t n = 0; n < N; ++n) {
      const double xh = (static_cast<double>(A.at(m, n)) - mu) * inv;
      out.at(m, n) = static_cast<T>(static_cast<double>(G.data[static_cast<size_t>(n)]) * xh +
                                    static_cast<double>(B.data[static_cast<size_t>(n)]));
    }
  }
  const bool rq = t.needs(a) || t.needs(gain) || t.needs(bias);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, gain, bias, id, M, N, eps](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& A = t.val(a);
        const Tens<T>& G = t.val(gain);
        // Row statistics are recomputed in double; they match the forward
        // pass because the forward used the same expressions.
        for (int64_t m = 0; m < M; ++m) {
          double mu = 0.0;
          for (int64_t n = 0; n < N; ++n) mu += static_cast<double>(A.at(m, n));
          mu /= static_cast<double>(N);
          double var = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const double d = static_cast<double>(A.at(m, n)) - mu;
            var += d * d;
          }
          var /= static_cast<double>(N);
          const double inv = 1.0 / std::sqrt(var + eps);
          if (t.needs(gain) || t.needs(bias)) {
            for (int64_t n = 0; n < N; ++n) {
              const double xh = (static_cast<double>(A.at(m, n)) - mu) * inv;
              const double gy = static_cast<double>(g.at(m, n));
              if (t.needs(gain))
                t.grad(gain).data[static_cast<size_t>(n)] += static_cast<T>(gy * xh);
              if (t.needs(bias))
                t.grad(bias).data[static_cast<size_t>(n)] += static_cast<T>(gy);
            }
          }
          if (t.needs(a)) {
            double dvar = 0.0, dmu = 0.0, dxsum = 0.0;
            for (int64_t n = 0; n < N; ++n) {
              const double xc = static_cast<double>(A.at(m, n)) - mu;
              const double dxh =
                  static_cast<double>(g.at(m, n)) * static_cast<double>(G.data[static_cast<size_t>(n)]);
              dvar += dxh * xc;
              dmu += dxh;
              dxsum += xc;
            }
            dvar *= -0.5 * inv * inv * inv;
            dmu = -dmu * inv + dvar * (-2.0 / static_cast<double>(N)) * dxsum;
            Tens<T>& ga = t.grad(a);
            for (int64_t n = 0; n < N; ++n) {
              const double xc = static_cast<double>(A.at(m, n)) - mu;
              const double dxh =
                  static_cast<double>(g.at(m, n)) * static_cast<double>(G.data[static_cast<size_t>(n)]);
              ga.at(m, n) += static_cast<T>(dxh * inv +
                                            dvar * 2.0 * xc / static_cast<double>(N) +
                                            dmu / static_cast<double>(N));
            }
          }
        }
      });
}

template <class T>
int gelu(Tape<T>& t, int a) {
  const Tens<T>& A = t.val(a);
  Tens<T> out(A.shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double x = static_cast<double>(A.data[i]);
    out.data[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2)));
  }
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& A = t.val(a);
        Tens<T>& ga = t.grad(a);
        constexpr double kInvSqrt2Pi = 0.3989422804014327;
        for (size_t i = 0; i < ga.data.size(); ++i) {
          const double x = static_cast<double>(A.data[i]);
          const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          ga.data[i] += static_cast<T>(static_cast<double>(g.data[i]) * (cdf + x * pdf));
        }
      });
}

template <class T>
int tanh_act(Tape<T>& t, int a) {
  const Tens<T>& A = t.val(a);
  Tens<T> out(A.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<T>(std::tanh(static_cast<double>(A.data[i])));
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& y = t.val(id);
        Tens<T>& ga = t.grad(a);
        for (size_t i = 0; i < ga.data.size(); ++i) {
          const double yv = static_cast<double>(y.data[i]);
          ga.data[i] += static_cast<T>(static_cast<double>(g.data[i]) * (1.0 - yv * yv));
        }
      });
}

template <class T>
int softmax_rows(Tape<T>& t, int a, bool causal) {
  const Tens<T>& A = t.val(a);
  require(A.shape.rank() == 2, "softmax_rows: input must be rank-2");
  const int64_t R = A.shape.rows(), C = A.shape.cols();
  if (causal) require(R == C, "softmax_rows: causal mask needs a square input");
  Tens<T> out(Shape{R, C});
  for (int64_t r = 0; r < R; ++r) {
    const int64_t limit = causal ? r + 1 : C;
    double m = static_cast<double>(A.at(r, 0));
    for (int64_t c = 1; c < limit; ++c)
      m = std::max(m, static_cast<double>(A.at(r, c)));
    double s = 0.0;
    for (int64_t c = 0; c < limit; ++c) s += std::exp(static_cast<double>(A.at(r, c)) - m);
    for (int64_t c = 0; c < limit; ++c)
      out.at(r, c) = static_cast<T>(std::exp(static_cast<double>(A.at(r, c)) - m) / s);
  }
  const bool rq = t.needs(a);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, id, R, C, causal](Tape<T>& t) {
        const Tens<T>& g = t.grad(id);
        const Tens<T>& p = t.val(id);
        Tens<T>& ga = t.grad(a);
        for (int64_t r = 0; r < R; ++r) {
          const int64_t limit = causal ? r + 1 : C;
          double sdot = 0.0;
          for (int64_t c = 0; c < limit; ++c)
            sdot += static_cast<double>(g.at(r, c)) * static_cast<double>(p.at(r, c));
          for (int64_t c = 0; c < limit; ++c)
            ga.at(r, c) += static_cast<T>(static_cast<double>(p.at(r, c)) *
                                          (static_cast<double>(g.at(r, c)) - sdot));
        }
      });
}

template <class T>
int cross_entropy_rows(Tape<T>& t, int logits, const std::vector<int>& targets,
                       const std::vector<char>& mask) {
  const Tens<T>& L = t.val(logits);
  require(L.shape.rank() == 2, "cross_entropy_rows: logits must be rank-2");
  const int64_t R = L.shape.rows(), V = L.shape.cols();
  require(static_cast<int64_t>(targets.size()) == R &&
              static_cast<int64_t>(mask.size()) == R,
          "cross_entropy_rows: targets/mask length must equal row count");
  int64_t count = 0;
  for (int64_t r = 0; r < R; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    require(0 <= targets[static_cast<size_t>(r)] && targets[static_cast<size_t>(r)] < V,
            "cross_entropy_rows: target out of range at row " + std::to_string(r));
    ++count;
  }
  if (count == 0) throw std::runtime_error("cross_entropy_rows: empty loss support");
  double total = 0.0;
  for (int64_t r = 0; r < R; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    double m = static_cast<double>(L.at(r, 0));
    for (int64_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(L.at(r, v)));
    double s = 0.0;
    for (int64_t v = 0; v < V; ++v) s += std::exp(static_cast<double>(L.at(r, v)) - m);
    const double lse = m + std::log(s);
    total += lse - static_cast<double>(L.at(r, targets[static_cast<size_t>(r)]));
  }
  Tens<T> out(Shape{});
  out.data[0] = static_cast<T>(total / static_cast<double>(count));
  const bool rq = t.needs(logits);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [logits, targets, mask, id, R, V, count](Tape<T>& t) {
        const double gy = static_cast<double>(t.grad(id).data[0]);
        const Tens<T>& L = t.val(logits);
        Tens<T>& gl = t.grad(logits);
        const double w = gy / static_cast<double>(count);
        for (int64_t r = 0; r < R; ++r) {
          if (!mask[static_cast<size_t>(r)]) continue;
          double m = static_cast<double>(L.at(r, 0));
          for (int64_t v = 1; v < V; ++v) m = std::max(m, static_cast<double>(L.at(r, v)));
          double s = 0.0;
          for (int64_t v = 0; v < V; ++v) s += std::exp(static_cast<double>(L.at(r, v)) - m);
          for (int64_t v = 0; v < V; ++v) {
            const double p = std::exp(static_cast<double>(L.at(r, v)) - m) / s;
            const double onehot = (v == targets[static_cast<size_t>(r)]) ? 1.0 : 0.0;
            gl.at(r, v) += static_cast<T>((p - onehot) * w);
          }
        }
      });
}

template <class T>
int mean_squared_error(Tape<T>& t, int a, int b) {
  const Tens<T>& A = t.val(a);
  const Tens<T>& B = t.val(b);
  require(A.shape == B.shape,
          "mean_squared_error: shape mismatch " + A.shape.str() + " vs " + B.shape.str());
  const size_t N = A.data.size();
  double total = 0.0;
  for (size_t i = 0; i < N; ++i) {
    const double d = static_cast<double>(A.data[i]) - static_cast<double>(B.data[i]);
    total += d * d;
  }
  Tens<T> out(Shape{});
  out.data[0] = static_cast<T>(total / static_cast<double>(N));
  const bool rq = t.needs(a) || t.needs(b);
  const int id = static_cast<int>(t.size());
  return t.push(std::move(out), rq, !rq ? typename Tape<T>::BackFn(nullptr)
    : [a, b, id, N](Tape<T>& t) {
        const double gy = static_cast<double>(t.grad(id).data[0]);
        const Tens<T>& A = t.val(a);
        const Tens<T>& B = t.val(b);
        const double c = 2.0 * gy / static_cast<double>(N);
        for (size_t i = 0; i < N; ++i) {
          const double d = static_cast<double>(A.data[i]) - static_cast<double>(B.data[i]);
          if (t.needs(a)) t.grad(a).data[i] += static_cast<T>(c * d);
          if (t.needs(b)) t.grad(b).data[i] -= static_cast<T>(c * d);
        }
      });
}

// ---- Instantiations ------------------------------------------------------

template class Tape<float>;
template class Tape<double>;

#define MB_INSTANTIATE_OPS(T)                                                        \
  template int add<T>(Tape<T>&, int, int);                                           \
  template int sub<T>(Tape<T>&, int, int);                                           \
  template int hadamard<T>(Tape<T>&, int, int);                                      \
  template int scale<T>(Tape<T>&, int, double);                                      \
  template int scale_by<T>(Tape<T>&, int, int);                                      \
  template int exp_scalar<T>(Tape<T>&, int);                                         \
  template int sum_scalars<T>(Tape<T>&, const std::vector<int>&);                    \
  template int matmul<T>(Tape<T>&, int, int);                                        \
  template int matmul_nt<T>(Tape<T>&, int, int);                                     \
  template int transpose<T>(Tape<T>&, int);                                          \
  template int reshape<T>(Tape<T>&, int, Shape);                                     \
  template int slice_rows<T>(Tape<T>&, int, int64_t, int64_t);                       \
  template int slice_cols<T>(Tape<T>&, int, int64_t, int64_t);                       \
  template int concat_rows<T>(Tape<T>&, const std::vector<int>&);                    \
  template int concat_cols<T>(Tape<T>&, const std::vector<int>&);                    \
  template int stack_rows<T>(Tape<T>&, const std::vector<int>&);                     \
  template int add_row_broadcast<T>(Tape<T>&, int, int);                             \
  template int embed_rows<T>(Tape<T>&, int, const std::vector<int>&);                \
  template int mean_rows<T>(Tape<T>&, int);                                          \
  template int unit_normalize<T>(Tape<T>&, int);                                     \
  template int layer_norm<T>(Tape<T>&, int, int, int, double);                       \
  template int gelu<T>(Tape<T>&, int);                                               \
  template int tanh_act<T>(Tape<T>&, int);                                           \
  template int softmax_rows<T>(Tape<T>&, int, bool);                                 \
  template int cross_entropy_rows<T>(Tape<T>&, int, const std::vector<int>&,         \
                                     const std::vector<char>&);                      \
  template int mean_squared_error<T>(Tape<T>&, int, int);

MB_INSTANTIATE_OPS(float)
MB_INSTANTIATE_OPS(double)

#undef MB_INSTANTIATE_OPS

}  // namespace mb
