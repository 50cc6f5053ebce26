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

#pragma once

#include <functional>
#include <map>
#include <vector>

#include "mb/param.hpp"
#include "mb/tensor.hpp"

namespace mb {

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// valid topological order, so backward() is a single reverse sweep.
//
// The float instantiation is the training path. The double instantiation
// exists for finite-difference oracles: it replays the same graph in f64,
// optionally substituting perturbed parameter values via set_override(),
// and is never differentiated itself.
template <class T>
class Tape {
 public:
  using BackFn = std::function<void(Tape<T>&)>;

  int push(Tens<T> val, bool requires_grad, BackFn back);
  int constant(Tens<T> v) { return push(std::move(v), false, nullptr); }

  // Adopts a float tensor regardless of T.
  int constant32(const Tensor& v);

  // Registers a parameter leaf. Reads p.value (or the override for p, if
  // set) and remembers the pairing so apply_param_grads() can route the
  // leaf gradient back into p.grad.
  int trainable(Parameter& p);

  const Tens<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
  Tens<T>& grad(int id);
  bool needs(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  size_t size() const { return nodes_.size(); }

  // loss must be rank-0. Allocates zero gradients for every grad-requiring
  // node, seeds d(loss)/d(loss) = 1, sweeps in reverse.
  void backward(int loss);

  // Accumulates leaf gradients into Parameter::grad (cast to float).
  void apply_param_grads();

  void set_override(const Parameter* p, Tens<T> v) { overrides_[p] = std::move(v); }

 private:
  struct Node {
    Tens<T> val;
    Tens<T> grad;
    bool requires_grad = false;
    bool grad_live = false;
    BackFn back;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter*>> params_;
  std::map<const Parameter*, Tens<T>> overrides_;
  bool ran_backward_ = false;
};

// ---- Graph ops -----------------------------------------------------------
//
// Each returns the id of a new node. Gradient propagation stops at nodes
// whose requires_grad is false, so frozen weights cost nothing extra in the
// reverse sweep.

template <class T> int add(Tape<T>& t, int a, int b);
template <class T> int sub(Tape<T>& t, int a, int b);
template <class T> int hadamard(Tape<T>& t, int a, int b);
template <class T> int scale(Tape<T>& t, int a, double c);
// y = s * a with s a rank-0 node (trainable temperature path).
template <class T> int scale_by(Tape<T>& t, int a, int s);
template <class T> int exp_scalar(Tape<T>& t, int s);
template <class T> int sum_scalars(Tape<T>& t, const std::vector<int>& ids);

// C = A[M,K] * B[K,N].
template <class T> int matmul(Tape<T>& t, int a, int b);
// C = A[M,K] * B[N,K]^T; rows of B are used as columns without copying.
template <class T> int matmul_nt(Tape<T>& t, int a, int b);
template <class T> int transpose(Tape<T>& t, int a);
template <class T> int reshape(Tape<T>& t, int a, Shape s);
template <class T> int slice_rows(Tape<T>& t, int a, int64_t r0, int64_t r1);
template <class T> int slice_cols(Tape<T>& t, int a, int64_t c0, int64_t c1);
template <class T> int concat_rows(Tape<T>& t, const std::vector<int>& ids);
template <class T> int concat_cols(Tape<T>& t, const std::vector<int>& ids);
// Stacks rank-1 nodes of equal length into an [N,D] matrix.
template <class T> int stack_rows(Tape<T>& t, const std::vector<int>& ids);
// Y[m,:] = A[m,:] + b with b rank-1.
template <class T> int add_row_broadcast(Tape<T>& t, int a, int b);
// Gathers rows of an embedding table; backward scatter-adds.
template <class T> int embed_rows(Tape<T>& t, int table, const std::vector<int>& ids);
template <class T> int mean_rows(Tape<T>& t, int a);

// y = x / ||x||. Rank-1 only; throws if the norm underflows.
template <class T> int unit_normalize(Tape<T>& t, int a);
// Row-wise layer norm with learned gain/bias, eps inside the sqrt.
template <class T> int layer_norm(Tape<T>& t, int a, int gain, int bias, double eps);
// Exact erf-based gelu.
template <class T> int gelu(Tape<T>& t, int a);
template <class T> int tanh_act(Tape<T>& t, int a);
// Row softmax over [T,C]; causal restricts row t to columns 0..t and
// requires a square input.
template <class T> int softmax_rows(Tape<T>& t, int a, bool causal);
// Mean NLL over rows where mask is nonzero. Throws "empty loss support"
// when no row is selected; log-sum-exp runs in double with max shift.
template <class T> int cross_entropy_rows(Tape<T>& t, int logits,
                                          const std::vector<int>& targets,
                                          const std::vector<char>& mask);
template <class T> int mean_squared_error(Tape<T>& t, int a, int b);

}  // namespace mb
