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

#include "mb/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mb/corpus.hpp"
#include "mb/ops.hpp"

namespace mb {

namespace {

Tensor normal_init(RngState& rng, Shape shape, double stddev) {
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

Tensor ones(Shape shape) {
  Tensor t(shape);
  std::fill(t.data.begin(), t.data.end(), 1.0f);
  return t;
}

constexpr double kLnEps = 1e-5;

}  // namespace

TransformerBlock::TransformerBlock(const std::string& name_prefix, int d_m, int ff_dim,
                                   RngState& rng)
    : ln1_g(name_prefix + ".ln1_g", ones(Shape{d_m})),
      ln1_b(name_prefix + ".ln1_b", Tensor(Shape{d_m})),
      wq(name_prefix + ".wq", normal_init(rng, Shape{d_m, d_m}, 0.02)),
      bq(name_prefix + ".bq", Tensor(Shape{d_m})),
      wk(name_prefix + ".wk", normal_init(rng, Shape{d_m, d_m}, 0.02)),
      bk(name_prefix + ".bk", Tensor(Shape{d_m})),
      wv(name_prefix + ".wv", normal_init(rng, Shape{d_m, d_m}, 0.02)),
      bv(name_prefix + ".bv", Tensor(Shape{d_m})),
      wo(name_prefix + ".wo", normal_init(rng, Shape{d_m, d_m}, 0.02)),
      bo(name_prefix + ".bo", Tensor(Shape{d_m})),
      ln2_g(name_prefix + ".ln2_g", ones(Shape{d_m})),
      ln2_b(name_prefix + ".ln2_b", Tensor(Shape{d_m})),
      ff_w1(name_prefix + ".ff_w1", normal_init(rng, Shape{d_m, ff_dim}, 0.02)),
      ff_b1(name_prefix + ".ff_b1", Tensor(Shape{ff_dim})),
      ff_w2(name_prefix + ".ff_w2", normal_init(rng, Shape{ff_dim, d_m}, 0.02)),
      ff_b2(name_prefix + ".ff_b2", Tensor(Shape{d_m})) {}

void TransformerBlock::collect(ParamRefs& out) {
  for (Parameter* p : {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln2_g, &ln2_b,
                       &ff_w1, &ff_b1, &ff_w2, &ff_b2})
    out.push_back(p);
}

template <class T>
int transformer_block_node(Tape<T>& tape, TransformerBlock& block, int x, int heads,
                           bool causal, bool trainable) {
  const int64_t d_m = tape.val(x).shape.cols();
  if (heads <= 0 || d_m % heads != 0)
    throw std::invalid_argument("transformer_block: heads must divide the model dimension");
  const int64_t dh = d_m / heads;
  auto w = [&](Parameter& p) { return trainable ? tape.trainable(p) : tape.constant32(p.value); };

  const int normed = layer_norm(tape, x, w(block.ln1_g), w(block.ln1_b), kLnEps);
  const int q = add_row_broadcast(tape, matmul(tape, normed, w(block.wq)), w(block.bq));
  const int k = add_row_broadcast(tape, matmul(tape, normed, w(block.wk)), w(block.bk));
  const int v = add_row_broadcast(tape, matmul(tape, normed, w(block.wv)), w(block.bv));
  std::vector<int> head_ctx;
  head_ctx.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int64_t c0 = h * dh, c1 = (h + 1) * dh;
    const int qh = slice_cols(tape, q, c0, c1);
    const int kh = slice_cols(tape, k, c0, c1);
    const int vh = slice_cols(tape, v, c0, c1);
    const int scores = scale(tape, matmul_nt(tape, qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    const int att = softmax_rows(tape, scores, causal);
    head_ctx.push_back(matmul(tape, att, vh));
  }
  const int ctx = concat_cols(tape, head_ctx);
  const int attn_out = add_row_broadcast(tape, matmul(tape, ctx, w(block.wo)), w(block.bo));
  const int mid = add(tape, x, attn_out);

  const int normed2 = layer_norm(tape, mid, w(block.ln2_g), w(block.ln2_b), kLnEps);
  const int hidden =
      gelu(tape, add_row_broadcast(tape, matmul(tape, normed2, w(block.ff_w1)), w(block.ff_b1)));
  const int ff_out =
      add_row_broadcast(tape, matmul(tape, hidden, w(block.ff_w2)), w(block.ff_b2));
  return add(tape, mid, ff_out);
}

template int transformer_block_node<float>(Tape<float>&, TransformerBlock&, int, int, bool, bool);
template int transformer_block_node<double>(Tape<double>&, TransformerBlock&, int, int, bool, bool);

namespace {

void check_decoder_config(const DecoderConfig& c) {
  if (c.vocab_size <= 0) throw std::invalid_argument("DecoderConfig: vocab_size must be positive");
  if (c.model_dim <= 0 || c.n_layers <= 0 || c.n_heads <= 0 || c.max_positions <= 0 ||
      c.ff_mult <= 0)
    throw std::invalid_argument("DecoderConfig: dimensions must be positive");
  if (c.model_dim % c.n_heads != 0)
    throw std::invalid_argument("DecoderConfig: n_heads must divide model_dim");
}

std::vector<TransformerBlock> make_blocks(const std::string& name_prefix, int n_layers, int d_m,
                                          int ff_dim, RngState& rng) {
  std::vector<TransformerBlock> blocks;
  blocks.reserve(static_cast<size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l)
    blocks.emplace_back(name_prefix + ".block" + std::to_string(l), d_m, ff_dim, rng);
  return blocks;
}

}  // namespace

DecoderLM::DecoderLM(const DecoderConfig& config, uint64_t init_seed)
    : cfg((check_decoder_config(config), config)),
      token_table("decoder.token_table", Tensor(Shape{config.vocab_size, config.model_dim})),
      pos_table("decoder.pos_table", Tensor(Shape{config.max_positions, config.model_dim})),
      ln_f_g("decoder.ln_f_g", ones(Shape{config.model_dim})),
      ln_f_b("decoder.ln_f_b", Tensor(Shape{config.model_dim})),
      out_proj("decoder.out_proj", Tensor(Shape{config.model_dim, config.vocab_size})) {
  RngState rng(init_seed);
  token_table.value = normal_init(rng, token_table.value.shape, 0.02);
  pos_table.value = normal_init(rng, pos_table.value.shape, 0.02);
  blocks = make_blocks("decoder", cfg.n_layers, cfg.model_dim, cfg.model_dim * cfg.ff_mult, rng);
  out_proj.value = normal_init(rng, out_proj.value.shape, 0.02);
}

ParamRefs DecoderLM::parameters() {
  ParamRefs out{&token_table, &pos_table};
  for (auto& b : blocks) b.collect(out);
  out.push_back(&ln_f_g);
  out.push_back(&ln_f_b);
  out.push_back(&out_proj);
  return out;
}

template <class T>
int decoder_logits_node(Tape<T>& tape, DecoderLM& dec, int x_embed, bool trainable) {
  const int64_t rows = tape.val(x_embed).shape.rows();
  if (rows > dec.cfg.max_positions)
    throw std::invalid_argument("decoder: sequence of " + std::to_string(rows) +
                                " exceeds max positions " +
                                std::to_string(dec.cfg.max_positions));
  auto w = [&](Parameter& p) { return trainable ? tape.trainable(p) : tape.constant32(p.value); };
  const int pos = slice_rows(tape, w(dec.pos_table), 0, rows);
  int x = add(tape, x_embed, pos);
  for (auto& block : dec.blocks)
    x = transformer_block_node(tape, block, x, dec.cfg.n_heads, /*causal=*/true, trainable);
  x = layer_norm(tape, x, w(dec.ln_f_g), w(dec.ln_f_b), kLnEps);
  return matmul(tape, x, w(dec.out_proj));
}

template int decoder_logits_node<float>(Tape<float>&, DecoderLM&, int, bool);
template int decoder_logits_node<double>(Tape<double>&, DecoderLM&, int, bool);

namespace {

void check_caption_tokens(const DecoderLM& dec, const std::vector<int>& caption) {
  if (caption.empty()) throw std::invalid_argument("decoder: empty caption in pool");
  if (static_cast<int>(caption.size()) + 1 > dec.cfg.max_positions)
    throw std::invalid_argument("decoder: caption of " + std::to_string(caption.size()) +
                                " tokens exceeds max positions");
  for (int id : caption)
    if (id < 0 || id >= dec.cfg.vocab_size)
      throw std::invalid_argument("decoder: token id " + std::to_string(id) +
                                  " outside vocabulary of size " +
                                  std::to_string(dec.cfg.vocab_size));
}

// Next-token loss for one caption: input BOS + w, targets w + EOS.
template <class T>
int caption_lm_loss_node(Tape<T>& tape, DecoderLM& dec, const std::vector<int>& caption,
                         bool trainable) {
  std::vector<int> input{Vocab::kBos};
  input.insert(input.end(), caption.begin(), caption.end());
  std::vector<int> targets(caption);
  targets.push_back(Vocab::kEos);
  const int table =
      trainable ? tape.trainable(dec.token_table) : tape.constant32(dec.token_table.value);
  const int x = embed_rows(tape, table, input);
  const int logits = decoder_logits_node(tape, dec, x, trainable);
  const std::vector<char> mask(targets.size(), 1);
  return cross_entropy_rows(tape, logits, targets, mask);
}

}  // namespace

std::vector<DecoderEpochLog> pretrain_decoder(DecoderLM& dec,
                                              const std::vector<std::vector<int>>& captions,
                                              const DecoderPretrainConfig& config) {
  if (captions.empty()) throw std::invalid_argument("pretrain_decoder: empty caption pool");
  if (config.epochs < 0) throw std::invalid_argument("pretrain_decoder: negative epochs");
  if (config.batch_size < 1)
    throw std::invalid_argument("pretrain_decoder: batch_size must be positive");
  for (const auto& c : captions) check_caption_tokens(dec, c);
  const ParamRefs params = dec.parameters();
  std::vector<DecoderEpochLog> log;
  if (config.epochs == 0) return log;

  const int64_t steps_per_epoch =
      std::max<int64_t>(1, (static_cast<int64_t>(captions.size()) + config.batch_size - 1) /
                               config.batch_size);
  const int64_t total_steps = steps_per_epoch * config.epochs;
  const int64_t warmup = std::min(config.warmup_steps, total_steps - 1);
  RngState shuffle_rng = RngState(config.seed).fork(0xD3);

  int64_t step = 0;
  std::vector<size_t> order(captions.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t batches = 0;
    double last_lr = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      Tape<float> tape;
      std::vector<int> losses;
      losses.reserve(stop - start);
      for (size_t i = start; i < stop; ++i)
        losses.push_back(caption_lm_loss_node(tape, dec, captions[order[i]], true));
      const int loss =
          scale(tape, sum_scalars(tape, losses), 1.0 / static_cast<double>(losses.size()));
      zero_grad(params);
      tape.backward(loss);
      tape.apply_param_grads();
      const double lr = lr_at(step, config.lr, warmup, total_steps);
      adam_step(params, lr);
      ++step;
      epoch_loss += static_cast<double>(tape.val(loss).scalar());
      ++batches;
      last_lr = lr;
    }
    log.push_back({epoch, epoch_loss / static_cast<double>(batches), last_lr});
  }
  return log;
}

double decoder_perplexity(DecoderLM& dec, const std::vector<std::vector<int>>& captions) {
  if (captions.empty()) throw std::invalid_argument("decoder_perplexity: empty caption pool");
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  for (const auto& caption : captions) {
    check_caption_tokens(dec, caption);
    Tape<float> tape;
    const int loss = caption_lm_loss_node(tape, dec, caption, false);
    const int64_t n = static_cast<int64_t>(caption.size()) + 1;
    total_nll += static_cast<double>(tape.val(loss).scalar()) * static_cast<double>(n);
    total_tokens += n;
  }
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

// ---- Incremental inference ----------------------------------------------

namespace {

void layer_norm_inplace(std::vector<double>& out, const std::vector<double>& x, const Tensor& g,
                        const Tensor& b) {
  const size_t n = x.size();
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + kLnEps);
  out.resize(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = (x[i] - mu) * inv * static_cast<double>(g.data[i]) + static_cast<double>(b.data[i]);
}

// y = x W + b with W row-major [in, out]; accumulates row-sequentially.
void affine(std::vector<double>& y, const std::vector<double>& x, const Tensor& w,
            const Tensor& b) {
  const size_t in = x.size();
  const size_t out = static_cast<size_t>(w.shape.cols());
  y.assign(out, 0.0);
  for (size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const float* row = w.data.data() + i * out;
    for (size_t j = 0; j < out; ++j) y[j] += xi * static_cast<double>(row[j]);
  }
  if (b.data.size() == out)
    for (size_t j = 0; j < out; ++j) y[j] += static_cast<double>(b.data[j]);
}

double gelu_exact(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

DecoderInfer::DecoderInfer(const DecoderLM& dec) : dec_(&dec) {
  kcache_.resize(static_cast<size_t>(dec.cfg.n_layers));
  vcache_.resize(static_cast<size_t>(dec.cfg.n_layers));
}

std::vector<double> DecoderInfer::step_embedding(const float* row) {
  const size_t d = static_cast<size_t>(dec_->cfg.model_dim);
  std::vector<double> x(d);
  for (size_t i = 0; i < d; ++i) x[i] = static_cast<double>(row[i]);
  return step(std::move(x));
}

std::vector<double> DecoderInfer::step_token(int token_id) {
  if (token_id < 0 || token_id >= dec_->cfg.vocab_size)
    throw std::invalid_argument("DecoderInfer: token id out of range");
  return step_embedding(dec_->token_table.value.row_ptr(token_id));
}

std::vector<double> DecoderInfer::step(std::vector<double> x) {
  const DecoderLM& dec = *dec_;
  const size_t d = static_cast<size_t>(dec.cfg.model_dim);
  if (pos_ >= dec.cfg.max_positions)
    throw std::runtime_error("DecoderInfer: position table exhausted");
  const float* pos_row = dec.pos_table.value.row_ptr(pos_);
  for (size_t i = 0; i < d; ++i) x[i] += static_cast<double>(pos_row[i]);

  const int heads = dec.cfg.n_heads;
  const size_t dh = d / static_cast<size_t>(heads);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> normed, q, k, v, ctx(d), attn_out, hidden, ff_out, scores;

  for (size_t l = 0; l < dec.blocks.size(); ++l) {
    const TransformerBlock& blk = dec.blocks[l];
    layer_norm_inplace(normed, x, blk.ln1_g.value, blk.ln1_b.value);
    affine(q, normed, blk.wq.value, blk.bq.value);
    affine(k, normed, blk.wk.value, blk.bk.value);
    affine(v, normed, blk.wv.value, blk.bv.value);
    kcache_[l].insert(kcache_[l].end(), k.begin(), k.end());
    vcache_[l].insert(vcache_[l].end(), v.begin(), v.end());
    const size_t t_count = static_cast<size_t>(pos_) + 1;

    for (int h = 0; h < heads; ++h) {
      const size_t off = static_cast<size_t>(h) * dh;
      scores.assign(t_count, 0.0);
      double smax = -1e300;
      for (size_t t = 0; t < t_count; ++t) {
        const double* krow = kcache_[l].data() + t * d + off;
        double s = 0.0;
        for (size_t i = 0; i < dh; ++i) s += q[off + i] * krow[i];
        s *= inv_sqrt_dh;
        scores[t] = s;
        smax = std::max(smax, s);
      }
      double z = 0.0;
      for (size_t t = 0; t < t_count; ++t) {
        scores[t] = std::exp(scores[t] - smax);
        z += scores[t];
      }
      for (size_t i = 0; i < dh; ++i) ctx[off + i] = 0.0;
      for (size_t t = 0; t < t_count; ++t) {
        const double a = scores[t] / z;
        const double* vrow = vcache_[l].data() + t * d + off;
        for (size_t i = 0; i < dh; ++i) ctx[off + i] += a * vrow[i];
      }
    }
    affine(attn_out, ctx, blk.wo.value, blk.bo.value);
    for (size_t i = 0; i < d; ++i) x[i] += attn_out[i];

    layer_norm_inplace(normed, x, blk.ln2_g.value, blk.ln2_b.value);
    affine(hidden, normed, blk.ff_w1.value, blk.ff_b1.value);
    for (auto& h2 : hidden) h2 = gelu_exact(h2);
    affine(ff_out, hidden, blk.ff_w2.value, blk.ff_b2.value);
    for (size_t i = 0; i < d; ++i) x[i] += ff_out[i];
  }

  layer_norm_inplace(normed, x, dec.ln_f_g.value, dec.ln_f_b.value);
  std::vector<double> logits;
  affine(logits, normed, dec.out_proj.value, Tensor(Shape{}));  // rank-0: no bias
  double lmax = -1e300;
  for (double lv : logits) lmax = std::max(lmax, lv);
  double z = 0.0;
  for (double lv : logits) z += std::exp(lv - lmax);
  const double lse = lmax + std::log(z);
  for (auto& lv : logits) lv -= lse;
  ++pos_;
  return logits;
}

}  // namespace mb
