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

#include "mb/captioner.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "mb/ops.hpp"

namespace mb {

CaptionMode caption_mode_from_name(const std::string& name) {
  if (name == "text-only") return CaptionMode::kTextOnly;
  if (name == "audio-text") return CaptionMode::kAudioText;
  throw std::invalid_argument("unknown caption mode '" + name +
                              "' (expected text-only or audio-text)");
}

std::string caption_mode_name(CaptionMode mode) {
  return mode == CaptionMode::kTextOnly ? "text-only" : "audio-text";
}

std::vector<CaptionExample> examples_from_records(const std::vector<CaptionRecord>& records,
                                                  const Vocab& vocab, CaptionMode mode) {
  std::vector<CaptionExample> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    CaptionExample ex;
    ex.id = rec.id;
    ex.target_tokens = vocab.encode(rec.caption);
    ex.input_tokens = ex.target_tokens;
    if (mode == CaptionMode::kAudioText) {
      if (!rec.has_features)
        throw std::invalid_argument("audio-text mode requires audio features, record " + rec.id +
                                    " has none");
      ex.features = Tensor(Shape{static_cast<int64_t>(rec.features.size())});
      std::copy(rec.features.begin(), rec.features.end(), ex.features.data.begin());
      ex.has_features = true;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

template <class T>
int caption_loss_node(Tape<T>& tape, DecoderLM& dec, int prefix_node,
                      const std::vector<int>& caption) {
  if (caption.empty()) throw std::invalid_argument("caption_loss: empty caption");
  const auto& pshape = tape.val(prefix_node).shape;
  if (pshape.rank() != 2 || pshape.cols() != static_cast<int64_t>(dec.cfg.model_dim))
    throw std::invalid_argument("caption_loss: prefix must be [k, model_dim]");
  const int64_t k = pshape.rows();
  const int64_t m = static_cast<int64_t>(caption.size());
  if (k + m + 1 > dec.cfg.max_positions)
    throw std::invalid_argument("caption_loss: prefix plus caption of " + std::to_string(m) +
                                " tokens exceeds max positions " +
                                std::to_string(dec.cfg.max_positions));
  for (int id : caption)
    if (id < 0 || id >= dec.cfg.vocab_size)
      throw std::invalid_argument("caption_loss: token id " + std::to_string(id) +
                                  " outside vocabulary");

  const int table = tape.constant32(dec.token_table.value);
  const int cap_embed = embed_rows(tape, table, caption);
  const int x = concat_rows(tape, {prefix_node, cap_embed});
  const int logits = decoder_logits_node(tape, dec, x, /*trainable=*/false);

  // Loss support: the last prefix row predicts the first word; the last
  // word row predicts the terminator. Prefix rows before k-1 carry none.
  const int64_t rows = k + m;
  std::vector<int> targets(static_cast<size_t>(rows), 0);
  std::vector<char> mask(static_cast<size_t>(rows), 0);
  for (int64_t j = 0; j <= m; ++j) {
    const size_t row = static_cast<size_t>(k - 1 + j);
    targets[row] = j < m ? caption[static_cast<size_t>(j)] : Vocab::kEos;
    mask[row] = 1;
  }
  return cross_entropy_rows(tape, logits, targets, mask);
}

template int caption_loss_node<float>(Tape<float>&, DecoderLM&, int, const std::vector<int>&);
template int caption_loss_node<double>(Tape<double>&, DecoderLM&, int, const std::vector<int>&);

double caption_loss(DecoderLM& dec, const Tensor& prefix, const std::vector<int>& caption) {
  Tape<float> tape;
  const int node = caption_loss_node(tape, dec, tape.constant32(prefix), caption);
  return static_cast<double>(tape.val(node).scalar());
}

std::vector<CaptionerEpochLog> train_captioner(CaptionMode mode, MappingNetwork& mapper,
                                               DecoderLM& dec, DualEncoder& enc,
                                               const LinearAdapter* adapter,
                                               const NoiseConfig* noise,
                                               const std::vector<CaptionExample>& examples,
                                               const CaptionerTrainConfig& config) {
  if (examples.empty()) throw std::invalid_argument("train_captioner: no examples");
  if (config.epochs < 0) throw std::invalid_argument("train_captioner: negative epochs");
  if (config.batch_size < 1)
    throw std::invalid_argument("train_captioner: batch_size must be positive");
  if (mode == CaptionMode::kAudioText)
    for (const auto& ex : examples)
      if (!ex.has_features)
        throw std::invalid_argument("train_captioner: audio-text mode but example " + ex.id +
                                    " has no features");

  // Encoder and adapter are frozen, so the pre-noise embedding of every
  // example is fixed for the whole run.
  std::vector<Embedding> base;
  base.reserve(examples.size());
  for (const auto& ex : examples) {
    Embedding v = mode == CaptionMode::kTextOnly ? encode_text(enc, ex.input_tokens)
                                                 : encode_audio(enc, ex.features);
    if (mode == CaptionMode::kTextOnly && adapter) v = apply_adapter(*adapter, v);
    base.push_back(std::move(v));
  }

  const ParamRefs params = mapper.parameters();
  std::vector<CaptionerEpochLog> log;
  if (config.epochs == 0) return log;

  const int64_t steps_per_epoch =
      std::max<int64_t>(1, (static_cast<int64_t>(examples.size()) + config.batch_size - 1) /
                               config.batch_size);
  const int64_t total_steps = steps_per_epoch * config.epochs;
  const int64_t warmup = std::min(config.warmup_steps, total_steps - 1);
  RngState shuffle_rng = RngState(config.seed).fork(0xC4);
  RngState noise_rng = RngState(config.seed).fork(0xBD);

  int64_t step = 0;
  std::vector<size_t> order(examples.size());
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
      for (size_t i = start; i < stop; ++i) {
        const size_t idx = order[i];
        Embedding v = base[idx];
        if (mode == CaptionMode::kTextOnly && noise) v = inject_noise(v, *noise, noise_rng);
        const int prefix = mapper_prefix_node(tape, mapper, tape.constant32(v), true);
        losses.push_back(caption_loss_node(tape, dec, prefix, examples[idx].target_tokens));
      }
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

InferResult infer_from_prefix(DecoderLM& dec, const Tensor& prefix, const Vocab& vocab,
                              int beam, int max_len) {
  BeamConfig cfg;
  cfg.beam = beam;
  cfg.eos_id = Vocab::kEos;
  cfg.banned = {Vocab::kPad, Vocab::kBos};
  cfg.max_len = std::min<int>(max_len,
                              dec.cfg.max_positions - static_cast<int>(prefix.shape.rows()));
  const auto hyps = beam_search(dec, prefix, cfg);
  InferResult out;
  out.tokens = hyps[0].tokens;
  out.logprob = hyps[0].logprob;
  out.caption = vocab.decode(out.tokens);
  return out;
}

InferResult infer_caption(MappingNetwork& mapper, DecoderLM& dec, DualEncoder& enc,
                          const Tensor& audio_features, const Vocab& vocab, int beam,
                          int max_len) {
  const Embedding v = encode_audio(enc, audio_features);
  const Tensor prefix = build_prefix(mapper, v);
  return infer_from_prefix(dec, prefix, vocab, beam, max_len);
}

}  // namespace mb
