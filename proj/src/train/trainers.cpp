// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/train/trainers.hpp"

#include "moelora/core/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moelora {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(static_cast<Index>(i)))]);
  return order;
}

/// Endless reshuffled pass over [0, n).
class Cursor {
 public:
  Cursor(std::size_t n, Rng rng) : n_(n), rng_(std::move(rng)) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      order_ = shuffled(n_, rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

template <typename Fn>
auto guarded(Index step, const char* what, Fn fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw DivergenceError(std::string(what) + " diverged at step " + std::to_string(step) + ": " + e.what());
  }
}

}  // namespace

// Tokenizer ---------------------------------------------------------------

std::vector<Mat<double>> motion_clips(const std::vector<InstructionSample>& samples, const SkeletonSpec& skeleton) {
  std::vector<Mat<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(regenerate_motion(s, skeleton).frames);
  return out;
}

std::vector<Mat<double>> pose_clips(const std::vector<InstructionSample>& samples, const SkeletonSpec& skeleton) {
  std::vector<Mat<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const Pose p = regenerate_pose(s, skeleton);
    out.push_back(p.values.reshaped<Eigen::RowMajor>(1, p.values.size()));
  }
  return out;
}

TokenizerRun train_tokenizer(const SkeletonSpec& skeleton, const TokenizerTrainConfig& config,
                             const std::vector<Mat<double>>& train, const std::vector<Mat<double>>& test,
                             std::uint64_t seed, const std::function<void(const TokenizerLogEntry&)>& on_log) {
  if (train.empty()) throw std::invalid_argument("train_tokenizer: empty training set");
  const Index ratio = config.model.compression();
  if (config.window % ratio != 0) throw std::invalid_argument("train_tokenizer: window is not a multiple of l");
  for (const auto& clip : train) {
    if (clip.rows() < config.window) throw std::invalid_argument("train_tokenizer: clip shorter than the window");
  }
  const Rng root = Rng(seed).derive("tokenizer");
  TokenizerRun run;
  run.tokenizer = PartTokenizer<float>(skeleton, config.model, root.derive("init").seed());
  PartTokenizer<float>& tok = run.tokenizer;
  OptimizerState<float> hyper;
  hyper.beta1 = 0.9;
  hyper.beta2 = 0.99;
  hyper.base_lr = config.lr;
  AdamW<float> opt(tok.parameters(), hyper);
  Rng batches = root.derive("batches");
  Rng resets = root.derive("resets");
  const Index rows_per_window = config.window * skeleton.joints;
  Mat<float> x(config.batch * rows_per_window, skeleton.channels);
  for (Index step = 0; step < config.steps; ++step) {
    for (Index b = 0; b < config.batch; ++b) {
      const Mat<double>& clip = train[static_cast<std::size_t>(batches.below(static_cast<Index>(train.size())))];
      const Index start = batches.below(clip.rows() - config.window + 1);
      x.middleRows(b * rows_per_window, rows_per_window) = tok.normalize(clip.middleRows(start, config.window));
    }
    TokenizerLogEntry entry;
    entry.step = step;
    guarded(step, "tokenizer training", [&] {
      auto s = tok.forward_train(x, config.batch, config.window);
      s.loss.total.backward();
      opt.step();
      opt.zero_grad();
      tok.end_batch(s.quantized);
      entry.rec = s.loss.rec.item();
      entry.emb = s.loss.emb.item();
      entry.com = s.loss.com.item();
      entry.total = s.loss.total.item();
      return 0;
    });
    if (config.reset_every > 0 && (step + 1) % config.reset_every == 0) entry.resets = tok.codebook_health(resets).resets;
    run.log.push_back(entry);
    if (on_log) on_log(entry);
  }
  run.heldout_mse = test.empty() ? 0.0 : reconstruction_mse(tok, test);
  return run;
}

double reconstruction_mse(const PartTokenizer<float>& tok, const std::vector<Mat<double>>& clips) {
  if (clips.empty()) throw std::invalid_argument("reconstruction_mse: no clips");
  double total = 0.0;
  Index count = 0;
  for (const auto& clip : clips) {
    const Mat<float> x = tok.normalize(clip);
    const Index frames = clip.rows();
    const auto ids = tok.encode_indices(x, 1, frames);
    const Mat<float> y = tok.decode_indices(ids, 1, frames / tok.compression());
    total += (y - x).cast<double>().squaredNorm();
    count += x.size();
  }
  return total / static_cast<double>(count);
}

// Base language model ------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> response_loss(const ToyLm<Scalar>& lm, const FormattedSample& sample,
                             const ExpertMixture<Scalar>* mixture, const Tensor<Scalar>* modality) {
  if (sample.response_begin < 1 || sample.response_end < sample.response_begin ||
      sample.response_end >= static_cast<Index>(sample.ids.size())) {
    throw std::invalid_argument("response_loss: sample has no response span");
  }
  const Tensor<Scalar> h = lm.hidden(sample.ids, mixture, modality);
  const Index first = sample.response_begin - 1;
  const Index count = sample.response_end - sample.response_begin + 1;  // response tokens and <eor>
  const Tensor<Scalar> logits = lm.head(slice_rows(h, first, count));
  const std::vector<Index> targets(sample.ids.begin() + sample.response_begin,
                                   sample.ids.begin() + sample.response_end + 1);
  const std::vector<Scalar> mask(targets.size(), Scalar(1));
  return cross_entropy(logits, std::span<const Index>(targets), std::span<const Scalar>(mask));
}

template Tensor<float> response_loss(const ToyLm<float>&, const FormattedSample&, const ExpertMixture<float>*,
                                     const Tensor<float>*);
template Tensor<double> response_loss(const ToyLm<double>&, const FormattedSample&, const ExpertMixture<double>*,
                                      const Tensor<double>*);

ToyLm<float> pretrain_lm(const LmTrainConfig& config, const std::vector<InstructionSample>& train, std::uint64_t seed,
                         std::vector<LmLogEntry>* log, const std::function<void(const LmLogEntry&)>& on_log) {
  if (train.empty()) throw std::invalid_argument("pretrain_lm: empty training set");
  const Rng root = Rng(seed).derive("lm");
  ToyLm<float> lm(Vocabulary::base(), config.model, root.derive("init").seed());
  std::vector<FormattedSample> data;
  data.reserve(train.size());
  for (const auto& s : train) data.push_back(format_instruction(s, lm.vocab()));
  OptimizerState<float> hyper;
  hyper.beta1 = 0.9;
  hyper.beta2 = 0.99;
  hyper.base_lr = config.lr;
  AdamW<float> opt(lm.base_parameters(), hyper);
  Cursor cursor(data.size(), root.derive("order"));
  const float inv = 1.0f / static_cast<float>(config.batch);
  for (Index step = 0; step < config.steps; ++step) {
    double total = 0.0;
    const double lr = cosine_lr(step, config.steps, config.lr, config.min_lr);
    guarded(step, "language model pretraining", [&] {
      for (Index b = 0; b < config.batch; ++b) {
        Tensor<float> loss = scale(response_loss(lm, data[cursor.next()]), inv);
        loss.backward();
        total += loss.item();
      }
      opt.step(lr);
      opt.zero_grad();
      return 0;
    });
    const LmLogEntry entry{step, total, lr};
    if (log) log->push_back(entry);
    if (on_log) on_log(entry);
  }
  return lm;
}

namespace {

bool answer_matches(const ToyLm<float>& lm, const InstructionSample& probe, const ExpertMixture<float>* mixture) {
  const FormattedSample f = format_prompt(probe, lm.vocab());
  GenerateOptions options;
  options.max_len = static_cast<Index>(probe.response.size()) + 1;
  const Generation g = generate<float>(lm, f.ids, mixture, nullptr, options);
  return g.stopped && lm.vocab().encode(probe.response) == g.tokens;
}

}  // namespace

double base_task_accuracy(const ToyLm<float>& lm, const std::vector<InstructionSample>& probes) {
  if (probes.empty()) throw std::invalid_argument("base_task_accuracy: no probes");
  NoGradGuard guard;
  Index ok = 0;
  for (const auto& p : probes) ok += answer_matches(lm, p, nullptr) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(probes.size());
}

double base_task_accuracy(const MotionLm<float>& model, const std::vector<InstructionSample>& probes) {
  if (probes.empty()) throw std::invalid_argument("base_task_accuracy: no probes");
  NoGradGuard guard;
  Index ok = 0;
  for (const auto& p : probes) {
    const FormattedSample f = format_prompt(p, model.lm().vocab());
    const ExpertMixture<float> mix = model.route(f.gate_ids);
    ok += answer_matches(model.lm(), p, &mix) ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(probes.size());
}

// Instruction tuning -------------------------------------------------------

void attach_motion_tokens(std::vector<InstructionSample>& samples, const PartTokenizer<float>& tokenizer,
                          const Vocabulary& vocab, const SkeletonSpec& skeleton) {
  for (auto& s : samples) {
    if (s.task != TaskKind::t2m) throw std::invalid_argument("attach_motion_tokens: not a t2m sample");
    s.response_ids.clear();
    for (const auto& t : tokenizer.tokenize_motion(regenerate_motion(s, skeleton)))
      s.response_ids.push_back(vocab.motion_id(t.part, t.index));
  }
}

void attach_pose_tokens(std::vector<InstructionSample>& samples, const PartTokenizer<float>& tokenizer,
                        const Vocabulary& vocab, const SkeletonSpec& skeleton) {
  for (auto& s : samples) {
    if (s.task != TaskKind::pose) throw std::invalid_argument("attach_pose_tokens: not a pose sample");
    s.response_ids.clear();
    for (const auto& t : tokenizer.tokenize_pose(regenerate_pose(s, skeleton)))
      s.response_ids.push_back(vocab.pose_id(t.part, t.index));
  }
}

std::vector<TuneItem> make_items(const std::vector<InstructionSample>& samples, const Vocabulary& vocab,
                                 Index modality_tokens) {
  std::vector<TuneItem> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    TuneItem item;
    item.sample = s.eta == 1 ? format_prompt(s, vocab, modality_tokens) : format_instruction(s, vocab, modality_tokens);
    item.feature.assign(s.feature.begin(), s.feature.end());
    out.push_back(std::move(item));
  }
  return out;
}

Tensor<float> tune_sample_loss(const MotionLm<float>& model, const TuneItem& item, bool gating_loss, double* fm,
                               double* gat) {
  const ExpertMixture<float> mix = model.route(item.sample.gate_ids);
  if (item.sample.eta == 1) {
    // motion-unrelated prompt: supervises the gate only
    Tensor<float> l = gating_loss ? moelora::gating_loss(mix, 1).value : Tensor<float>::scalar(0.0f);
    if (gat) *gat = l.item();
    return l;
  }
  Tensor<float> modality;
  if (item.sample.task == TaskKind::pose) {
    const Tensor<float> feature = Tensor<float>::from_values({static_cast<Index>(item.feature.size())}, item.feature);
    modality = model.project_modality(feature);
  }
  Tensor<float> l = response_loss(model.lm(), item.sample, &mix, modality.defined() ? &modality : nullptr);
  if (fm) *fm = l.item();
  if (gat) *gat = 0.0;
  return l;
}

std::vector<TaskKind> mixing_schedule(const TuneConfig& config) {
  const double ratios[3] = {config.t2m_ratio, config.pose_ratio, config.gate_ratio};
  const TaskKind kinds[3] = {TaskKind::t2m, TaskKind::pose, TaskKind::base};
  const double sum = ratios[0] + ratios[1] + ratios[2];
  // smooth weighted round-robin
  double credit[3] = {0, 0, 0};
  std::vector<TaskKind> out;
  for (Index i = 0; i < config.batch; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      credit[k] += ratios[k] / sum;
      if (credit[k] > credit[best]) best = k;
    }
    credit[best] -= 1.0;
    out.push_back(kinds[best]);
  }
  return out;
}

std::vector<TuneLogEntry> instruction_tune(MotionLm<float>& model, const TuneConfig& config, const TuneData& data,
                                           std::uint64_t seed, Index log_every,
                                           const std::function<void(const TuneLogEntry&)>& on_log) {
  if (config.micro_batch < 1 || config.batch % config.micro_batch != 0) {
    throw std::invalid_argument("instruction_tune: batch must be a multiple of micro_batch");
  }
  const std::vector<TaskKind> schedule = mixing_schedule(config);
  const auto needs = [&](TaskKind k) { return std::count(schedule.begin(), schedule.end(), k) > 0; };
  if ((needs(TaskKind::t2m) && data.t2m.empty()) || (needs(TaskKind::pose) && data.pose.empty()) ||
      (needs(TaskKind::base) && data.gate.empty())) {
    throw std::invalid_argument("instruction_tune: a scheduled task has no data");
  }
  const std::uint64_t base_hash = model.lm().base_hash();
  const Rng root = Rng(seed).derive("tune");
  Cursor t2m(data.t2m.size(), root.derive("t2m"));
  Cursor pose(data.pose.size(), root.derive("pose"));
  Cursor gate(data.gate.size(), root.derive("gate"));
  OptimizerState<float> hyper;
  hyper.beta1 = config.beta1;
  hyper.beta2 = config.beta2;
  hyper.weight_decay = config.weight_decay;
  hyper.base_lr = config.lr;
  AdamW<float> opt(model.trainable_parameters(), hyper);
  const float inv = 1.0f / static_cast<float>(config.batch);
  std::vector<TuneLogEntry> log;
  for (Index step = 0; step < config.steps; ++step) {
    TuneLogEntry entry;
    entry.step = step;
    entry.lr = cosine_lr(step, config.steps, config.lr, config.min_lr);
    Index n_fm = 0, n_gat = 0;
    guarded(step, "instruction tuning", [&] {
      for (Index m = 0; m < config.batch; m += config.micro_batch) {
        Tensor<float> micro;
        for (Index i = m; i < m + config.micro_batch; ++i) {
          const TaskKind kind = schedule[static_cast<std::size_t>(i)];
          const TuneItem& item = kind == TaskKind::t2m    ? data.t2m[t2m.next()]
                                 : kind == TaskKind::pose ? data.pose[pose.next()]
                                                          : data.gate[gate.next()];
          double fm = 0, gat = 0;
          Tensor<float> l = tune_sample_loss(model, item, config.gating_loss, &fm, &gat);
          if (item.sample.eta == 1) {
            entry.gat += gat;
            ++n_gat;
          } else {
            entry.fm += fm;
            ++n_fm;
          }
          micro = micro.defined() ? add(micro, l) : l;
        }
        Tensor<float> scaled = scale(micro, inv);
        if (scaled.requires_grad()) scaled.backward();
      }
      opt.step(entry.lr);
      opt.zero_grad();
      return 0;
    });
    if (n_fm) entry.fm /= static_cast<double>(n_fm);
    if (n_gat) entry.gat /= static_cast<double>(n_gat);
    const bool last = step + 1 == config.steps;
    if (!data.heldout_gate.empty() && log_every > 0 && (step % log_every == 0 || last)) {
      NoGradGuard guard;
      double total = 0.0;
      for (const auto& item : data.heldout_gate) total += gating_loss(model.route(item.sample.gate_ids), 1).value.item();
      entry.heldout_gat = total / static_cast<double>(data.heldout_gate.size());
    }
    log.push_back(entry);
    if (on_log) on_log(entry);
  }
  if (model.lm().base_hash() != base_hash) {
    throw FrozenWeightError("instruction_tune: base weights changed during tuning");
  }
  return log;
}

std::optional<std::vector<PartToken>> motion_tokens_from_ids(const std::vector<Index>& ids, const Vocabulary& vocab) {
  const Index n = vocab.parts();
  if (n < 1 || ids.empty() || static_cast<Index>(ids.size()) % n != 0) return std::nullopt;
  std::vector<PartToken> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto code = vocab.motion_code(ids[i]);
    if (!code || code->part != static_cast<Index>(i) % n) return std::nullopt;
    out.push_back({code->part, code->code, static_cast<Index>(i) / n});
  }
  return out;
}

std::optional<std::vector<PartToken>> pose_tokens_from_ids(const std::vector<Index>& ids, const Vocabulary& vocab) {
  const Index n = vocab.parts();
  if (n < 1 || static_cast<Index>(ids.size()) != n) return std::nullopt;
  std::vector<PartToken> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto code = vocab.pose_code(ids[i]);
    if (!code || code->part != static_cast<Index>(i)) return std::nullopt;
    out.push_back({code->part, code->code, 0});
  }
  return out;
}

}  // namespace moelora
