// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/train/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

namespace moelora {

using nlohmann::ordered_json;

// Reports ------------------------------------------------------------------

ordered_json EvalReport::to_json() const {
  ordered_json j;
  j["name"] = name;
  j["meta"] = meta;
  j["metrics"] = metrics;
  j["timing"] = timing;
  return j;
}

std::string EvalReport::csv() const {
  std::string out;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += '\n';
  };
  line(csv_header);
  for (const auto& row : csv_rows) line(row);
  return out;
}

std::filesystem::path results_dir(const RunConfig& config) {
  const char* root = std::getenv("MOELORA_RESULTS");
  return std::filesystem::path(root && *root ? root : "results") / config_fingerprint(config);
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / (report.name + ".json"));
    if (!out) throw std::runtime_error("cannot write report to " + dir.string());
    out << report.to_json().dump(2) << '\n';
  }
  if (!report.csv_header.empty()) {
    std::ofstream out(dir / (report.name + ".csv"));
    out << report.csv();
  }
}

std::string format_metric(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

// Artifacts ----------------------------------------------------------------

void save_tokenizer(const std::filesystem::path& path, PartTokenizer<float>& tokenizer) {
  Checkpoint ckpt;
  const TokenizerConfig& c = tokenizer.config();
  ckpt.meta()["tokenizer"] = {{"model_dim", c.model_dim},
                              {"heads", c.heads},
                              {"layers", c.layers},
                              {"mlp_dim", c.mlp_dim},
                              {"code_dim", c.code_dim},
                              {"codebook_size", c.codebook_size},
                              {"temporal_stages", c.temporal_stages},
                              {"commitment", c.commitment},
                              {"ema", c.ema},
                              {"ema_decay", c.ema_decay},
                              {"dead_window", c.dead_window},
                              {"parts", tokenizer.parts()}};
  tokenizer.save(ckpt);
  ckpt.save(path);
}

PartTokenizer<float> load_tokenizer(const std::filesystem::path& path) {
  const Checkpoint ckpt = Checkpoint::load(path);
  if (!ckpt.meta().contains("tokenizer")) throw CheckpointError(path.string() + " is not a tokenizer checkpoint");
  const auto& m = ckpt.meta().at("tokenizer");
  TokenizerConfig c;
  c.model_dim = m.at("model_dim").get<Index>();
  c.heads = m.at("heads").get<Index>();
  c.layers = m.at("layers").get<Index>();
  c.mlp_dim = m.at("mlp_dim").get<Index>();
  c.code_dim = m.at("code_dim").get<Index>();
  c.codebook_size = m.at("codebook_size").get<Index>();
  c.temporal_stages = m.at("temporal_stages").get<Index>();
  c.commitment = m.at("commitment").get<double>();
  c.ema = m.at("ema").get<bool>();
  c.ema_decay = m.at("ema_decay").get<double>();
  c.dead_window = m.at("dead_window").get<Index>();
  const SkeletonSpec toy = SkeletonSpec::toy17();
  const SkeletonSpec skeleton = m.at("parts").get<Index>() == 1 ? toy.whole_body() : toy;
  PartTokenizer<float> tok(skeleton, c, 0);
  tok.load(ckpt);
  return tok;
}

// Forgetting and routing ---------------------------------------------------

ForgettingResult eval_forgetting(const ToyLm<float>& base, const MotionLm<float>& tuned,
                                 const MotionLm<float>* tuned_without, const std::vector<InstructionSample>& probes) {
  ForgettingResult r;
  r.before = base_task_accuracy(base, probes);
  r.after = base_task_accuracy(tuned, probes);
  if (tuned_without) r.after_without = base_task_accuracy(*tuned_without, probes);
  return r;
}

std::vector<RoutingRow> eval_routing(const MotionLm<float>& model,
                                     const std::vector<std::pair<std::string, std::vector<InstructionSample>>>& sets) {
  NoGradGuard guard;
  std::vector<RoutingRow> rows;
  const Index experts = model.config().experts;
  for (const auto& [task, samples] : sets) {
    RoutingRow row;
    row.task = task;
    row.mean_alpha.assign(static_cast<std::size_t>(experts), 0.0);
    for (const auto& s : samples) {
      const FormattedSample f = format_prompt(s, model.lm().vocab(), model.config().modality_tokens);
      const ExpertMixture<float> mix = model.route(f.gate_ids);
      for (Index i = 0; i < experts; ++i) row.mean_alpha[static_cast<std::size_t>(i)] += mix.weight(i);
    }
    row.samples = static_cast<Index>(samples.size());
    if (row.samples) {
      for (double& a : row.mean_alpha) a /= static_cast<double>(row.samples);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Text-to-motion -----------------------------------------------------------

std::array<double, 3> retrieval_accuracy(const std::vector<std::optional<MotionSequence>>& motions,
                                         const std::vector<MotionSpec>& truth, const SpecLibrary& library,
                                         Index candidates, std::uint64_t seed) {
  if (motions.size() != truth.size() || motions.empty()) {
    throw std::invalid_argument("retrieval_accuracy: need one motion per true spec");
  }
  const auto& specs = library.specs();
  if (candidates < 2 || candidates > static_cast<Index>(specs.size())) {
    throw std::invalid_argument("retrieval_accuracy: candidate count out of range");
  }
  const Rng root = Rng(seed).derive("retrieval");
  std::array<double, 3> hits{0, 0, 0};
  for (std::size_t i = 0; i < motions.size(); ++i) {
    // distractor captions describe other specs
    Rng rng = root.derive(static_cast<std::uint64_t>(i));
    std::vector<std::size_t> pool;
    for (std::size_t k = 0; k < specs.size(); ++k)
      if (!(specs[k] == truth[i])) pool.push_back(k);
    for (std::size_t k = 0; k + 1 < static_cast<std::size_t>(candidates); ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(static_cast<Index>(pool.size() - k)));
      std::swap(pool[k], pool[j]);
    }
    if (!motions[i]) continue;
    const auto score = [&](const MotionSpec& spec, Index template_id) {
      const auto parsed = parse_caption(caption_words(spec, template_id));
      return library.score(*motions[i], *parsed);
    };
    const double t = score(truth[i], rng.below(kCaptionTemplates));
    std::vector<double> distractors;
    for (std::size_t k = 0; k + 1 < static_cast<std::size_t>(candidates); ++k)
      distractors.push_back(score(specs[pool[k]], rng.below(kCaptionTemplates)));
    const Index rank = retrieval_rank(t, distractors);
    for (Index k = 0; k < 3; ++k)
      if (rank <= k + 1) hits[static_cast<std::size_t>(k)] += 1;
  }
  for (double& h : hits) h /= static_cast<double>(motions.size());
  return hits;
}

std::vector<std::optional<MotionSequence>> generate_motions(const MotionLm<float>& model,
                                                            const PartTokenizer<float>& tokenizer,
                                                            const std::vector<InstructionSample>& samples,
                                                            Index max_frames) {
  NoGradGuard guard;
  const Vocabulary& vocab = model.lm().vocab();
  std::vector<std::optional<MotionSequence>> out;
  for (const auto& s : samples) {
    const FormattedSample f = format_prompt(s, vocab, model.config().modality_tokens);
    const ExpertMixture<float> mix = model.route(f.gate_ids);
    GenerateOptions options;
    options.max_len = max_frames / tokenizer.compression() * tokenizer.parts() + 1;
    options.grammar = ResponseGrammar::motion;
    const Generation g = generate<float>(model.lm(), f.ids, &mix, nullptr, options);
    const auto tokens = motion_tokens_from_ids(g.tokens, vocab);
    if (!g.stopped || !tokens) {
      out.emplace_back();
      continue;
    }
    out.emplace_back(tokenizer.decode_motion(*tokens));
  }
  return out;
}

T2mResult eval_t2m(const MotionLm<float>& model, const PartTokenizer<float>& tokenizer,
                   const std::vector<InstructionSample>& samples, const SpecLibrary& library,
                   const EvalConfig& config, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("eval_t2m: no samples");
  const SkeletonSpec& skeleton = tokenizer.skeleton();
  const auto generated = generate_motions(model, tokenizer, samples, config.max_motion_frames);
  T2mResult r;
  r.samples = static_cast<Index>(samples.size());
  std::vector<MotionSpec> truth;
  std::vector<MotionSequence> decodable;
  double gen_mse = 0.0, tok_mse = 0.0;
  Index tok_count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const MotionSpec spec = *samples[i].spec;
    truth.push_back(spec);
    const MotionSequence gt = regenerate_motion(samples[i], skeleton);
    {
      const Mat<float> x = tokenizer.normalize(gt.frames);
      const auto ids = tokenizer.encode_indices(x, 1, gt.length());
      const Mat<float> y = tokenizer.decode_indices(ids, 1, gt.length() / tokenizer.compression());
      tok_mse += (y - x).cast<double>().squaredNorm();
      tok_count += x.size();
    }
    if (!generated[i]) {
      ++r.undecodable;
      continue;
    }
    const MotionSpec fit = library.recover(*generated[i]);
    r.gait_accuracy += fit.gait == spec.gait ? 1 : 0;
    r.spec_accuracy += fit == spec ? 1 : 0;
    gen_mse += motion_distance(gt, *generated[i]);
    decodable.push_back(*generated[i]);
  }
  const double n = static_cast<double>(r.samples);
  r.gait_accuracy /= n;
  r.spec_accuracy /= n;
  r.tokenizer_mse = tok_mse / static_cast<double>(tok_count);
  r.generation_mse = decodable.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : gen_mse / static_cast<double>(decodable.size());
  const auto top = retrieval_accuracy(generated, truth, library, config.retrieval_candidates, seed);
  r.top1 = top[0];
  r.top2 = top[1];
  r.top3 = top[2];
  if (decodable.size() >= 2) {
    Rng rng = Rng(seed).derive("diversity");
    const auto size = std::min<std::size_t>(static_cast<std::size_t>(config.diversity_subset), decodable.size());
    std::vector<MotionSequence> a, b;
    for (std::size_t i = 0; i < size; ++i) {
      a.push_back(decodable[static_cast<std::size_t>(rng.below(static_cast<Index>(decodable.size())))]);
      b.push_back(decodable[static_cast<std::size_t>(rng.below(static_cast<Index>(decodable.size())))]);
    }
    r.diversity = diversity(a, b);
  }
  return r;
}

// Pose ---------------------------------------------------------------------

PoseResult eval_pose(const MotionLm<float>& model, const PartTokenizer<float>& tokenizer,
                     const std::vector<InstructionSample>& samples, const SkeletonSpec& skeleton) {
  if (samples.empty()) throw std::invalid_argument("eval_pose: no samples");
  NoGradGuard guard;
  const Vocabulary& vocab = model.lm().vocab();
  PoseResult r;
  r.samples = static_cast<Index>(samples.size());
  r.mean_bone = skeleton.mean_bone_length();
  double pa_total = 0.0;
  Index pa_count = 0;
  for (const auto& s : samples) {
    const Pose gt = regenerate_pose(s, skeleton);
    const FormattedSample f = format_prompt(s, vocab, model.config().modality_tokens);
    const ExpertMixture<float> mix = model.route(f.gate_ids);
    const Tensor<float> feature = Tensor<float>::from_values(
        {static_cast<Index>(s.feature.size())}, std::vector<float>(s.feature.begin(), s.feature.end()));
    const Tensor<float> modality = model.project_modality(feature);
    GenerateOptions options;
    options.max_len = tokenizer.parts() + 1;
    options.grammar = ResponseGrammar::pose;
    const Generation g = generate<float>(model.lm(), f.ids, &mix, &modality, options);
    const auto tokens = pose_tokens_from_ids(g.tokens, vocab);
    Mat<double> predicted = Mat<double>::Zero(skeleton.joints, 3);
    if (g.stopped && tokens) {
      predicted = tokenizer.decode_pose(*tokens).values;
    } else {
      ++r.undecodable;
    }
    const double e = mpjpe(predicted, gt.values);
    r.per_sample_mpjpe.push_back(e);
    r.mpjpe += e;
    const auto pa = pa_mpjpe(predicted, gt.values);
    if (pa) {
      r.per_sample_pa.push_back(*pa);
      pa_total += *pa;
      ++pa_count;
    } else {
      r.per_sample_pa.push_back(std::numeric_limits<double>::quiet_NaN());
      ++r.degenerate;
    }
  }
  r.mpjpe /= static_cast<double>(r.samples);
  r.pa_mpjpe = pa_count ? pa_total / static_cast<double>(pa_count) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// Scaling ------------------------------------------------------------------

Index closed_form_param_count(const std::vector<LayerDims>& layers, Index trainable_experts, Index rank,
                              Index gate_dim, Index gate_hidden) {
  Index per_expert = 0;
  for (const auto& l : layers) per_expert += rank * (l.d_in + l.d_out);
  const Index experts = trainable_experts + 1;
  return trainable_experts * per_expert + gate_dim * gate_hidden + gate_hidden + gate_hidden * experts + experts;
}

std::vector<ScalingRow> scaling_bench(const ToyLm<float>& extended_base, const MotionLmConfig& model_config,
                                      const BenchConfig& bench, const ScalingInputs& inputs, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  const Rng root = Rng(seed).derive("bench");
  std::vector<MotionLm<float>> models;
  std::vector<ScalingRow> rows;
  for (Index n = bench.min_experts; n <= bench.max_experts; ++n) {
    MotionLmConfig c = model_config;
    c.experts = n + 1;
    models.emplace_back(extended_base.clone(), c, root.derive(static_cast<std::uint64_t>(n)).seed());
    ScalingRow row;
    row.experts = n;
    row.params = trainable_param_count(models.back().lm().bank(), models.back().gating());
    row.formula = closed_form_param_count(models.back().lm().adapted_layers(), n, c.rank, c.gate_dim, c.gate_hidden);
    rows.push_back(row);
  }
  // latency: one fixed 84-token input, expert counts interleaved run by run
  const Vocabulary& vocab = extended_base.vocab();
  Rng ids_rng = root.derive("input");
  std::vector<Index> ids;
  for (Index t = 0; t < bench.tokens; ++t) ids.push_back(ids_rng.below(vocab.text_size()));
  const std::vector<Index> gate_ids(ids.begin(), ids.begin() + std::min<Index>(16, bench.tokens));
  std::vector<std::vector<double>> times(models.size());
  {
    NoGradGuard guard;
    for (Index run = 0; run < bench.warmup + bench.runs; ++run) {
      for (std::size_t m = 0; m < models.size(); ++m) {
        const auto start = clock::now();
        const ExpertMixture<float> mix = models[m].route(gate_ids);
        const Tensor<float> logits = models[m].lm().forward(ids, &mix);
        const double ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
        if (logits.numel() == 0) throw std::logic_error("scaling_bench: empty forward");
        if (run >= bench.warmup) times[m].push_back(ms);
      }
    }
  }
  for (std::size_t m = 0; m < models.size(); ++m) rows[m].infer_ms = median(times[m]);
  if (inputs.data && bench.train_steps > 0) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      MotionLm<float> trial = models[m];
      TuneConfig t = inputs.tune;
      t.model = trial.config();
      t.steps = bench.train_steps;
      const auto start = clock::now();
      instruction_tune(trial, t, *inputs.data, seed, 0);
      rows[m].train_seconds =
          std::chrono::duration<double>(clock::now() - start).count() / static_cast<double>(bench.train_steps);
    }
  }
  if (inputs.data && inputs.tokenizer && inputs.t2m_test && inputs.library && bench.tune_steps > 0) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      TuneConfig t = inputs.tune;
      t.model = models[m].config();
      t.steps = bench.tune_steps;
      instruction_tune(models[m], t, *inputs.data, seed, 0);
      const auto motions = generate_motions(models[m], *inputs.tokenizer, *inputs.t2m_test, inputs.eval.max_motion_frames);
      std::vector<MotionSpec> truth;
      for (const auto& s : *inputs.t2m_test) truth.push_back(*s.spec);
      rows[m].t2m_top1 = retrieval_accuracy(motions, truth, *inputs.library, inputs.eval.retrieval_candidates, seed)[0];
    }
  }
  return rows;
}

// Tokenizer ablation -------------------------------------------------------

std::vector<AblationArm> ablate_tokenizer(const SkeletonSpec& skeleton, TokenizerTrainConfig config, Index steps,
                                          const std::vector<Mat<double>>& train,
                                          const std::vector<Mat<double>>& test, std::uint64_t seed,
                                          PartTokenizer<float>* part_based) {
  const Index k = config.model.codebook_size;
  const Index n = skeleton.parts();
  struct Arm {
    std::string name;
    SkeletonSpec skeleton;
    Index codebook;
  };
  const std::vector<Arm> arms = {
      {"part-based", skeleton, k},
      {"whole-body K=" + std::to_string(k), skeleton.whole_body(), k},
      {"whole-body K=" + std::to_string(k) + "x" + std::to_string(n), skeleton.whole_body(), k * n},
  };
  config.steps = steps;
  std::vector<AblationArm> out;
  for (const auto& arm : arms) {
    TokenizerTrainConfig c = config;
    c.model.codebook_size = arm.codebook;
    TokenizerRun run = train_tokenizer(arm.skeleton, c, train, test, seed);
    AblationArm a;
    a.name = arm.name;
    a.parts = arm.skeleton.parts();
    a.codebook_size = arm.codebook;
    a.codebook_entries = arm.codebook * arm.skeleton.parts();
    a.steps = steps;
    a.heldout_mse = run.heldout_mse;
    a.final_rec = run.log.empty() ? 0.0 : run.log.back().rec;
    out.push_back(a);
    if (part_based && &arm == &arms.front()) *part_based = std::move(run.tokenizer);
  }
  return out;
}

}  // namespace moelora
