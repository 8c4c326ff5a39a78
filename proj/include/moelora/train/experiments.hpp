// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation harness: forgetting, routing, text-to-motion, pose, scaling and
// tokenizer ablation, plus report and artifact I/O.

#pragma once

#include "moelora/train/metrics.hpp"
#include "moelora/train/trainers.hpp"

#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

namespace moelora {

// Reports ------------------------------------------------------------------

/// Deterministic metrics (compared byte-for-byte across reruns) kept apart
/// from wall-clock timings.
struct EvalReport {
  std::string name;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  nlohmann::ordered_json timing = nlohmann::ordered_json::object();
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;

  nlohmann::ordered_json to_json() const;
  std::string csv() const;
};

/// $MOELORA_RESULTS (default "results") / <config fingerprint>.
std::filesystem::path results_dir(const RunConfig& config);
/// Writes <name>.json (and <name>.csv when rows exist) into `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& report);
std::string format_metric(double value);

// Artifacts ----------------------------------------------------------------

void save_tokenizer(const std::filesystem::path& path, PartTokenizer<float>& tokenizer);
PartTokenizer<float> load_tokenizer(const std::filesystem::path& path);

// Experiments --------------------------------------------------------------

struct ForgettingResult {
  double before = 0;
  double after = 0;          // tuned with L_gat
  double after_without = -1; // tuned without L_gat, when that arm ran
  double relative_drop() const { return before > 0 ? (before - after) / before : 0.0; }
  double retained_without() const { return before > 0 ? after_without / before : 0.0; }
};

ForgettingResult eval_forgetting(const ToyLm<float>& base, const MotionLm<float>& tuned,
                                 const MotionLm<float>* tuned_without, const std::vector<InstructionSample>& probes);

struct RoutingRow {
  std::string task;
  std::vector<double> mean_alpha;
  Index samples = 0;
};

std::vector<RoutingRow> eval_routing(const MotionLm<float>& model,
                                     const std::vector<std::pair<std::string, std::vector<InstructionSample>>>& sets);

struct T2mResult {
  Index samples = 0;
  Index undecodable = 0;
  double gait_accuracy = 0;
  double spec_accuracy = 0;
  double top1 = 0, top2 = 0, top3 = 0;
  double generation_mse = 0;  // generated vs ground-truth motion, over decodable samples
  double tokenizer_mse = 0;   // ground-truth round trip through the tokenizer
  double diversity = 0;
};

/// Retrieval of each motion's true caption among `candidates` captions (the
/// truth plus distractors of other specs), scored by spec-fit distance.
/// A missing motion counts as a failure. Returns {top1, top2, top3}.
std::array<double, 3> retrieval_accuracy(const std::vector<std::optional<MotionSequence>>& motions,
                                         const std::vector<MotionSpec>& truth, const SpecLibrary& library,
                                         Index candidates, std::uint64_t seed);

/// Decodes motion tokens greedily for each held-out sample.
std::vector<std::optional<MotionSequence>> generate_motions(const MotionLm<float>& model,
                                                            const PartTokenizer<float>& tokenizer,
                                                            const std::vector<InstructionSample>& samples,
                                                            Index max_frames);

T2mResult eval_t2m(const MotionLm<float>& model, const PartTokenizer<float>& tokenizer,
                   const std::vector<InstructionSample>& samples, const SpecLibrary& library,
                   const EvalConfig& config, std::uint64_t seed);

struct PoseResult {
  Index samples = 0;
  Index undecodable = 0;  // scored with every joint predicted at the origin
  Index degenerate = 0;   // excluded from PA-MPJPE
  double mpjpe = 0;
  double pa_mpjpe = 0;
  std::vector<double> per_sample_mpjpe;
  std::vector<double> per_sample_pa;  // NaN for degenerate targets
  double mean_bone = 0;
};

PoseResult eval_pose(const MotionLm<float>& model, const PartTokenizer<float>& tokenizer,
                     const std::vector<InstructionSample>& samples, const SkeletonSpec& skeleton);

struct ScalingRow {
  Index experts = 0;  // trainable experts n; the bank holds n + 1 with the zero expert
  Index params = 0;   // measured trainable_param_count
  Index formula = 0;  // closed form
  double train_seconds = -1;
  double infer_ms = 0;
  double t2m_top1 = -1;
};

/// n r sum(d_in + d_out) + gating MLP parameters.
Index closed_form_param_count(const std::vector<LayerDims>& layers, Index trainable_experts, Index rank,
                              Index gate_dim, Index gate_hidden);

struct ScalingInputs {
  const TuneData* data = nullptr;  // train timing and t2m accuracy need it
  TuneConfig tune;
  const PartTokenizer<float>* tokenizer = nullptr;
  const std::vector<InstructionSample>* t2m_test = nullptr;
  const SpecLibrary* library = nullptr;
  EvalConfig eval;
};

/// Latency: batch 1, `tokens` ids, full recomputation with the dynamic
/// mixture, expert counts interleaved run by run, median after warm-up.
std::vector<ScalingRow> scaling_bench(const ToyLm<float>& extended_base, const MotionLmConfig& model,
                                      const BenchConfig& bench, const ScalingInputs& inputs, std::uint64_t seed);

struct AblationArm {
  std::string name;
  Index parts = 0;
  Index codebook_size = 0;
  Index codebook_entries = 0;  // total over parts
  Index steps = 0;
  double heldout_mse = 0;
  double final_rec = 0;
};

/// Part-based (N codebooks of K), whole-body K and whole-body N*K arms,
/// each trained for `steps` with the same seed and batch schedule. The
/// part-based tokenizer is returned through `part_based` when non-null.
std::vector<AblationArm> ablate_tokenizer(const SkeletonSpec& skeleton, TokenizerTrainConfig config, Index steps,
                                          const std::vector<Mat<double>>& train,
                                          const std::vector<Mat<double>>& test, std::uint64_t seed,
                                          PartTokenizer<float>* part_based = nullptr);

}  // namespace moelora
