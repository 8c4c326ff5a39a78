// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/train/config.hpp"

#include "moelora/core/random.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace moelora {

using nlohmann::json;

RunConfig default_config() {
  return json{
      {"seed", 7},
      {"tokenizer",
       {{"model_dim", 128},
        {"heads", 4},
        {"layers", 2},
        {"mlp_dim", 256},
        {"code_dim", 512},
        {"codebook_size", 512},
        {"temporal_stages", 2},
        {"commitment", 0.02},
        {"ema", false},
        {"ema_decay", 0.99},
        {"dead_window", 256},
        {"lr", 2e-4},
        {"steps", 2000},
        {"batch", 8},
        {"window", 16},
        {"reset_every", 50},
        {"train_samples", 1000},
        {"test_samples", 100}}},
      {"pose_tokenizer",
       {{"model_dim", 128},
        {"heads", 4},
        {"layers", 2},
        {"mlp_dim", 256},
        {"code_dim", 512},
        {"codebook_size", 512},
        {"temporal_stages", 0},
        {"commitment", 0.02},
        {"ema", false},
        {"ema_decay", 0.99},
        {"dead_window", 256},
        {"lr", 2e-4},
        {"steps", 2000},
        {"batch", 64},
        {"window", 1},
        {"reset_every", 50},
        {"train_samples", 4000},
        {"test_samples", 200}}},
      {"lm",
       {{"layers", 4},
        {"heads", 4},
        {"model_dim", 128},
        {"mlp_dim", 512},
        {"context", 128},
        {"extension_init_std", 0.02},
        {"lr", 1e-3},
        {"min_lr", 1e-4},
        {"steps", 3000},
        {"batch", 32},
        {"train_samples", 20000},
        {"probe_samples", 200}}},
      {"adapter",
       {{"experts", 5}, {"rank", 8}, {"gate_dim", 512}, {"gate_hidden", 512}, {"feature_dim", 64},
        {"modality_tokens", 1}}},
      {"tune",
       {{"lr", 3e-3},
        {"min_lr", 0.0},
        {"beta1", 0.9},
        {"beta2", 0.99},
        {"weight_decay", 0.0},
        {"batch", 32},
        {"micro_batch", 2},
        {"steps", 300},
        {"gating_loss", true},
        {"t2m_ratio", 0.375},
        {"pose_ratio", 0.375},
        {"gate_ratio", 0.25},
        {"t2m_samples", 2000},
        {"pose_samples", 2000},
        {"gate_samples", 2000}}},
      {"eval",
       {{"t2m_samples", 200},
        {"pose_samples", 200},
        {"probe_samples", 200},
        {"routing_samples", 200},
        {"retrieval_candidates", 32},
        {"diversity_subset", 300},
        {"max_motion_frames", 64}}},
      {"bench",
       {{"min_experts", 1},
        {"max_experts", 8},
        {"tokens", 84},
        {"runs", 50},
        {"warmup", 5},
        {"train_steps", 2},
        {"tune_steps", 0}}},
      {"ablate", {{"steps", 1000}}},
  };
}

const std::vector<std::pair<std::string, std::string>>& config_help() {
  static const std::vector<std::pair<std::string, std::string>> help = {
      {"tokenizer.code_dim", "code dimension S = 512"},
      {"tokenizer.codebook_size", "entries per part codebook K = 512"},
      {"tokenizer.temporal_stages", "log2 of the temporal compression l = 4"},
      {"tokenizer.commitment", "commitment weight lambda_com = 0.02"},
      {"tokenizer.lr", "tokenizer learning rate 2e-4"},
      {"adapter.experts", "experts including the zero expert, 5"},
      {"adapter.rank", "LoRA rank 8"},
      {"adapter.gate_dim", "gating input size 512"},
      {"adapter.gate_hidden", "gating hidden size 512"},
      {"tune.lr", "initial tuning learning rate 3e-3, cosine schedule"},
      {"tune.beta1", "AdamW beta1 0.9"},
      {"tune.beta2", "AdamW beta2 0.99"},
      {"tune.batch", "batch size 32"},
      {"tune.micro_batch", "micro batch size 2"},
      {"bench.tokens", "latency input length 84 tokens"},
  };
  return help;
}

namespace {

const char* type_name(const json& j) { return j.type_name(); }

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // an integer slot takes only integers
    return !(a.is_number_integer() && !b.is_number_integer());
  }
  return a.type() == b.type();
}

void merge_into(json& target, const json& patch, const std::string& path, const std::string& origin) {
  if (!patch.is_object()) throw ConfigError(origin + ": expected an object at '" + path + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!target.contains(it.key())) throw ConfigError(origin + ": unknown key '" + key + "'");
    json& slot = target[it.key()];
    if (slot.is_object()) {
      merge_into(slot, it.value(), key, origin);
    } else {
      if (!same_kind(slot, it.value())) {
        throw ConfigError(origin + ": key '" + key + "' expects " + type_name(slot) + ", got " +
                          type_name(it.value()));
      }
      slot = slot.is_number_float() ? json(it.value().get<double>()) : it.value();
    }
  }
}

void collect_leaves(const json& j, const std::string& path, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (it.value().is_object()) {
      collect_leaves(it.value(), key, out);
    } else {
      out.push_back(key);
    }
  }
}

json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream in(dotted);
  std::string part;
  while (std::getline(in, part, '.')) p += "/" + part;
  return json::json_pointer(p);
}

}  // namespace

void merge_config(RunConfig& config, const json& patch, const std::string& origin) {
  merge_into(config, patch, "", origin);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must be key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  std::vector<std::string> leaves;
  collect_leaves(config, "", leaves);
  std::string path;
  for (const auto& leaf : leaves) {
    if (leaf == key) path = leaf;
  }
  if (path.empty()) {
    std::vector<std::string> matches;
    for (const auto& leaf : leaves) {
      const auto dot = leaf.rfind('.');
      if ((dot == std::string::npos ? leaf : leaf.substr(dot + 1)) == key) matches.push_back(leaf);
    }
    if (matches.empty()) throw ConfigError("override: unknown key '" + key + "'");
    if (matches.size() > 1) {
      std::string list;
      for (const auto& m : matches) list += " " + m;
      throw ConfigError("override: key '" + key + "' is ambiguous:" + list);
    }
    path = matches.front();
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = json::object();
  patch[pointer(path)] = value;
  merge_config(config, patch, "override");
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig config = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json file = json::parse(in, nullptr, false, true);
    if (file.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
    merge_config(config, file, path);
  }
  for (const auto& o : overrides) apply_override(config, o);
  validate_config(config);
  return config;
}

std::string config_fingerprint(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("invalid config: " + message);
}

void validate_tokenizer(const json& t, const std::string& name) {
  for (const char* k : {"model_dim", "heads", "layers", "mlp_dim", "code_dim", "codebook_size", "steps", "batch",
                        "window", "reset_every", "train_samples", "test_samples", "dead_window"}) {
    require(t.at(k).get<Index>() > 0, name + "." + k + " must be positive");
  }
  require(t.at("lr").get<double>() > 0, name + ".lr must be positive");
  require(t.at("temporal_stages").get<Index>() >= 0, name + ".temporal_stages must be non-negative");
  require(t.at("commitment").get<double>() >= 0, name + ".commitment must be non-negative");
  require(t.at("model_dim").get<Index>() % t.at("heads").get<Index>() == 0, name + ".model_dim must divide by heads");
  const Index ratio = Index(1) << t.at("temporal_stages").get<Index>();
  require(t.at("window").get<Index>() % ratio == 0, name + ".window must be a multiple of the compression");
}

}  // namespace

void validate_config(const RunConfig& c) {
  validate_tokenizer(c.at("tokenizer"), "tokenizer");
  validate_tokenizer(c.at("pose_tokenizer"), "pose_tokenizer");
  require(c.at("pose_tokenizer").at("temporal_stages").get<Index>() == 0, "pose_tokenizer.temporal_stages must be 0");
  require(c.at("pose_tokenizer").at("codebook_size") == c.at("tokenizer").at("codebook_size"),
          "pose_tokenizer.codebook_size must equal tokenizer.codebook_size (one K for the extended vocabulary)");
  const json& lm = c.at("lm");
  for (const char* k : {"layers", "heads", "model_dim", "mlp_dim", "context", "steps", "batch", "train_samples",
                        "probe_samples"}) {
    require(lm.at(k).get<Index>() > 0, std::string("lm.") + k + " must be positive");
  }
  require(lm.at("model_dim").get<Index>() % lm.at("heads").get<Index>() == 0, "lm.model_dim must divide by heads");
  require(lm.at("lr").get<double>() > 0, "lm.lr must be positive");
  const json& a = c.at("adapter");
  require(a.at("experts").get<Index>() >= 2, "adapter.experts must be at least 2 (zero expert plus one)");
  for (const char* k : {"rank", "gate_dim", "gate_hidden", "feature_dim", "modality_tokens"}) {
    require(a.at(k).get<Index>() > 0, std::string("adapter.") + k + " must be positive");
  }
  const json& t = c.at("tune");
  require(t.at("lr").get<double>() > 0, "tune.lr must be positive");
  require(t.at("micro_batch").get<Index>() > 0, "tune.micro_batch must be positive");
  require(t.at("batch").get<Index>() > 0 && t.at("batch").get<Index>() % t.at("micro_batch").get<Index>() == 0,
          "tune.batch must be a positive multiple of tune.micro_batch");
  require(t.at("steps").get<Index>() >= 0, "tune.steps must be non-negative");
  const double ratios = t.at("t2m_ratio").get<double>() + t.at("pose_ratio").get<double>() + t.at("gate_ratio").get<double>();
  require(t.at("t2m_ratio").get<double>() >= 0 && t.at("pose_ratio").get<double>() >= 0 &&
              t.at("gate_ratio").get<double>() >= 0 && ratios > 0,
          "tune ratios must be non-negative with a positive sum");
  const json& b = c.at("bench");
  require(b.at("min_experts").get<Index>() >= 1 && b.at("max_experts").get<Index>() >= b.at("min_experts").get<Index>(),
          "bench expert range must satisfy 1 <= min <= max");
  require(b.at("runs").get<Index>() > 0 && b.at("tokens").get<Index>() > 0, "bench.runs and bench.tokens must be positive");
  const json& e = c.at("eval");
  require(e.at("retrieval_candidates").get<Index>() >= 2, "eval.retrieval_candidates must be at least 2");
}

TokenizerTrainConfig tokenizer_config(const RunConfig& c, const std::string& section) {
  const json& t = c.at(section);
  TokenizerTrainConfig out;
  out.model.model_dim = t.at("model_dim").get<Index>();
  out.model.heads = t.at("heads").get<Index>();
  out.model.layers = t.at("layers").get<Index>();
  out.model.mlp_dim = t.at("mlp_dim").get<Index>();
  out.model.code_dim = t.at("code_dim").get<Index>();
  out.model.codebook_size = t.at("codebook_size").get<Index>();
  out.model.temporal_stages = t.at("temporal_stages").get<Index>();
  out.model.commitment = t.at("commitment").get<double>();
  out.model.ema = t.at("ema").get<bool>();
  out.model.ema_decay = t.at("ema_decay").get<double>();
  out.model.dead_window = t.at("dead_window").get<Index>();
  out.lr = t.at("lr").get<double>();
  out.steps = t.at("steps").get<Index>();
  out.batch = t.at("batch").get<Index>();
  out.window = t.at("window").get<Index>();
  out.reset_every = t.at("reset_every").get<Index>();
  out.train_samples = t.at("train_samples").get<Index>();
  out.test_samples = t.at("test_samples").get<Index>();
  return out;
}

LmTrainConfig lm_config(const RunConfig& c) {
  const json& t = c.at("lm");
  LmTrainConfig out;
  out.model.layers = t.at("layers").get<Index>();
  out.model.heads = t.at("heads").get<Index>();
  out.model.model_dim = t.at("model_dim").get<Index>();
  out.model.mlp_dim = t.at("mlp_dim").get<Index>();
  out.model.context = t.at("context").get<Index>();
  out.model.extension_init_std = t.at("extension_init_std").get<double>();
  out.lr = t.at("lr").get<double>();
  out.min_lr = t.at("min_lr").get<double>();
  out.steps = t.at("steps").get<Index>();
  out.batch = t.at("batch").get<Index>();
  out.train_samples = t.at("train_samples").get<Index>();
  out.probe_samples = t.at("probe_samples").get<Index>();
  return out;
}

TuneConfig tune_config(const RunConfig& c) {
  const json& a = c.at("adapter");
  const json& t = c.at("tune");
  TuneConfig out;
  out.model.experts = a.at("experts").get<Index>();
  out.model.rank = a.at("rank").get<Index>();
  out.model.gate_dim = a.at("gate_dim").get<Index>();
  out.model.gate_hidden = a.at("gate_hidden").get<Index>();
  out.model.feature_dim = a.at("feature_dim").get<Index>();
  out.model.modality_tokens = a.at("modality_tokens").get<Index>();
  out.lr = t.at("lr").get<double>();
  out.min_lr = t.at("min_lr").get<double>();
  out.beta1 = t.at("beta1").get<double>();
  out.beta2 = t.at("beta2").get<double>();
  out.weight_decay = t.at("weight_decay").get<double>();
  out.batch = t.at("batch").get<Index>();
  out.micro_batch = t.at("micro_batch").get<Index>();
  out.steps = t.at("steps").get<Index>();
  out.gating_loss = t.at("gating_loss").get<bool>();
  out.t2m_ratio = t.at("t2m_ratio").get<double>();
  out.pose_ratio = t.at("pose_ratio").get<double>();
  out.gate_ratio = t.at("gate_ratio").get<double>();
  out.t2m_samples = t.at("t2m_samples").get<Index>();
  out.pose_samples = t.at("pose_samples").get<Index>();
  out.gate_samples = t.at("gate_samples").get<Index>();
  return out;
}

EvalConfig eval_config(const RunConfig& c) {
  const json& t = c.at("eval");
  EvalConfig out;
  out.t2m_samples = t.at("t2m_samples").get<Index>();
  out.pose_samples = t.at("pose_samples").get<Index>();
  out.probe_samples = t.at("probe_samples").get<Index>();
  out.routing_samples = t.at("routing_samples").get<Index>();
  out.retrieval_candidates = t.at("retrieval_candidates").get<Index>();
  out.diversity_subset = t.at("diversity_subset").get<Index>();
  out.max_motion_frames = t.at("max_motion_frames").get<Index>();
  return out;
}

BenchConfig bench_config(const RunConfig& c) {
  const json& t = c.at("bench");
  BenchConfig out;
  out.min_experts = t.at("min_experts").get<Index>();
  out.max_experts = t.at("max_experts").get<Index>();
  out.tokens = t.at("tokens").get<Index>();
  out.runs = t.at("runs").get<Index>();
  out.warmup = t.at("warmup").get<Index>();
  out.train_steps = t.at("train_steps").get<Index>();
  out.tune_steps = t.at("tune_steps").get<Index>();
  return out;
}

AblateConfig ablate_config(const RunConfig& c) {
  AblateConfig out;
  out.steps = c.at("ablate").at("steps").get<Index>();
  return out;
}

std::uint64_t config_seed(const RunConfig& c) { return c.at("seed").get<std::uint64_t>(); }

}  // namespace moelora
