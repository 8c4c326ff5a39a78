// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/taskgen/dataset_io.hpp"

#include <fstream>

namespace moelora {

using nlohmann::json;

json to_json(const InstructionSample& s) {
  json j;
  j["task"] = to_string(s.task);
  if (s.op) j["op"] = to_string(*s.op);
  j["template"] = s.template_id;
  j["eta"] = s.eta;
  j["instruction"] = s.instruction;
  j["prompt"] = s.prompt;
  if (!s.response.empty()) j["response"] = s.response;
  if (!s.response_ids.empty()) j["response_ids"] = s.response_ids;
  if (s.spec) {
    j["spec"] = {{"gait", to_string(s.spec->gait)},
                 {"speed", to_string(s.spec->speed)},
                 {"direction", to_string(s.spec->direction)},
                 {"frames", s.spec->frames}};
    j["motion_seed"] = s.motion_seed;
  }
  if (s.task == TaskKind::pose) j["frame"] = s.frame;
  if (!s.feature.empty()) j["feature"] = s.feature;
  return j;
}

InstructionSample sample_from_json(const json& j) {
  InstructionSample s;
  s.task = parse_task(j.at("task").get<std::string>());
  if (j.contains("op")) s.op = parse_base_op(j.at("op").get<std::string>());
  s.template_id = j.at("template").get<Index>();
  s.eta = j.at("eta").get<int>();
  s.instruction = j.at("instruction").get<std::vector<std::string>>();
  s.prompt = j.at("prompt").get<std::vector<std::string>>();
  if (j.contains("response")) s.response = j.at("response").get<std::vector<std::string>>();
  if (j.contains("response_ids")) s.response_ids = j.at("response_ids").get<std::vector<Index>>();
  if (j.contains("spec")) {
    const json& sp = j.at("spec");
    s.spec = MotionSpec{parse_gait(sp.at("gait").get<std::string>()), parse_speed(sp.at("speed").get<std::string>()),
                        parse_direction(sp.at("direction").get<std::string>()), sp.at("frames").get<Index>()};
    s.motion_seed = j.at("motion_seed").get<std::uint64_t>();
  }
  if (j.contains("frame")) s.frame = j.at("frame").get<Index>();
  if (j.contains("feature")) s.feature = j.at("feature").get<std::vector<double>>();
  return s;
}

Dataset generate_dataset(const std::string& task, Index n, std::uint64_t seed, Split split,
                         const SkeletonSpec& skeleton) {
  Dataset d;
  d.manifest = {task, n, split, seed, kDatasetVersion};
  if (task == "base") {
    d.samples = gen_base_lang_task(n, seed, split);
  } else if (task == "t2m") {
    for (auto& m : gen_motion_dataset(n, skeleton, seed, split)) d.samples.push_back(std::move(m.sample));
  } else if (task == "pose") {
    for (auto& p : gen_pose_samples(n, skeleton, seed, split)) d.samples.push_back(std::move(p.sample));
  } else if (task == "gating") {
    d.samples = gen_gating_dataset(n, skeleton, seed, split);
  } else {
    throw std::invalid_argument("unknown dataset task '" + task + "' (expected base, t2m, pose or gating)");
  }
  return d;
}

void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset '" + path + "'");
  json m = {{"task", d.manifest.task},
            {"count", static_cast<Index>(d.samples.size())},
            {"split", to_string(d.manifest.split)},
            {"seed", d.manifest.seed},
            {"version", d.manifest.version}};
  out << json{{"manifest", m}}.dump() << '\n';
  for (const auto& s : d.samples) out << to_json(s).dump() << '\n';
  if (!out) throw DatasetError("failed writing dataset '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("dataset '" + path + "' is empty");
  Dataset d;
  try {
    const json head = json::parse(line);
    const json& m = head.at("manifest");
    d.manifest.task = m.at("task").get<std::string>();
    d.manifest.count = m.at("count").get<Index>();
    d.manifest.split = parse_split(m.at("split").get<std::string>());
    d.manifest.seed = m.at("seed").get<std::uint64_t>();
    d.manifest.version = m.at("version").get<int>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      d.samples.push_back(sample_from_json(json::parse(line)));
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed dataset '" + path + "': " + e.what());
  }
  if (d.manifest.version != kDatasetVersion) {
    throw DatasetError("dataset '" + path + "' has version " + std::to_string(d.manifest.version));
  }
  if (static_cast<Index>(d.samples.size()) != d.manifest.count) {
    throw DatasetError("dataset '" + path + "' declares " + std::to_string(d.manifest.count) + " records but holds " +
                       std::to_string(d.samples.size()));
  }
  return d;
}

}  // namespace moelora
