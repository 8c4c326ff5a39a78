// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset files: a manifest line followed by one JSON record per line.
// Motion and pose records keep their spec and seed; frames are regenerated
// on demand.

#pragma once

#include "moelora/taskgen/datasets.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace moelora {

inline constexpr int kDatasetVersion = 1;

struct DatasetManifest {
  std::string task;  // base, t2m, pose or gating
  Index count = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;
  int version = kDatasetVersion;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<InstructionSample> samples;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const InstructionSample& sample);
InstructionSample sample_from_json(const nlohmann::json& j);

/// Generates `n` samples of `task` for one split.
Dataset generate_dataset(const std::string& task, Index n, std::uint64_t seed, Split split,
                         const SkeletonSpec& skeleton);

void save_dataset(const std::string& path, const Dataset& dataset);
/// Throws DatasetError on a missing manifest, a version mismatch or a count mismatch.
Dataset load_dataset(const std::string& path);

}  // namespace moelora
