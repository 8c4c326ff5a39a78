// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0
//
// v1 checkpoint container: one line of JSON manifest
//   {"version":"v1","meta":{...},"tensors":[{"name","dtype","shape","offset","nbytes"}]}
// terminated by '\n', followed by the raw little-endian payload. Offsets are
// relative to the first payload byte. Tensors are written in name order.

#pragma once

#include "moelora/core/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace moelora {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Checkpoint {
 public:
  struct Entry {
    std::string dtype;  // "f32" or "f64"
    Shape shape;
    std::vector<char> bytes;
  };

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& tensor);
  /// Loads into a leaf tensor, converting dtype if needed.
  template <typename Scalar>
  Tensor<Scalar> get(const std::string& name, bool requires_grad = false) const;
  /// Copies a stored tensor into an existing one of identical shape.
  template <typename Scalar>
  void restore(const std::string& name, Tensor<Scalar>& into) const;

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;
  const Entry& entry(const std::string& name) const;

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, Entry> entries_;
  nlohmann::json meta_ = nlohmann::json::object();
};

}  // namespace moelora
