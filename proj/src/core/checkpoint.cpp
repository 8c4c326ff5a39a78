// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace moelora {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");

namespace {

template <typename Scalar>
constexpr const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

template <typename From, typename To>
void convert(const std::vector<char>& bytes, To* out, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    From v;
    std::memcpy(&v, bytes.data() + i * sizeof(From), sizeof(From));
    out[i] = static_cast<To>(v);
  }
}

}  // namespace

template <typename Scalar>
void Checkpoint::put(const std::string& name, const Tensor<Scalar>& tensor) {
  Entry e;
  e.dtype = dtype_name<Scalar>();
  e.shape = tensor.shape();
  e.bytes.resize(static_cast<std::size_t>(tensor.numel()) * sizeof(Scalar));
  std::memcpy(e.bytes.data(), tensor.value().data(), e.bytes.size());
  entries_[name] = std::move(e);
}

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw CheckpointError("checkpoint has no tensor named '" + name + "'");
  return it->second;
}

template <typename Scalar>
Tensor<Scalar> Checkpoint::get(const std::string& name, bool requires_grad) const {
  const Entry& e = entry(name);
  const auto [rows, cols] = storage_dims(e.shape);
  Mat<Scalar> m(rows, cols);
  const auto count = static_cast<std::size_t>(m.size());
  if (e.dtype == "f32") {
    if (e.bytes.size() != count * 4) throw CheckpointError("payload size mismatch for '" + name + "'");
    convert<float, Scalar>(e.bytes, m.data(), count);
  } else if (e.dtype == "f64") {
    if (e.bytes.size() != count * 8) throw CheckpointError("payload size mismatch for '" + name + "'");
    convert<double, Scalar>(e.bytes, m.data(), count);
  } else {
    throw CheckpointError("unsupported dtype '" + e.dtype + "'");
  }
  return Tensor<Scalar>(e.shape, std::move(m), requires_grad);
}

template <typename Scalar>
void Checkpoint::restore(const std::string& name, Tensor<Scalar>& into) const {
  Tensor<Scalar> loaded = get<Scalar>(name);
  if (loaded.shape() != into.shape()) {
    throw CheckpointError("shape mismatch for '" + name + "': stored " + to_string(loaded.shape()) + ", expected " +
                          to_string(into.shape()));
  }
  into.mutable_value() = loaded.value();
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["version"] = "v1";
  manifest["meta"] = meta_;
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, e] : entries_) {
    tensors.push_back({{"name", name}, {"dtype", e.dtype}, {"shape", e.shape}, {"offset", offset},
                       {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  manifest["tensors"] = std::move(tensors);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  const std::string header = manifest.dump();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.put('\n');
  for (const auto& [name, e] : entries_) out.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string header;
  std::getline(in, header);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest in '" + path.string() + "': " + e.what());
  }
  if (manifest.value("version", "") != "v1") throw CheckpointError("unsupported checkpoint version");
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  ck.meta_ = manifest.value("meta", nlohmann::json::object());
  for (const auto& t : manifest.at("tensors")) {
    Entry e;
    e.dtype = t.at("dtype").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto nbytes = t.at("nbytes").get<std::size_t>();
    if (offset + nbytes > payload.size()) throw CheckpointError("truncated checkpoint payload");
    e.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                   payload.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
    ck.entries_[t.at("name").get<std::string>()] = std::move(e);
  }
  return ck;
}

template void Checkpoint::put<float>(const std::string&, const Tensor<float>&);
template void Checkpoint::put<double>(const std::string&, const Tensor<double>&);
template Tensor<float> Checkpoint::get<float>(const std::string&, bool) const;
template Tensor<double> Checkpoint::get<double>(const std::string&, bool) const;
template void Checkpoint::restore<float>(const std::string&, Tensor<float>&) const;
template void Checkpoint::restore<double>(const std::string&, Tensor<double>&) const;

}  // namespace moelora
