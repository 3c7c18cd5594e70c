#pragma once

// Parameter checkpoints: `<stem>.bin` holds every tensor back to back
// (row-major, little-endian); `<stem>.json` lists {name, shape, dtype,
// offset} per tensor plus free-form metadata.

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <type_traits>

#include "trackedit/nn/tensor.hpp"
#include "trackedit/project_io.hpp"

namespace trackedit::nn {

template <typename S>
constexpr const char* dtype_name() {
  return std::is_same_v<S, float> ? "float32" : "float64";
}

template <typename S, typename Model>
void save_checkpoint(const fs::path& stem, Model& model, const json& metadata = json::object()) {
  json tensors = json::array();
  std::string blob;
  model.visit([&](const std::string& name, Param<S>& p) {
    tensors.push_back({{"name", name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"dtype", dtype_name<S>()},
                       {"offset", blob.size()}});
    blob.append(reinterpret_cast<const char*>(p.value.data()), sizeof(S) * p.value.size());
  });
  fs::path bin = stem, manifest = stem;
  bin += ".bin";
  manifest += ".json";
  io::write_text(bin, blob);
  io::write_json(manifest, {{"tensors", tensors}, {"metadata", metadata}, {"bytes", blob.size()}});
}

/// Loads values by name; every parameter of the model must be present with
/// the same shape. Returns the manifest metadata.
template <typename S, typename Model>
json load_checkpoint(const fs::path& stem, Model& model) {
  fs::path bin = stem, manifest = stem;
  bin += ".bin";
  manifest += ".json";
  const json m = io::read_json(manifest);
  std::ifstream f(bin, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingFile, "checkpoint data not found", bin.string());
  const std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const io::Reader r(manifest.string());
  std::map<std::string, json> by_name;
  const json& list = r.field(m, "tensors", "$");
  for (std::size_t i = 0; i < list.size(); ++i)
    by_name[r.field(list[i], "name", "$.tensors[" + std::to_string(i) + "]").get<std::string>()] = list[i];
  model.visit([&](const std::string& name, Param<S>& p) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::SchemaViolation, "tensor missing", manifest.string(), name);
    const json& t = it->second;
    if (t.at("dtype") != dtype_name<S>()) throw Error(ErrorCode::SchemaViolation, "dtype differs", manifest.string(), name);
    if (t.at("shape").at(0).get<long long>() != p.value.rows() || t.at("shape").at(1).get<long long>() != p.value.cols())
      throw Error(ErrorCode::ShapeMismatch, "tensor shape differs from model", manifest.string(), name);
    const std::size_t off = t.at("offset").get<std::size_t>(), bytes = sizeof(S) * p.value.size();
    if (off + bytes > blob.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint data truncated", bin.string(), name);
    std::memcpy(p.value.data(), blob.data() + off, bytes);
  });
  return m.value("metadata", json::object());
}

}  // namespace trackedit::nn
