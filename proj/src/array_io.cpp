#include "neuroalign/array_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "neuroalign/error.hpp"

namespace neuroalign {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_needed(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

std::size_t dtype_size(Dtype dtype) { return dtype == Dtype::float32 ? 4 : 8; }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::string dtype_name(Dtype dtype) { return dtype == Dtype::float32 ? "float32" : "float64"; }

fs::path sidecar_path(const fs::path& data_path) {
  fs::path p = data_path;
  p.replace_extension(".json");
  return p;
}

ArrayHeader read_array_header(const fs::path& data_path) {
  const fs::path side = sidecar_path(data_path);
  if (!fs::exists(side)) throw IngestionError("missing array sidecar: " + side.string());
  const json j = read_json_file(side);
  ArrayHeader header;
  if (!j.contains("dtype") || !j["dtype"].is_string()) {
    throw ValidationError(side.string() + ": field 'dtype' missing or not a string");
  }
  const auto dtype = j["dtype"].get<std::string>();
  if (dtype == "float32") {
    header.dtype = Dtype::float32;
  } else if (dtype == "float64") {
    header.dtype = Dtype::float64;
  } else {
    throw ValidationError(side.string() + ": field 'dtype' has unsupported value '" + dtype + "'");
  }
  if (j.contains("order") && j["order"] != "C") {
    throw ValidationError(side.string() + ": field 'order' must be \"C\"");
  }
  if (!j.contains("shape") || !j["shape"].is_array()) {
    throw ValidationError(side.string() + ": field 'shape' missing or not an array");
  }
  for (const auto& d : j["shape"]) {
    if (!d.is_number_integer() || d.get<long long>() < 0) {
      throw ValidationError(side.string() + ": field 'shape' must hold non-negative integers");
    }
    header.shape.push_back(d.get<std::size_t>());
  }
  return header;
}

Tensor read_array(const fs::path& data_path, bool require_finite) {
  if (!fs::exists(data_path)) throw IngestionError("missing array file: " + data_path.string());
  const ArrayHeader header = read_array_header(data_path);
  const std::size_t count = std::accumulate(header.shape.begin(), header.shape.end(),
                                            std::size_t{1}, std::multiplies<>());
  const std::uintmax_t bytes = fs::file_size(data_path);
  if (bytes != count * dtype_size(header.dtype)) {
    throw ValidationError(data_path.string() + ": field 'shape' " + shape_to_string(header.shape) +
                          " declares " + std::to_string(count * dtype_size(header.dtype)) +
                          " bytes but the file holds " + std::to_string(bytes));
  }
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw IngestionError("cannot open array file: " + data_path.string());
  std::vector<double> values(count);
  if (header.dtype == Dtype::float32) {
    std::vector<float> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 4));
    for (std::size_t i = 0; i < count; ++i) values[i] = byteswap_if_needed(raw[i]);
  } else {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * 8));
    for (auto& v : values) v = byteswap_if_needed(v);
  }
  if (!in && count > 0) throw IngestionError("short read on array file: " + data_path.string());
  if (require_finite) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::isfinite(values[i])) {
        throw ValidationError(data_path.string() + ": non-finite value at flat index " +
                              std::to_string(i));
      }
    }
  }
  return Tensor(header.shape, std::move(values));
}

void write_array(const fs::path& data_path, const Tensor& tensor, Dtype dtype) {
  if (data_path.has_parent_path()) fs::create_directories(data_path.parent_path());
  {
    std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write array file: " + data_path.string());
    if (dtype == Dtype::float32) {
      std::vector<float> raw(tensor.size());
      for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = byteswap_if_needed(static_cast<float>(tensor[i]));
      }
      out.write(reinterpret_cast<const char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * 4));
    } else {
      std::vector<double> raw(tensor.values().begin(), tensor.values().end());
      for (auto& v : raw) v = byteswap_if_needed(v);
      out.write(reinterpret_cast<const char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * 8));
    }
    if (!out) throw RuntimeFailure("write failed: " + data_path.string());
  }
  json side = {{"dtype", dtype_name(dtype)}, {"shape", tensor.shape()}, {"order", "C"}};
  std::ofstream out(sidecar_path(data_path), std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write sidecar for " + data_path.string());
  out << side.dump() << "\n";
}

}  // namespace neuroalign
