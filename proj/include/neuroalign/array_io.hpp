#pragma once

#include <filesystem>
#include <string>

#include "neuroalign/tensor.hpp"

namespace neuroalign {

// On-disk arrays are raw little-endian floats plus a JSON sidecar that
// declares {"dtype": "float32"|"float64", "shape": [...], "order": "C"}.
// For `name.f32` the sidecar is `name.json` in the same directory.
enum class Dtype { float32, float64 };

std::string dtype_name(Dtype dtype);
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

struct ArrayHeader {
  Dtype dtype = Dtype::float32;
  Shape shape;
};

ArrayHeader read_array_header(const std::filesystem::path& data_path);

// Throws IngestionError when either file is missing, ValidationError when the
// sidecar is malformed, the byte length disagrees with the shape, or (with
// require_finite) a value is NaN/inf.
Tensor read_array(const std::filesystem::path& data_path, bool require_finite = true);

void write_array(const std::filesystem::path& data_path, const Tensor& tensor,
                 Dtype dtype = Dtype::float32);

}  // namespace neuroalign
