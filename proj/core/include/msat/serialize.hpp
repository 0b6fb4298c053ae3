#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msat/optim.hpp"
#include "msat/tensor.hpp"

namespace msat {

// Binary tensor format used across the project:
//   magic "MSAT", version u16 = 1, dtype u8 (0 = float32), rank u8,
//   rank x u32 extents, row-major little-endian float payload.
// A checkpoint file is a sequence of (name length u16, name bytes, record).

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, const std::string& context);

void save_tensor_file(const std::string& path, const Tensor& t);
Tensor load_tensor_file(const std::string& path);

// Header fields without reading the payload; manifest validation.
Shape read_tensor_header(const std::string& path);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void save_tensor_sequence(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensor_sequence(const std::string& path);

std::vector<NamedTensor> named_values(const ParamRefs& params);
// Copies values into same-named parameters; every parameter must be matched
// by exactly one record of identical shape.
void assign_named_values(const std::vector<NamedTensor>& tensors, const ParamRefs& params);

}  // namespace msat
