#pragma once

#include <string>
#include <vector>

#include "topdown/model.hpp"

namespace topdown {

// One record of the TDN1 container. Exactly one of f32/f64 is populated,
// selected by dtype (0 = float32, 1 = float64).
struct NamedTensor {
    std::string name;
    int dtype = 0;
    Shape shape;
    std::vector<float> f32;
    std::vector<double> f64;
};

// TDN1 container: 4-byte magic "TDN1", then records until end of file.
// Record layout (all integers little-endian):
//   u32 name length, UTF-8 name bytes,
//   u8 dtype (0=f32, 1=f64), u8 rank, rank x u64 extents,
//   raw little-endian values (product-of-extents elements).
void write_container(const std::string& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_container(const std::string& path);

// Saves parameters and batch-norm running statistics to `path` and the
// architecture description to `path + ".arch"`.
template <typename T>
void save_model(const Model<T>& model, const std::string& path);

// Rebuilds the model from the sidecar description and fills every tensor
// from the container. Unknown names, missing tensors, or shape mismatches
// are errors.
template <typename T>
Model<T> load_model(const std::string& path);

}  // namespace topdown
