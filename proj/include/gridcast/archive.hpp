#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gridcast/tensor.hpp"

// Named-tensor archive: manifest.json describing names/shapes/offsets plus
// one flat little-endian binary file of doubles. Loads reproduce saved
// values bit-exactly. `meta` carries arbitrary extra JSON (configs, scaling
// constants) alongside the tensors.
namespace gridcast {

struct TensorArchive {
    std::vector<std::pair<std::string, ad::Tensor>> tensors;
    nlohmann::json meta;

    void add(const std::string& name, const ad::Tensor& t);
    const ad::Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_tensors(const std::string& dir, const TensorArchive& archive);
TensorArchive load_tensors(const std::string& dir);

}  // namespace gridcast
