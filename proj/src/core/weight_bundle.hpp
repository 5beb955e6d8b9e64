#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"

namespace prism {

/// Flat named-tensor container, used for network checkpoints and for
/// importing externally converted weights. Binary layout: magic "PRWB1\n",
/// u32 count, then per entry u32 name length, name bytes, u32 rank,
/// u32 dims[rank], raw little-endian f64 data.
using WeightBundle = std::map<std::string, Tensor>;

void save_weight_bundle(const std::string& path, const WeightBundle& bundle);
WeightBundle load_weight_bundle(const std::string& path);

} // namespace prism
