#pragma once

#include <string>

#include "sinkdem/net.hpp"

namespace sinkdem::nn {

// Checkpoint file, little-endian:
//   magic "SDNC", version u32
//   per parameter: name-length u32, name bytes, rank u32, dims u32..., f32 payload
void save_checkpoint(const std::string& path, const Network& net);

// Loads into an existing network; every stored parameter must match an
// existing name and shape, and every network parameter must be covered.
void load_checkpoint(const std::string& path, Network& net);

}  // namespace sinkdem::nn
