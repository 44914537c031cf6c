#ifndef SPARSEKAN_CHECKPOINT_HPP
#define SPARSEKAN_CHECKPOINT_HPP

#include "sparsekan/network.hpp"

#include <string>

namespace sparsekan {

// Self-describing JSON snapshot of a network: shape, aggregation kinds,
// forward-connection flag, gate parameters and logits, and per-edge
// grids/coefficients/scales. Doubles are serialized shortest-round-trip, so
// save followed by load reproduces every stored real bit for bit.
void save_network(const GatedKan& net, const std::string& path);

// Throws std::runtime_error naming the file and the problem on open,
// parse, version, or structural failures.
GatedKan load_network(const std::string& path);

}  // namespace sparsekan

#endif
