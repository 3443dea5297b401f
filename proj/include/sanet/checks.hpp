#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sanet {

// One finite-difference comparison: the worst relative error over every
// coordinate of one gradient tensor.
struct GradientCheck {
  std::string name;
  double max_error = 0;
  double tolerance = 0;
  bool passed() const { return max_error < tolerance; }
};

// 4x5 lattice, 3 inputs, 2 hidden units, tanh/tanh, 64-bit. Every
// parameter and the input map, for each single direction and for the
// four-direction layer, under both connectivities.
std::vector<GradientCheck> dagrnn_gradient_checks(std::uint64_t seed = 1);

// conv2d, max-pool away from ties, fully connected, activations,
// softmax cross-entropy and channel concatenation.
std::vector<GradientCheck> layer_gradient_checks(std::uint64_t seed = 2);

// Tiny fused network in tanh mode on 2 random patches; every coordinate of
// every parameter tensor, central differences with step 1e-4.
std::vector<GradientCheck> network_gradient_checks(std::uint64_t seed = 3);

bool all_passed(const std::vector<GradientCheck>& checks);

}  // namespace sanet
