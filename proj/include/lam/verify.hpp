#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lam/attribution.hpp"

namespace lam {

struct GradCheckResult {
  int checked = 0;
  int skipped_kinks = 0;
  double max_rel_error = 0.0;
  double tolerance = 1e-3;

  bool passed(int required) const { return checked >= required && max_rel_error <= tolerance; }
};

using ScalarFunction = std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;

/// Compares reverse-mode gradients of `fn` against central differences at
/// random coordinates of the inputs (all inputs are differentiated). A
/// coordinate whose one-sided differences disagree by more than curvature
/// explains straddles a kink of |x| / ReLU / PReLU and is skipped; sampling continues until `coordinates`
/// valid ones are checked or 8x as many were tried.
GradCheckResult gradcheck(const ScalarFunction& fn, std::vector<BasicTensor<double>> inputs, int coordinates,
                          std::uint64_t seed, double step = 1e-3, double tolerance = 1e-3);

/// Same check for D(F(x)) with respect to the LR input: the analytic gradient
/// comes from the 32-bit production path, the differences from a 64-bit
/// forward. Coordinates are drawn from the attribution window.
GradCheckResult gradcheck_network(const SRNetwork& net, const Tensor& lr, const PatchDetector& det,
                                  int coordinates, std::uint64_t seed, double step = 1e-3,
                                  double tolerance = 1e-3);

struct LadderEntry {
  int steps = 0;
  double residual = 0.0;
  double relative = 0.0;
};

std::vector<LadderEntry> completeness_ladder(const SRNetwork& net, const Tensor& lr, const PatchDetector& det,
                                             PathConfig cfg, std::span<const int> steps);

struct ConfinementResult {
  Window window{};
  double max_outside = 0.0;  // largest |attribution| outside the window
  bool passed() const { return max_outside == 0.0; }
};

ConfinementResult check_confinement(const SRNetwork& net, const AttributionMap& map, const PatchDetector& det);

}  // namespace lam
