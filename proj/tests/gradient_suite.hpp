#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spn::test {

struct GradCase {
  std::string name;
  double worst_rel_error = 0.0;
};

/// Central-difference checks of every layer kind, the loss, the
/// regularizers and whole graphs, on random instances no larger than 6x6.
std::vector<GradCase> run_gradient_suite(std::uint64_t seed);

}  // namespace spn::test
