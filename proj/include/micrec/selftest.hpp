#pragma once

#include <string>
#include <vector>

namespace micrec {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks on small random instances: gradients against finite
/// differences, propagation and template encoding against direct
/// evaluation, the neighbor index and ranking metrics against brute force.
std::vector<SelftestResult> run_selftest(unsigned seed = 7);

}  // namespace micrec
