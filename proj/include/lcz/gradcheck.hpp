#pragma once

#include <string>
#include <vector>

namespace lcz {

struct GradCheckLine {
  std::string kind;
  double max_rel_err;
  double tolerance;
  bool pass() const { return max_rel_err < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckLine> lines;
  bool all_pass() const {
    for (const auto& l : lines)
      if (!l.pass()) return false;
    return true;
  }
};

// Double-precision central-difference verification: every layer kind once,
// then a complete small fusion model checked against all of its trainable
// parameters.
GradCheckReport run_gradcheck();

}  // namespace lcz
