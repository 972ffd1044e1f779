#pragma once

#include <functional>
#include <string>
#include <vector>

#include "univid/autograd.hpp"

namespace univid {

struct GradcheckOptions {
  double eps = 1e-3;
  double tol = -1.0;  // < 0: the module's default
  uint64_t seed = 0;
  int samples = 0;    // coordinates to probe; 0: the module's default
};

struct GradcheckReport {
  std::string module;
  int64_t checked = 0;
  double max_error = 0.0;
  std::string worst;  // "<input>[<index>]"
  double tol = 0.0;
  bool passed = false;
};

// Names accepted by run_gradcheck: pstattn, pstconv, dualca, temattn, unet.
const std::vector<std::string>& gradcheck_modules();
double default_tolerance(const std::string& module);

// Central differences of sum(out * R) for a fixed random unit-norm R, compared with the
// analytic gradient by |a - n| / max(|a|, |n|, 1). Single-module checks use
// the branch output without its residual add.
GradcheckReport run_gradcheck(const std::string& module, const GradcheckOptions& opts);

struct NamedInput {
  std::string name;
  ag::Var var;
};

// Generic driver: `forward` rebuilds the output from `inputs`. samples = 0
// checks every coordinate.
GradcheckReport check_gradients(const std::string& label, const std::vector<NamedInput>& inputs,
                                const std::function<ag::Var()>& forward, double eps, double tol, int samples,
                                uint64_t seed);

}  // namespace univid
