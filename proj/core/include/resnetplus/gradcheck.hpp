#pragma once

// Central finite-difference checking of the autodiff engine (f64 only).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "resnetplus/autograd.hpp"
#include "resnetplus/model.hpp"

namespace rnp {

/// |a - n| / (|a| + |n| + 1e-12).
double relative_error(double analytic, double numeric);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<Var<double>(const Var<double>&)>;

/// Compares d fn/d x from one backward pass against (fn(x+eps e_i) - fn(x-eps e_i)) / 2eps
/// for every element i (or only `indices`, when given).
GradCheckResult grad_check(const ScalarFn& fn, const Tensor<double>& x, double eps,
                           const std::vector<std::size_t>& indices = {});

struct ParamCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::size_t tensors = 0;
};

/// Spot-checks `per_tensor` random elements of every parameter. `loss` must be
/// deterministic across calls (reseed any dropout inside it).
/// With `refine` > 0 the step is chosen per element: central differences at eps,
/// eps/10, ... (up to `refine` extra levels) are compared and the most self-consistent
/// pair wins. Selection never looks at the analytic gradient.
ParamCheckResult grad_check_parameters(std::vector<std::pair<std::string, Var<double>>> params,
                                       const std::function<Var<double>()>& loss, double eps,
                                       std::size_t per_tensor, std::uint64_t seed,
                                       int refine = 0);

enum class GradCheckScope { kPrimitives, kBlocks, kFull };

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::string worst;  // parameter or coordinate with the largest error
  bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckSuiteOptions {
  std::uint64_t seed = 7;
  double eps = 0.0;             // 0 = scope default (1e-6 primitives/blocks, 1e-4 full)
  std::size_t per_tensor = 3;   // full scope only
  bool corrupt_adjoint = false; // append a primitive with a deliberately wrong adjoint
};

std::vector<GradCheckEntry> run_gradcheck_suite(GradCheckScope scope,
                                                const GradCheckSuiteOptions& opts = {});

GradCheckScope parse_gradcheck_scope(const std::string& s);

}  // namespace rnp
