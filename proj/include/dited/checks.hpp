#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dited/tape.hpp"

namespace dited {

// Builds a tracked scalar from tracked copies of the given parameters.
using ScalarFn = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

struct FdGroupReport {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;  // coordinates above the magnitude filter
};

struct FdReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::vector<FdGroupReport> groups;
};

// Compares reverse-mode gradients of f against central finite differences.
// Coordinates with |analytic| + |numeric| <= 1e-8 are skipped; the relative
// error is |a - n| / (|a| + |n|). f must be deterministic in its parameters.
FdReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params, double step,
                           double tol, const std::vector<std::string>& names = {});

// Exact derivative of a scalar -> scalar function at a point, by building the
// function on a fresh tape and running one reverse pass.
double scalar_partial(const std::function<Tensor(Graph&, const Tensor&)>& f, double at);

}  // namespace dited
