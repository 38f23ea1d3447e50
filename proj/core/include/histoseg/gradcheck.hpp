#pragma once

#include <functional>
#include <span>
#include <vector>

#include "histoseg/losses.hpp"

namespace histoseg {

/// Central finite differences per coordinate against the analytic gradient.
/// Returns the maximum over coordinates of
///   |analytic - numeric| / max(1, |numeric|).
/// epsilon must lie in [1e-7, 1e-3].
double finite_difference_check(
    const std::function<LossOutput(const ClassMap&)>& loss_fn,
    const ClassMap& at, double epsilon);

/// Same protocol for a scalar function of a flat parameter vector; used to
/// verify backpropagation through the pixel scorer.
double finite_difference_check_params(
    const std::function<double(std::span<const double>)>& value_fn,
    std::span<const double> analytic_grad, std::vector<double> at,
    double epsilon);

} // namespace histoseg
