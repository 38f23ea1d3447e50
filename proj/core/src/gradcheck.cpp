#include "histoseg/gradcheck.hpp"

#include <cmath>

#include "histoseg/error.hpp"

namespace histoseg {

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    raise(ErrorKind::InvalidParameter, "epsilon must lie in [1e-7, 1e-3]");
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

} // namespace

double finite_difference_check(
    const std::function<LossOutput(const ClassMap&)>& loss_fn,
    const ClassMap& at, double epsilon) {
  check_epsilon(epsilon);
  const LossOutput base = loss_fn(at);

  ClassMap probe = at;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.values.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + epsilon;
    const double up = loss_fn(probe).value;
    probe.values[i] = saved - epsilon;
    const double down = loss_fn(probe).value;
    probe.values[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, relative_error(base.grad.values[i], numeric));
  }
  return worst;
}

double finite_difference_check_params(
    const std::function<double(std::span<const double>)>& value_fn,
    std::span<const double> analytic_grad, std::vector<double> at,
    double epsilon) {
  check_epsilon(epsilon);
  if (analytic_grad.size() != at.size()) {
    raise(ErrorKind::InvalidInput, "gradient size does not match parameters");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double saved = at[i];
    at[i] = saved + epsilon;
    const double up = value_fn(at);
    at[i] = saved - epsilon;
    const double down = value_fn(at);
    at[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, relative_error(analytic_grad[i], numeric));
  }
  return worst;
}

} // namespace histoseg
