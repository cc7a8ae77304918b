#include "knnshift/samples.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace knnshift {

void LabeledSample::validate(const char* where) const {
  if (labels.empty()) throw InvalidArgument(std::string(where) + ": empty source sample");
  if (covariates.size() != labels.size())
    throw InvalidArgument(std::string(where) + ": covariates and labels differ in length");
  for (double v : covariates.flat())
    if (!std::isfinite(v)) throw InvalidArgument(std::string(where) + ": non-finite covariate");
  for (double v : labels)
    if (!std::isfinite(v)) throw InvalidArgument(std::string(where) + ": non-finite label");
}

HFunction HFunction::label() {
  return {[](PointView, double y) { return y; }, "y"};
}

HFunction HFunction::constant(double c) {
  return {[c](PointView, double) { return c; }, "constant"};
}

HFunction HFunction::first_coord_plus_label_squared() {
  return {[](PointView x, double y) {
            const double s = x[0] + y;
            return s * s;
          },
          "x1_plus_y_squared"};
}

HFunction HFunction::first_coord_plus_label() {
  return {[](PointView x, double y) { return x[0] + y; }, "x1_plus_y"};
}

std::size_t ATESample::n_treated() const {
  return static_cast<std::size_t>(std::count(treated.begin(), treated.end(), true));
}

void ATESample::validate(const char* where) const {
  if (outcomes.empty()) throw InvalidArgument(std::string(where) + ": empty sample");
  if (covariates.size() != outcomes.size() || treated.size() != outcomes.size())
    throw InvalidArgument(std::string(where) + ": covariates, outcomes, treatments differ in length");
  if (n_treated() == 0 || n_control() == 0)
    throw InvalidArgument(std::string(where) + ": empty treatment arm");
  for (double v : outcomes)
    if (!std::isfinite(v)) throw InvalidArgument(std::string(where) + ": non-finite outcome");
}

}  // namespace knnshift
