#pragma once

#include <functional>
#include <string>
#include <vector>

#include "knnshift/common.hpp"

namespace knnshift {

/// Source pairs (X_i, Y_i).
struct LabeledSample {
  PointSet covariates;
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return covariates.dim(); }
  /// Throws on length mismatch or non-finite values.
  void validate(const char* where) const;
};

/// h(x, y); the estimators target e(h) = E[h(X*, Y*)].
struct HFunction {
  std::function<double(PointView, double)> eval;
  std::string tag;

  double operator()(PointView x, double y) const { return eval(x, y); }

  static HFunction label();                 // h(x, y) = y
  static HFunction constant(double c);      // h(x, y) = c
  static HFunction first_coord_plus_label_squared();  // h(x, y) = (x_1 + y)^2
  static HFunction first_coord_plus_label();          // h(x, y) = x_1 + y
};

/// Observational sample (W_i, X_i, Y_i) for treatment-effect estimation.
struct ATESample {
  PointSet covariates;
  std::vector<double> outcomes;
  std::vector<bool> treated;

  std::size_t size() const { return outcomes.size(); }
  std::size_t n_treated() const;
  std::size_t n_control() const { return size() - n_treated(); }
  void validate(const char* where) const;
};

}  // namespace knnshift
