#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "matext/csv.hpp"

namespace matext {

/// Closed-form design inputs for a two-arm trial with a coded fraction h of
/// outcomes and a predictor of assumed quality r2. sigma2 is the outcome
/// variance (1 keeps everything in standardized units). The default
/// mdes_multiplier 2.80 is z_{0.975} + z_{0.80}, i.e. alpha = 0.05 two-sided
/// at 80% power in the large-sample normal approximation.
struct DesignPlan {
  double N = 1000;
  double p = 0.5;
  double h = 1.0;
  double r2 = 0.0;
  double sigma2 = 1.0;
  double alpha = 0.05;
  double power = 0.80;
  double mdes_multiplier = 2.80;

  void validate() const;

  static DesignPlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Non-fatal caveats, e.g. a negative assumed r2 (variance then exceeds the
/// r2 = 0 case under partial coding).
std::vector<std::string> plan_warnings(const DesignPlan& plan);

/// (1/N)(1/p + 1/(1-p))(1 + ((1-h)/h)(1-r2)) sigma2.
double variance_ma(const DesignPlan& plan);

/// Coded-subset-only variance, (1/N)(1/h)(1/p + 1/(1-p)) sigma2.
double variance_subset(const DesignPlan& plan);

/// variance_ma / variance_subset = 1 - r2 (1 - h).
double relative_variance(const DesignPlan& plan);

/// Standard-error inflation over full coding: sqrt(1 + ((1-h)/h)(1-r2)).
double se_inflation(const DesignPlan& plan);

/// mdes_multiplier * sqrt(variance_ma(plan)).
double mdes(const DesignPlan& plan);

struct CurvePoint {
  double h = 0.0;
  double se = 0.0;
  double mdes = 0.0;
  double inflation = 0.0;
};

/// One point per grid value (grid order preserved); mdes is non-increasing
/// in h for r2 in [0,1].
std::vector<CurvePoint> mdes_curve(const DesignPlan& plan, const std::vector<double>& h_grid);

CsvTable curve_table(const std::vector<CurvePoint>& curve);
nlohmann::json curve_json(const std::vector<CurvePoint>& curve);

struct RequiredFraction {
  double h = 1.0;
  bool feasible = false;
};

/// Smallest coded fraction whose mdes meets the target, inverted analytically
/// from the variance formula. Infeasible when even h = 1 misses the target.
/// With r2 = 1 the mdes does not depend on h; a feasible result then reports
/// h = 0, meaning any positive fraction attains the target.
RequiredFraction required_fraction(const DesignPlan& plan, double target_mdes);

}  // namespace matext
