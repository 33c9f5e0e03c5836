#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "matext/csv.hpp"
#include "matext/data.hpp"

namespace matext {

enum class EstimatorMethod { oracle, subset, synthetic, model_assisted, covariate_adjusted };

std::string estimator_method_name(EstimatorMethod method);

/// A point estimate with its normal-based confidence interval and the
/// per-arm variance diagnostics that are defined for the method.
struct ImpactEstimate {
  EstimatorMethod method = EstimatorMethod::subset;
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double alpha = 0.05;
  int n1 = 0, n0 = 0, N1 = 0, N0 = 0;
  std::optional<double> s2_treat, s2_control;    // outcome sample variances
  std::optional<double> se2_treat, se2_control;  // residual sample variances
  std::optional<double> r2_treat, r2_control;
  std::string note;  // caveats, e.g. the synthetic variance being anti-conservative

  nlohmann::json to_json() const;
};

/// Residuals Y_i - Yhat_i on the coded documents, tagged by arm.
struct ResidualSet {
  std::vector<int> arm;
  std::vector<double> residual;
};

ResidualSet coded_residuals(const Experiment& exp, const std::vector<double>& preds);

/// Difference in full-population means, available only under complete coding.
ImpactEstimate estimate_oracle(const Experiment& exp, double alpha = 0.05);

/// Difference in coded-subset means with the per-arm plug-in variance.
ImpactEstimate estimate_subset(const Experiment& exp, double alpha = 0.05);

/// Difference in mean predicted scores over the full population. The naive
/// variance treats predictions as if they were observed outcomes and is
/// anti-conservative; it is kept to demonstrate that failure mode.
ImpactEstimate estimate_synthetic(const Experiment& exp, const std::vector<double>& preds,
                                  double alpha = 0.05);

/// Survey-calibrated estimator: per arm, the mean prediction over everyone
/// plus the coded-subset mean residual correction. Its variance combines the
/// full-sample plug-in with finite-population-corrected residual terms.
ImpactEstimate estimate_model_assisted(const Experiment& exp, const std::vector<double>& preds,
                                       double alpha = 0.05);

/// Splits the model-assisted estimate into the prediction-only part and the
/// residual correction; the parts sum to the estimate within 1e-12.
std::pair<double, double> bias_decomposition(const Experiment& exp,
                                             const std::vector<double>& preds);

struct RegressionTerm {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
};

struct CovariateAdjustedResult {
  ImpactEstimate estimate;
  std::vector<RegressionTerm> coefficients;
};

/// Pseudo-outcome regression: each document gets
///   ystar_i = yhat_i + (S_i / pi_i) * (y_i - yhat_i)
/// (the inverse-probability correction vanishes for uncoded documents),
/// then ystar is regressed on an intercept, the treatment indicator, and the
/// baseline covariates. The treatment coefficient is the estimate; standard
/// errors are heteroskedasticity-robust (HC1).
CovariateAdjustedResult estimate_covariate_adjusted(const Experiment& exp,
                                                    const std::vector<double>& preds,
                                                    double alpha = 0.05,
                                                    bool require_covariates = true);

/// Per-arm predictive R^2 on the coded subset: 1 - s_e^2 / s_y^2 per arm
/// (sample variances); negative when predictions do worse than the mean.
/// Returns (treated, control).
std::pair<double, double> empirical_r2(const Experiment& exp, const std::vector<double>& preds);

/// Flat table with the pinned column set:
/// method, tau_hat, se, ci_lo, ci_hi, r2_treat, r2_control, n1, n0, N1, N0.
CsvTable estimates_table(const std::vector<ImpactEstimate>& estimates);

nlohmann::json estimates_json(const std::vector<ImpactEstimate>& estimates);

}  // namespace matext
