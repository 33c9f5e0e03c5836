#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "matext/data.hpp"
#include "matext/estimators.hpp"
#include "matext/learners.hpp"

namespace matext {

enum class DGPMode { synthetic, resample_file };
enum class EffectMode { constant_shift, feature_shift };

/// Data-generating process for the Monte Carlo harness. The synthetic mode
/// draws iid standard-normal features and builds
///   Y(0) = s * (sum of the first min(10, p_features) features
///               + 0.5 (X_0^2 - 1) + 0.5 X_0 X_1)  + pretest_beta * W + noise
/// with s calibrated so the systematic part explains `signal` of the outcome
/// variance; linear_only drops the quadratic and interaction terms. tau is
/// the treatment effect in sd(Y(0)) units. Under constant_shift,
/// Y(1) = Y(0) + tau * sigma0; under feature_shift the same effect enters by
/// shifting feature 2 (linear-only in the outcome) for treated documents, so
/// treated and control features have different distributions.
/// resample_file mode treats a fully scored corpus file as the population
/// and draws the experimental sample from it without replacement.
struct DGPSpec {
  DGPMode mode = DGPMode::synthetic;
  int N = 1000;
  double p = 0.5;
  int p_features = 10;
  double signal = 0.6;
  double tau = 0.0;
  double noise_sd = -1.0;  // negative means sqrt(1 - signal), giving sd(Y(0)) = 1
  EffectMode effect_mode = EffectMode::constant_shift;
  bool linear_only = false;
  double pretest_beta = 0.0;  // nonzero adds a baseline covariate with this slope
  std::uint64_t seed = 0;
  std::string corpus_path;
  std::string corpus_schema;  // optional schema JSON for the corpus file

  void validate() const;
  double resolved_noise_sd() const;
  /// Synthetic mode: the model-implied sd of Y(0) (used to convert tau).
  double theoretical_sigma0() const;

  static DGPSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// A finite population with both potential outcomes known. Replications
/// redraw the treatment assignment when reassignable (synthetic and
/// resampled populations); a population built from an observed experiment
/// keeps its realized assignment fixed and only the coding sample varies.
struct Population {
  DGPMode mode = DGPMode::synthetic;
  int N_experiment = 0;  // experimental sample size per replication
  double p = 0.5;
  Eigen::MatrixXd X;
  std::optional<Eigen::MatrixXd> covariates;
  std::vector<double> y0, y1;
  std::vector<int> arm;
  bool reassignable = true;
  double feature_shift_delta = 0.0;
  int feature_shift_index = -1;

  int size() const { return static_cast<int>(y0.size()); }
  double tau_true() const;
  double sigma0() const;  // plug-in sd of Y(0) over the population

  static Population from_observed(const Experiment& exp);
};

Population generate_population(const DGPSpec& dgp);

struct SimCondition {
  int n = 100;  // total coding budget, split across arms proportionally
  PredictorSpec learner;
  CrossFitPlan crossfit;
  int replications = 2000;

  static SimCondition from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr int kEstimatorSlots = 5;
extern const std::array<EstimatorMethod, kEstimatorSlots> kEstimatorOrder;

/// One replication: assign (unless fixed), draw the coding sample, cross-fit,
/// estimate. Slots follow kEstimatorOrder; the covariate_adjusted slot is
/// NaN unless the population carries covariates.
struct ReplicationResult {
  std::array<double, kEstimatorSlots> tau_hat{};
  std::array<double, kEstimatorSlots> se_hat{};
  double pretest_coef = 0.0, pretest_se = 0.0;  // first covariate, when present
};

ReplicationResult run_replication(const Population& pop, const SimCondition& condition,
                                  std::uint64_t seed);

struct MetricRow {
  int condition = 0;
  int n = 0;
  int replications = 0;
  std::string estimator;
  double mean_tau = 0.0;
  double emp_var = 0.0;
  double mean_se2 = 0.0;
  double power = 0.0;
  double re = 0.0;
  double rb = 0.0;
  double coverage = 0.0;
  double rejection_rate = 0.0;
  double mc_se_mean = 0.0;
  double mc_se_power = 0.0;
  double mc_se_re = 0.0;
  double mc_se_rb = 0.0;
  double mc_se_coverage = 0.0;
};

struct SimulationReport {
  double tau_true = 0.0;
  double sigma0 = 0.0;
  double power_effect_sd = 0.25;
  std::vector<MetricRow> rows;

  nlohmann::json to_json() const;
  CsvTable to_table() const;
};

/// Runs every condition against one population generated from the DGP.
/// Replication r of condition c always uses the stream derived from
/// (dgp.seed, c, r), so the report is identical at any parallelism. Power is
/// computed from the empirical estimator variance via the normal
/// approximation at effect power_effect_sd * sigma0 (two-sided alpha 0.05);
/// rejection_rate doubles as injected-effect power when the DGP has tau > 0.
SimulationReport run_simulation(const DGPSpec& dgp, const std::vector<SimCondition>& conditions,
                                int parallelism = 1, double power_effect_sd = 0.25);

/// Coding-sample sensitivity on an observed, fully scored experiment:
/// B redraws of the coding sample with the assignment held fixed.
struct SensitivityResult {
  std::vector<double> ma_tau, ma_se, subset_tau, subset_se;
  double ma_rejection_rate = 0.0;
  double subset_rejection_rate = 0.0;

  nlohmann::json to_json() const;
};

SensitivityResult sensitivity_resample(const Experiment& exp, int n,
                                       const PredictorSpec& learner, const CrossFitPlan& plan,
                                       int B, std::uint64_t seed);

}  // namespace matext
