#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "matext/data.hpp"

namespace matext {

enum class LearnerKind { ridge, lasso, knn, regression_tree, bagged_forest, external };

std::string learner_kind_name(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

/// Learner configuration: a kind plus a named hyperparameter map.
/// Recognized hyperparameters by kind:
///   ridge/lasso: lambda (penalty >= 0, default 1.0)
///   knn:         k (neighbors >= 1, default 10)
///   regression_tree: max_depth (default 6), min_leaf (default 5)
///   bagged_forest:   n_trees (default 200), feature_subsample (default 1/3),
///                    min_leaf (default 5), max_depth (default 64), seed
/// external carries a predictions file path instead of hyperparameters.
struct PredictorSpec {
  LearnerKind kind = LearnerKind::ridge;
  std::map<std::string, double> hyperparams;
  bool standardize = true;
  std::string predictions_path;

  double get(const std::string& name, double fallback) const;
  int get_int(const std::string& name, int fallback) const;
  void validate() const;

  static PredictorSpec from_json(const nlohmann::json& j);
  static PredictorSpec from_json_file(const std::string& path);
  nlohmann::json to_json() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool leaf() const { return feature < 0; }
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict_row(const Eigen::MatrixXd& X, Eigen::Index row) const;
};

/// Immutable fitted model. Standardization statistics are taken from the
/// training rows only and are baked in; predict never touches query-set
/// statistics. Tree kinds operate on raw features (split points are
/// affine-invariant), so their stats are stored but unused.
class FittedPredictor {
 public:
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  const PredictorSpec& spec() const { return spec_; }
  double training_r2() const { return training_r2_; }
  const Eigen::VectorXd& feature_means() const { return mean_; }
  const Eigen::VectorXd& feature_sds() const { return sd_; }

  /// Linear kinds only: slopes in standardized feature space and intercept.
  const Eigen::VectorXd& coefficients() const { return beta_; }
  double intercept() const { return intercept_; }
  const std::vector<TreeModel>& trees() const { return trees_; }

 private:
  friend FittedPredictor fit(const PredictorSpec&, const Eigen::MatrixXd&,
                             const Eigen::VectorXd&, std::optional<std::uint64_t>);
  PredictorSpec spec_;
  int p_ = 0;
  Eigen::VectorXd mean_, sd_;
  Eigen::VectorXd beta_;
  double intercept_ = 0.0;
  Eigen::MatrixXd knn_z_;
  Eigen::VectorXd knn_y_;
  std::vector<TreeModel> trees_;
  double training_r2_ = 0.0;
};

/// Fits one model. Ridge and lasso minimize
///   (1/2n)||y - Xb||^2 + lambda*P(b)   (P = L1 for lasso, L2/2 for ridge)
/// by cyclic coordinate descent on standardized features to tolerance 1e-8
/// on the max coefficient change, at most 10,000 sweeps; the intercept is
/// never penalized. seed_override replaces the spec's seed hyperparameter
/// (forest bootstrap), letting callers derive per-fold streams.
FittedPredictor fit(const PredictorSpec& spec, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y,
                    std::optional<std::uint64_t> seed_override = {});

enum class CrossFitMode { pure_crossfit, cv_departure };

std::string crossfit_mode_name(CrossFitMode mode);
CrossFitMode crossfit_mode_from_string(const std::string& name);

struct CrossFitPlan {
  int K = 5;
  CrossFitMode mode = CrossFitMode::pure_crossfit;
  bool per_arm_models = true;
  std::uint64_t seed = 0;

  static CrossFitPlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Cross-fitting bookkeeping. Model groups are arms when per_arm_models,
/// otherwise the single group 0. fold_training_rows[k][g] lists the document
/// indices the (partition k, group g) model was trained on;
/// final_training_rows[g] is the full-coded-set model of cv_departure mode.
/// For the external kind partition_of is all -1 and no models are fitted.
struct CrossFitResult {
  std::vector<double> predictions;
  std::vector<int> partition_of;
  std::vector<std::vector<std::vector<std::size_t>>> fold_training_rows;
  std::vector<std::vector<std::size_t>> final_training_rows;
};

/// Out-of-sample predictions for every document. Partitions are stratified
/// by (arm x coded): each stratum is shuffled then dealt round-robin, so
/// every partition holds ~1/K of the coded and uncoded documents of each
/// arm. pure_crossfit predicts each document from a model whose training
/// set excludes it; cv_departure gives coded documents out-of-fold
/// predictions and uncoded documents predictions from a model trained on
/// the entire coded set.
CrossFitResult cross_fit_detail(const Experiment& exp, const PredictorSpec& spec,
                                const CrossFitPlan& plan);
std::vector<double> cross_fit_predict(const Experiment& exp, const PredictorSpec& spec,
                                      const CrossFitPlan& plan);

/// Picks the grid point with the highest out-of-fold R^2
/// (1 - var(residual)/var(y)); ties go to the earliest grid entry.
std::pair<PredictorSpec, double> tune_cv(const std::vector<PredictorSpec>& grid,
                                         const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         int folds = 5, std::uint64_t seed = 0);

/// Reads a delimited (id, predicted_score) file that must cover every
/// document id exactly once; result is aligned to document order.
std::vector<double> read_external_predictions(const std::string& path, const Experiment& exp);

}  // namespace matext
