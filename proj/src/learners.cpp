#include "matext/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "matext/csv.hpp"
#include "matext/error.hpp"
#include "matext/rng.hpp"

namespace matext {

using nlohmann::json;

std::string learner_kind_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::ridge: return "ridge";
    case LearnerKind::lasso: return "lasso";
    case LearnerKind::knn: return "knn";
    case LearnerKind::regression_tree: return "regression_tree";
    case LearnerKind::bagged_forest: return "bagged_forest";
    case LearnerKind::external: return "external";
  }
  internal_check(false, "unreachable learner kind");
  return {};
}

LearnerKind learner_kind_from_string(const std::string& name) {
  if (name == "ridge") return LearnerKind::ridge;
  if (name == "lasso") return LearnerKind::lasso;
  if (name == "knn") return LearnerKind::knn;
  if (name == "regression_tree") return LearnerKind::regression_tree;
  if (name == "bagged_forest") return LearnerKind::bagged_forest;
  if (name == "external") return LearnerKind::external;
  throw Error(ErrorCode::InvalidPlan, "unknown learner kind '" + name + "'");
}

double PredictorSpec::get(const std::string& name, double fallback) const {
  const auto it = hyperparams.find(name);
  return it == hyperparams.end() ? fallback : it->second;
}

int PredictorSpec::get_int(const std::string& name, int fallback) const {
  const auto it = hyperparams.find(name);
  if (it == hyperparams.end()) return fallback;
  return static_cast<int>(std::llround(it->second));
}

void PredictorSpec::validate() const {
  switch (kind) {
    case LearnerKind::ridge:
    case LearnerKind::lasso:
      if (!(get("lambda", 1.0) >= 0.0))
        throw Error(ErrorCode::InvalidPlan, "penalty lambda must be >= 0");
      break;
    case LearnerKind::knn:
      if (get_int("k", 10) < 1) throw Error(ErrorCode::InvalidPlan, "knn k must be >= 1");
      break;
    case LearnerKind::regression_tree:
      if (get_int("max_depth", 6) < 1 || get_int("min_leaf", 5) < 1)
        throw Error(ErrorCode::InvalidPlan, "tree max_depth and min_leaf must be >= 1");
      break;
    case LearnerKind::bagged_forest: {
      if (get_int("n_trees", 200) < 1 || get_int("min_leaf", 5) < 1 ||
          get_int("max_depth", 64) < 1)
        throw Error(ErrorCode::InvalidPlan, "forest n_trees, min_leaf, max_depth must be >= 1");
      const double frac = get("feature_subsample", 1.0 / 3.0);
      if (!(frac > 0.0 && frac <= 1.0))
        throw Error(ErrorCode::InvalidPlan, "feature_subsample must lie in (0,1]");
      break;
    }
    case LearnerKind::external:
      if (predictions_path.empty())
        throw Error(ErrorCode::InvalidPlan, "external predictor needs a predictions file path");
      break;
  }
}

PredictorSpec PredictorSpec::from_json(const json& j) {
  PredictorSpec spec;
  spec.kind = learner_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("standardize")) spec.standardize = j.at("standardize").get<bool>();
  if (j.contains("hyperparams"))
    for (const auto& [key, value] : j.at("hyperparams").items())
      spec.hyperparams[key] = value.get<double>();
  if (j.contains("predictions")) spec.predictions_path = j.at("predictions").get<std::string>();
  spec.validate();
  return spec;
}

PredictorSpec PredictorSpec::from_json_file(const std::string& path) {
  return from_json(json::parse(read_text_file(path)));
}

json PredictorSpec::to_json() const {
  json j;
  j["kind"] = learner_kind_name(kind);
  j["standardize"] = standardize;
  j["hyperparams"] = hyperparams;
  if (!predictions_path.empty()) j["predictions"] = predictions_path;
  return j;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

void standardization_stats(const Eigen::MatrixXd& X, bool scale, Eigen::VectorXd& mean,
                           Eigen::VectorXd& sd) {
  const auto n = static_cast<double>(X.rows());
  mean = X.colwise().mean();
  sd.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    // Population sd; constant columns get sd 1 so they standardize to zero.
    const double var = (X.col(j).array() - mean(j)).square().sum() / n;
    sd(j) = scale && var > 0.0 ? std::sqrt(var) : 1.0;
  }
  if (!scale) sd.setOnes();
}

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& X, const Eigen::VectorXd& mean,
                                      const Eigen::VectorXd& sd) {
  Eigen::MatrixXd Z = X.rowwise() - mean.transpose();
  Z.array().rowwise() /= sd.transpose().array();
  return Z;
}

double soft_threshold(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

Eigen::VectorXd coordinate_descent(const Eigen::MatrixXd& Z, const Eigen::VectorXd& yc,
                                   double lambda, bool l1) {
  const Eigen::Index n = Z.rows(), p = Z.cols();
  const double dn = static_cast<double>(n);
  Eigen::VectorXd v(p);
  for (Eigen::Index j = 0; j < p; ++j) v(j) = Z.col(j).squaredNorm() / dn;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r = yc;
  constexpr double kTol = 1e-8;
  constexpr int kMaxSweeps = 10000;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (v(j) == 0.0) continue;
      const double rho = Z.col(j).dot(r) / dn + v(j) * beta(j);
      const double next = l1 ? soft_threshold(rho, lambda) / v(j) : rho / (v(j) + lambda);
      const double change = next - beta(j);
      if (change != 0.0) {
        r -= Z.col(j) * change;
        beta(j) = next;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change < kTol) break;
  }
  return beta;
}

struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  int max_depth;
  int min_leaf;
  int mtry;   // features considered per node; == p disables subsampling
  Rng* rng;   // drives the per-node feature draw; null when mtry == p
  std::vector<TreeNode> nodes;

  int build(std::vector<int>& rows, int depth) {
    const int node = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0;
    for (int i : rows) sum += y(i);
    const int n = static_cast<int>(rows.size());
    nodes[node].value = sum / n;

    if (depth >= max_depth || n < 2 * min_leaf) return node;

    const int p = static_cast<int>(X.cols());
    std::vector<std::size_t> candidates;
    if (mtry >= p) {
      candidates.resize(p);
      std::iota(candidates.begin(), candidates.end(), 0);
    } else {
      candidates = rng->sample_without_replacement(p, mtry);
    }

    double best_sse = std::numeric_limits<double>::infinity();
    int best_feature = -1, best_pos = -1;
    double best_threshold = 0.0;
    std::vector<int> order(rows), best_order;
    std::vector<double> prefix_sum(n + 1), prefix_sq(n + 1);

    for (std::size_t feature : candidates) {
      const int j = static_cast<int>(feature);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return X(a, j) != X(b, j) ? X(a, j) < X(b, j) : a < b;
      });
      prefix_sum[0] = prefix_sq[0] = 0.0;
      for (int k = 0; k < n; ++k) {
        prefix_sum[k + 1] = prefix_sum[k] + y(order[k]);
        prefix_sq[k + 1] = prefix_sq[k] + y(order[k]) * y(order[k]);
      }
      for (int k = min_leaf; k <= n - min_leaf; ++k) {
        if (X(order[k - 1], j) == X(order[k], j)) continue;
        const double ls = prefix_sum[k], rs = prefix_sum[n] - ls;
        const double lq = prefix_sq[k], rq = prefix_sq[n] - lq;
        const double sse = (lq - ls * ls / k) + (rq - rs * rs / (n - k));
        // Strict comparison keeps the lowest feature index, then the lowest
        // threshold, on ties.
        if (sse < best_sse) {
          best_sse = sse;
          best_feature = j;
          best_pos = k;
          best_threshold = 0.5 * (X(order[k - 1], j) + X(order[k], j));
          best_order = order;
        }
      }
    }
    if (best_feature < 0) return node;

    std::vector<int> left_rows(best_order.begin(), best_order.begin() + best_pos);
    std::vector<int> right_rows(best_order.begin() + best_pos, best_order.end());
    nodes[node].feature = best_feature;
    nodes[node].threshold = best_threshold;
    const int left = build(left_rows, depth + 1);
    nodes[node].left = left;
    const int right = build(right_rows, depth + 1);
    nodes[node].right = right;
    return node;
  }
};

TreeModel build_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<int> rows,
                     int max_depth, int min_leaf, int mtry, Rng* rng) {
  TreeBuilder builder{X, y, max_depth, min_leaf, mtry, rng, {}};
  builder.build(rows, 0);
  return TreeModel{std::move(builder.nodes)};
}

double r2_or_degenerate(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  const double ybar = y.mean();
  const double sst = (y.array() - ybar).square().sum();
  const double sse = (y - yhat).squaredNorm();
  if (sst == 0.0) return sse == 0.0 ? 1.0 : 0.0;
  return 1.0 - sse / sst;
}

}  // namespace

double TreeModel::predict_row(const Eigen::MatrixXd& X, Eigen::Index row) const {
  int node = 0;
  while (!nodes[node].leaf())
    node = X(row, nodes[node].feature) <= nodes[node].threshold ? nodes[node].left
                                                                : nodes[node].right;
  return nodes[node].value;
}

FittedPredictor fit(const PredictorSpec& spec, const Eigen::MatrixXd& X,
                    const Eigen::VectorXd& y, std::optional<std::uint64_t> seed_override) {
  spec.validate();
  if (spec.kind == LearnerKind::external)
    throw Error(ErrorCode::InvalidPlan, "external predictor has no fit step");
  if (X.rows() < 2)
    throw Error(ErrorCode::DegenerateTraining,
                "need at least 2 training rows, got " + std::to_string(X.rows()));
  if (X.cols() < 1) throw Error(ErrorCode::DegenerateTraining, "need at least one feature");
  if (X.rows() != y.size())
    throw Error(ErrorCode::LengthMismatch, "X rows and y length differ");
  if (!X.allFinite() || !y.allFinite())
    throw Error(ErrorCode::NonFiniteInput, "training data contains non-finite values");

  FittedPredictor model;
  model.spec_ = spec;
  model.p_ = static_cast<int>(X.cols());
  standardization_stats(X, spec.standardize, model.mean_, model.sd_);

  switch (spec.kind) {
    case LearnerKind::ridge:
    case LearnerKind::lasso: {
      const Eigen::MatrixXd Z = apply_standardization(X, model.mean_, model.sd_);
      const double ybar = y.mean();
      const Eigen::VectorXd yc = y.array() - ybar;
      model.beta_ = coordinate_descent(Z, yc, spec.get("lambda", 1.0),
                                       spec.kind == LearnerKind::lasso);
      model.intercept_ = ybar;
      break;
    }
    case LearnerKind::knn: {
      const int k = spec.get_int("k", 10);
      if (k > X.rows())
        throw Error(ErrorCode::DegenerateTraining,
                    "knn k=" + std::to_string(k) + " exceeds training size " +
                        std::to_string(X.rows()));
      model.knn_z_ = apply_standardization(X, model.mean_, model.sd_);
      model.knn_y_ = y;
      break;
    }
    case LearnerKind::regression_tree: {
      std::vector<int> rows(X.rows());
      std::iota(rows.begin(), rows.end(), 0);
      model.trees_.push_back(build_tree(X, y, std::move(rows), spec.get_int("max_depth", 6),
                                        spec.get_int("min_leaf", 5),
                                        static_cast<int>(X.cols()), nullptr));
      break;
    }
    case LearnerKind::bagged_forest: {
      const int n_trees = spec.get_int("n_trees", 200);
      const int min_leaf = spec.get_int("min_leaf", 5);
      const int max_depth = spec.get_int("max_depth", 64);
      const double frac = spec.get("feature_subsample", 1.0 / 3.0);
      const int p = static_cast<int>(X.cols());
      const int mtry = std::max(1, static_cast<int>(std::floor(frac * p)));
      const std::uint64_t seed = seed_override.value_or(
          static_cast<std::uint64_t>(spec.get("seed", 0.0)));
      const int n = static_cast<int>(X.rows());
      model.trees_.reserve(n_trees);
      for (int b = 0; b < n_trees; ++b) {
        Rng tree_rng(mix_seed(seed, static_cast<std::uint64_t>(b) + 1));
        std::vector<int> rows(n);
        for (int i = 0; i < n; ++i) rows[i] = static_cast<int>(tree_rng.below(n));
        model.trees_.push_back(
            build_tree(X, y, std::move(rows), max_depth, min_leaf, mtry, &tree_rng));
      }
      break;
    }
    case LearnerKind::external:
      break;  // unreachable, rejected above
  }

  model.training_r2_ = r2_or_degenerate(y, model.predict(X));
  return model;
}

Eigen::VectorXd FittedPredictor::predict(const Eigen::MatrixXd& X) const {
  if (X.cols() != p_)
    throw Error(ErrorCode::WidthMismatch,
                "query has " + std::to_string(X.cols()) + " features, model expects " +
                    std::to_string(p_));
  const Eigen::Index m = X.rows();
  Eigen::VectorXd out(m);
  switch (spec_.kind) {
    case LearnerKind::ridge:
    case LearnerKind::lasso: {
      const Eigen::MatrixXd Z = apply_standardization(X, mean_, sd_);
      out = Z * beta_;
      out.array() += intercept_;
      break;
    }
    case LearnerKind::knn: {
      const Eigen::MatrixXd Z = apply_standardization(X, mean_, sd_);
      const int k = spec_.get_int("k", 10);
      const Eigen::Index n = knn_z_.rows();
      std::vector<std::pair<double, Eigen::Index>> dist(n);
      for (Eigen::Index q = 0; q < m; ++q) {
        for (Eigen::Index i = 0; i < n; ++i)
          dist[i] = {(knn_z_.row(i) - Z.row(q)).squaredNorm(), i};
        // Lexicographic order resolves distance ties by lower row index.
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        double sum = 0.0;
        for (int t = 0; t < k; ++t) sum += knn_y_(dist[t].second);
        out(q) = sum / k;
      }
      break;
    }
    case LearnerKind::regression_tree:
    case LearnerKind::bagged_forest: {
      for (Eigen::Index q = 0; q < m; ++q) {
        double sum = 0.0;
        for (const TreeModel& tree : trees_) sum += tree.predict_row(X, q);
        out(q) = sum / static_cast<double>(trees_.size());
      }
      break;
    }
    case LearnerKind::external:
      internal_check(false, "external predictor cannot predict");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validated tuning

std::pair<PredictorSpec, double> tune_cv(const std::vector<PredictorSpec>& grid,
                                         const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         int folds, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "tuning grid is empty");
  if (folds < 2) throw Error(ErrorCode::InvalidPlan, "cross-validation needs >= 2 folds");
  const Eigen::Index n = X.rows();
  if (n < folds)
    throw Error(ErrorCode::DegenerateTraining, "fewer rows than cross-validation folds");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0x7u));
  rng.shuffle(perm);
  std::vector<int> fold_of(n);
  for (Eigen::Index t = 0; t < n; ++t) fold_of[perm[t]] = static_cast<int>(t % folds);

  const double var_y = (y.array() - y.mean()).square().sum() / static_cast<double>(n - 1);

  double best_r2 = -std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    Eigen::VectorXd residual(n);
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
      Eigen::MatrixXd Xtr(train.size(), X.cols()), Xte(test.size(), X.cols());
      Eigen::VectorXd ytr(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        Xtr.row(i) = X.row(train[i]);
        ytr(i) = y(train[i]);
      }
      for (std::size_t i = 0; i < test.size(); ++i) Xte.row(i) = X.row(test[i]);
      const FittedPredictor model =
          fit(grid[s], Xtr, ytr, mix_seed(seed, s + 1, static_cast<std::uint64_t>(f) + 1));
      const Eigen::VectorXd pred = model.predict(Xte);
      for (std::size_t i = 0; i < test.size(); ++i) residual(test[i]) = y(test[i]) - pred(i);
    }
    const double var_e =
        (residual.array() - residual.mean()).square().sum() / static_cast<double>(n - 1);
    const double r2 = var_y == 0.0 ? (var_e == 0.0 ? 1.0 : 0.0) : 1.0 - var_e / var_y;
    if (r2 > best_r2) {
      best_r2 = r2;
      best_index = s;
    }
  }
  return {grid[best_index], best_r2};
}

// ---------------------------------------------------------------------------
// Cross-fitting

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd sub(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) sub.row(i) = X.row(rows[i]);
  return sub;
}

}  // namespace

std::string crossfit_mode_name(CrossFitMode mode) {
  return mode == CrossFitMode::pure_crossfit ? "pure_crossfit" : "cv_departure";
}

CrossFitMode crossfit_mode_from_string(const std::string& name) {
  if (name == "pure_crossfit") return CrossFitMode::pure_crossfit;
  if (name == "cv_departure") return CrossFitMode::cv_departure;
  throw Error(ErrorCode::InvalidPlan, "unknown cross-fit mode '" + name + "'");
}

CrossFitPlan CrossFitPlan::from_json(const json& j) {
  CrossFitPlan plan;
  if (j.contains("K")) plan.K = j.at("K").get<int>();
  if (j.contains("mode")) plan.mode = crossfit_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("per_arm_models")) plan.per_arm_models = j.at("per_arm_models").get<bool>();
  if (j.contains("seed")) plan.seed = j.at("seed").get<std::uint64_t>();
  return plan;
}

json CrossFitPlan::to_json() const {
  json j;
  j["K"] = K;
  j["mode"] = crossfit_mode_name(mode);
  j["per_arm_models"] = per_arm_models;
  j["seed"] = seed;
  return j;
}

CrossFitResult cross_fit_detail(const Experiment& exp, const PredictorSpec& spec,
                                const CrossFitPlan& plan) {
  spec.validate();
  const int N = exp.N();

  if (spec.kind == LearnerKind::external) {
    CrossFitResult result;
    result.predictions = read_external_predictions(spec.predictions_path, exp);
    result.partition_of.assign(N, -1);
    return result;
  }

  if (plan.K < 2) throw Error(ErrorCode::InvalidPlan, "cross-fitting needs K >= 2 partitions");
  const int groups = plan.per_arm_models ? 2 : 1;
  for (int g = 0; g < groups; ++g) {
    const int coded = plan.per_arm_models ? exp.n_arm(g) : exp.n1() + exp.n0();
    if (coded < plan.K)
      throw Error(ErrorCode::InsufficientCoded,
                  (plan.per_arm_models ? "arm " + std::to_string(g) : std::string("experiment")) +
                      " has " + std::to_string(coded) + " coded documents, need >= " +
                      std::to_string(plan.K));
  }

  CrossFitResult result;
  result.predictions.assign(N, 0.0);
  result.partition_of.assign(N, -1);
  result.fold_training_rows.assign(plan.K, std::vector<std::vector<std::size_t>>(groups));
  result.final_training_rows.assign(groups, {});

  // Stratified partition: shuffle within each (arm x coded) stratum, then
  // deal round-robin so every partition receives ~1/K of each stratum.
  Rng rng(mix_seed(plan.seed, 0xC5u));
  for (int arm : {0, 1}) {
    for (bool coded : {true, false}) {
      std::vector<std::size_t> stratum;
      for (int i = 0; i < N; ++i)
        if (exp.doc(i).arm == arm && exp.doc(i).coded == coded)
          stratum.push_back(static_cast<std::size_t>(i));
      rng.shuffle(stratum);
      for (std::size_t t = 0; t < stratum.size(); ++t)
        result.partition_of[stratum[t]] = static_cast<int>(t % plan.K);
    }
  }

  const Eigen::MatrixXd X = exp.feature_matrix();
  const auto group_of = [&](int i) { return plan.per_arm_models ? exp.doc(i).arm : 0; };

  for (int g = 0; g < groups; ++g) {
    std::vector<std::size_t> coded_rows;
    for (int i = 0; i < N; ++i)
      if (group_of(i) == g && exp.doc(i).coded) coded_rows.push_back(i);

    for (int k = 0; k < plan.K; ++k) {
      std::vector<std::size_t> train;
      for (std::size_t i : coded_rows)
        if (result.partition_of[i] != k) train.push_back(i);

      std::vector<std::size_t> targets;
      for (int i = 0; i < N; ++i) {
        if (group_of(i) != g || result.partition_of[i] != k) continue;
        if (plan.mode == CrossFitMode::pure_crossfit || exp.doc(i).coded)
          targets.push_back(static_cast<std::size_t>(i));
      }

      result.fold_training_rows[k][g] = train;
      if (targets.empty()) continue;
      Eigen::VectorXd ytr(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) ytr(i) = *exp.doc(train[i]).human_score;
      const FittedPredictor model =
          fit(spec, rows_of(X, train), ytr,
              mix_seed(plan.seed, static_cast<std::uint64_t>(k) + 1,
                       static_cast<std::uint64_t>(g) + 1));
      const Eigen::VectorXd pred = model.predict(rows_of(X, targets));
      for (std::size_t i = 0; i < targets.size(); ++i) result.predictions[targets[i]] = pred(i);
    }

    if (plan.mode == CrossFitMode::cv_departure) {
      std::vector<std::size_t> targets;
      for (int i = 0; i < N; ++i)
        if (group_of(i) == g && !exp.doc(i).coded) targets.push_back(static_cast<std::size_t>(i));
      result.final_training_rows[g] = coded_rows;
      if (!targets.empty()) {
        Eigen::VectorXd ytr(coded_rows.size());
        for (std::size_t i = 0; i < coded_rows.size(); ++i)
          ytr(i) = *exp.doc(coded_rows[i]).human_score;
        const FittedPredictor model =
            fit(spec, rows_of(X, coded_rows), ytr,
                mix_seed(plan.seed, 0, static_cast<std::uint64_t>(g) + 1));
        const Eigen::VectorXd pred = model.predict(rows_of(X, targets));
        for (std::size_t i = 0; i < targets.size(); ++i)
          result.predictions[targets[i]] = pred(i);
      }
    }
  }
  return result;
}

std::vector<double> cross_fit_predict(const Experiment& exp, const PredictorSpec& spec,
                                      const CrossFitPlan& plan) {
  return cross_fit_detail(exp, spec, plan).predictions;
}

std::vector<double> read_external_predictions(const std::string& path, const Experiment& exp) {
  const CsvTable table = read_csv(path);
  const int id_col = table.require_col("id");
  const int pred_col = table.require_col("predicted_score");
  if (table.rows.size() != static_cast<std::size_t>(exp.N()))
    throw Error(ErrorCode::LengthMismatch,
                "predictions file has " + std::to_string(table.rows.size()) + " rows for " +
                    std::to_string(exp.N()) + " documents");
  std::map<std::string, double> by_id;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& id = table.rows[r][id_col];
    double value = 0.0;
    try {
      value = std::stod(table.rows[r][pred_col]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::SchemaMismatch,
                  "row " + std::to_string(r + 1) + ": unparseable predicted_score");
    }
    if (!std::isfinite(value))
      throw Error(ErrorCode::NonFiniteInput, "prediction for '" + id + "' is non-finite");
    if (!by_id.emplace(id, value).second)
      throw Error(ErrorCode::DuplicateId, "duplicate prediction for id '" + id + "'");
  }
  std::vector<double> preds;
  preds.reserve(exp.N());
  for (const auto& d : exp.documents()) {
    const auto it = by_id.find(d.id);
    if (it == by_id.end())
      throw Error(ErrorCode::SchemaMismatch, "no prediction for document '" + d.id + "'");
    preds.push_back(it->second);
  }
  return preds;
}

}  // namespace matext
