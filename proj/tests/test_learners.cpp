#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "matext/csv.hpp"
#include "matext/data.hpp"
#include "matext/error.hpp"
#include "matext/learners.hpp"
#include "matext/rng.hpp"

using matext::Error;
using matext::ErrorCode;
using matext::Experiment;
using matext::FittedPredictor;
using matext::LearnerKind;
using matext::PredictorSpec;

namespace {

PredictorSpec make_spec(LearnerKind kind, std::map<std::string, double> hp = {}) {
  PredictorSpec spec;
  spec.kind = kind;
  spec.hyperparams = std::move(hp);
  return spec;
}

Eigen::MatrixXd random_matrix(matext::Rng* rng, int n, int p) {
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng->normal();
  return X;
}

/// Population-sd standardization, written independently of the library.
void standardize(const Eigen::MatrixXd& X, Eigen::MatrixXd* Z) {
  const int n = int(X.rows());
  *Z = X;
  for (int j = 0; j < X.cols(); ++j) {
    const double m = X.col(j).mean();
    double v = (X.col(j).array() - m).square().sum() / n;
    const double s = v > 0 ? std::sqrt(v) : 1.0;
    Z->col(j) = (X.col(j).array() - m) / s;
  }
}

double lasso_objective(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta, double intercept, double lambda) {
  const int n = int(Z.rows());
  const double rss = (y.array() - intercept - (Z * beta).array()).square().sum();
  return rss / (2.0 * n) + lambda * beta.cwiseAbs().sum();
}

/// Global lasso minimum by enumerating all 3^p sign patterns and solving the
/// stationarity system restricted to each pattern's active set.
double lasso_oracle_objective(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double lambda) {
  const int n = int(Z.rows());
  const int p = int(Z.cols());
  const double ybar = y.mean();
  const Eigen::VectorXd yc = y.array() - ybar;
  double best = yc.squaredNorm() / (2.0 * n);  // all-zero pattern
  std::vector<int> signs(p, -1);
  const int patterns = int(std::pow(3, p));
  for (int code = 1; code < patterns; ++code) {
    int c = code;
    for (int j = 0; j < p; ++j, c /= 3) signs[j] = (c % 3) - 1;
    std::vector<int> active;
    for (int j = 0; j < p; ++j)
      if (signs[j] != 0) active.push_back(j);
    if (active.empty()) continue;
    const int a = int(active.size());
    Eigen::MatrixXd G(a, a);
    Eigen::VectorXd r(a);
    for (int u = 0; u < a; ++u) {
      for (int v = 0; v < a; ++v)
        G(u, v) = Z.col(active[u]).dot(Z.col(active[v])) / n;
      r(u) = Z.col(active[u]).dot(yc) / n - lambda * signs[active[u]];
    }
    const Eigen::VectorXd ba = G.fullPivLu().solve(r);
    bool consistent = true;
    for (int u = 0; u < a && consistent; ++u)
      if (ba(u) * signs[active[u]] < 0) consistent = false;
    if (!consistent) continue;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int u = 0; u < a; ++u) beta(active[u]) = ba(u);
    best = std::min(best, lasso_objective(Z, y, beta, ybar, lambda));
  }
  return best;
}

}  // namespace

TEST_CASE("lasso matches the sign-pattern enumeration oracle") {
  matext::Rng rng(1001);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20, p = 3;
    const Eigen::MatrixXd X = random_matrix(&rng, n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i)
      y(i) = 1.2 * X(i, 0) - 0.4 * X(i, 1) + rng.normal(0.0, 0.5);
    const double lambda = 0.01 + 0.3 * rng.uniform01();

    const auto model = matext::fit(make_spec(LearnerKind::lasso, {{"lambda", lambda}}), X, y);
    Eigen::MatrixXd Z;
    standardize(X, &Z);
    const double fitted = lasso_objective(Z, y, model.coefficients(), model.intercept(), lambda);
    const double oracle = lasso_oracle_objective(Z, y, lambda);
    CHECK(fitted <= oracle + 1e-6);
    CHECK(fitted >= oracle - 1e-9);  // oracle is the global minimum
  }
}

TEST_CASE("ridge matches its closed form") {
  matext::Rng rng(1002);
  const int n = 40, p = 4;
  const Eigen::MatrixXd X = random_matrix(&rng, n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i)
    y(i) = 2.0 + X(i, 0) - 0.5 * X(i, 2) + rng.normal(0.0, 0.3);
  Eigen::MatrixXd Z;
  standardize(X, &Z);
  const Eigen::VectorXd yc = y.array() - y.mean();
  for (const double lambda : {0.0, 0.1, 1.0, 10.0}) {
    const auto model = matext::fit(make_spec(LearnerKind::ridge, {{"lambda", lambda}}), X, y);
    const Eigen::MatrixXd A =
        Z.transpose() * Z / double(n) + lambda * Eigen::MatrixXd::Identity(p, p);
    const Eigen::VectorXd closed = A.ldlt().solve(Z.transpose() * yc / double(n));
    CHECK((model.coefficients() - closed).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(model.intercept() == doctest::Approx(y.mean()));
  }
}

TEST_CASE("ridge at lambda 0 recovers least squares predictions") {
  matext::Rng rng(1003);
  const int n = 30, p = 3;
  const Eigen::MatrixXd X = random_matrix(&rng, n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 1.0 + 0.7 * X(i, 1) + rng.normal(0.0, 0.2);
  const auto model = matext::fit(make_spec(LearnerKind::ridge, {{"lambda", 0.0}}), X, y);

  Eigen::MatrixXd D(n, p + 1);
  D.col(0).setOnes();
  D.rightCols(p) = X;
  const Eigen::VectorXd beta = (D.transpose() * D).ldlt().solve(D.transpose() * y);
  const Eigen::VectorXd ols = D * beta;
  CHECK((model.predict(X) - ols).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("lasso zeroes every slope past the critical penalty") {
  matext::Rng rng(1004);
  const int n = 25, p = 3;
  const Eigen::MatrixXd X = random_matrix(&rng, n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = X(i, 0) + rng.normal();
  Eigen::MatrixXd Z;
  standardize(X, &Z);
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double lambda_max = (Z.transpose() * yc / double(n)).cwiseAbs().maxCoeff();

  const auto at = matext::fit(make_spec(LearnerKind::lasso, {{"lambda", lambda_max * 1.0001}}), X, y);
  CHECK(at.coefficients().cwiseAbs().maxCoeff() == 0.0);
  const auto below =
      matext::fit(make_spec(LearnerKind::lasso, {{"lambda", lambda_max * 0.9}}), X, y);
  CHECK(below.coefficients().cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("ridge coefficient norm shrinks as lambda grows") {
  matext::Rng rng(1005);
  const Eigen::MatrixXd X = random_matrix(&rng, 50, 4);
  Eigen::VectorXd y(50);
  for (int i = 0; i < 50; ++i) y(i) = X(i, 0) - X(i, 3) + rng.normal(0.0, 0.4);
  double last = 1e18;
  for (const double lambda : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0}) {
    const auto model = matext::fit(make_spec(LearnerKind::ridge, {{"lambda", lambda}}), X, y);
    const double norm = model.coefficients().norm();
    CHECK(norm <= last + 1e-12);
    last = norm;
  }
}

TEST_CASE("constant feature columns get zero coefficients") {
  matext::Rng rng(1006);
  Eigen::MatrixXd X = random_matrix(&rng, 30, 3);
  X.col(1).setConstant(5.0);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) y(i) = X(i, 0) + rng.normal(0.0, 0.1);
  for (const auto kind : {LearnerKind::ridge, LearnerKind::lasso}) {
    const auto model = matext::fit(make_spec(kind, {{"lambda", 0.5}}), X, y);
    CHECK(model.coefficients()(1) == 0.0);
  }
}

TEST_CASE("standardized fits are invariant to feature rescaling") {
  matext::Rng rng(1007);
  const Eigen::MatrixXd X = random_matrix(&rng, 40, 3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y(i) = X(i, 0) + 2.0 * X(i, 2) + rng.normal(0.0, 0.3);
  Eigen::MatrixXd Xs = X;
  Xs.col(0) *= 1000.0;
  Xs.col(2) *= 0.001;
  for (const auto kind : {LearnerKind::ridge, LearnerKind::lasso}) {
    const auto a = matext::fit(make_spec(kind, {{"lambda", 0.3}}), X, y);
    const auto b = matext::fit(make_spec(kind, {{"lambda", 0.3}}), Xs, y);
    CHECK((a.predict(X) - b.predict(Xs)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("knn with one neighbor reproduces training labels") {
  matext::Rng rng(1008);
  const Eigen::MatrixXd X = random_matrix(&rng, 15, 2);
  Eigen::VectorXd y(15);
  for (int i = 0; i < 15; ++i) y(i) = rng.normal();
  const auto model = matext::fit(make_spec(LearnerKind::knn, {{"k", 1}}), X, y);
  CHECK((model.predict(X) - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("knn breaks distance ties by the lower row index") {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.0, 10.0;  // rows 0 and 1 are identical
  Eigen::VectorXd y(3);
  y << 1.0, 5.0, 9.0;
  const auto model = matext::fit(make_spec(LearnerKind::knn, {{"k", 1}}), X, y);
  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  CHECK(model.predict(q)(0) == 1.0);  // row 0 wins the tie

  const auto two = matext::fit(make_spec(LearnerKind::knn, {{"k", 2}}), X, y);
  CHECK(two.predict(q)(0) == 3.0);  // rows 0 and 1 averaged
}

TEST_CASE("knn k larger than the training set is degenerate") {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 1.0, 2.0;
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  try {
    matext::fit(make_spec(LearnerKind::knn, {{"k", 4}}), X, y);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateTraining);
  }
}

TEST_CASE("depth-one tree finds the obvious split") {
  Eigen::MatrixXd X(4, 1);
  X << 0.0, 1.0, 2.0, 3.0;
  Eigen::VectorXd y(4);
  y << 0.0, 0.0, 1.0, 1.0;
  const auto model =
      matext::fit(make_spec(LearnerKind::regression_tree, {{"max_depth", 1}, {"min_leaf", 1}}), X, y);
  REQUIRE(model.trees().size() == 1);
  const auto& tree = model.trees()[0];
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].feature == 0);
  CHECK(tree.nodes[0].threshold == 1.5);  // midpoint between 1 and 2
  Eigen::MatrixXd q(2, 1);
  q << 1.4, 1.6;
  const auto pred = model.predict(q);
  CHECK(pred(0) == 0.0);
  CHECK(pred(1) == 1.0);
}

TEST_CASE("tree respects the minimum leaf size") {
  Eigen::MatrixXd X(6, 1);
  X << 0, 1, 2, 3, 4, 5;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 10, 10, 10;
  const auto model =
      matext::fit(make_spec(LearnerKind::regression_tree, {{"max_depth", 8}, {"min_leaf", 3}}), X, y);
  // only the 3|3 split is admissible; children are pure so growth stops
  REQUIRE(model.trees()[0].nodes.size() == 3);
  CHECK(model.trees()[0].nodes[0].threshold == 2.5);
}

TEST_CASE("every learner recovers a constant outcome") {
  matext::Rng rng(1009);
  const Eigen::MatrixXd X = random_matrix(&rng, 20, 3);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 3.75);
  for (const auto kind : {LearnerKind::ridge, LearnerKind::lasso, LearnerKind::knn,
                          LearnerKind::regression_tree, LearnerKind::bagged_forest}) {
    PredictorSpec spec = make_spec(kind);
    if (kind == LearnerKind::bagged_forest) spec.hyperparams["n_trees"] = 10;
    const auto model = matext::fit(spec, X, y, 5u);
    const Eigen::MatrixXd q = random_matrix(&rng, 5, 3);
    CHECK((model.predict(q).array() - 3.75).abs().maxCoeff() < 1e-12);
    CHECK(model.training_r2() == 1.0);  // zero SSE on a zero-variance target
  }
}

TEST_CASE("forest is seed-deterministic") {
  matext::Rng rng(1010);
  const Eigen::MatrixXd X = random_matrix(&rng, 40, 3);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) y(i) = std::sin(X(i, 0)) + rng.normal(0.0, 0.2);
  const auto spec = make_spec(LearnerKind::bagged_forest, {{"n_trees", 25}});
  const auto a = matext::fit(spec, X, y, 11u);
  const auto b = matext::fit(spec, X, y, 11u);
  const auto c = matext::fit(spec, X, y, 12u);
  const Eigen::MatrixXd q = random_matrix(&rng, 10, 3);
  CHECK((a.predict(q) - b.predict(q)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.predict(q) - c.predict(q)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("bagging usually beats a single deep tree out of sample") {
  matext::Rng rng(1011);
  int forest_wins = 0;
  const int instances = 20;
  for (int t = 0; t < instances; ++t) {
    const int n = 60;
    const Eigen::MatrixXd X = random_matrix(&rng, n, 2);
    const Eigen::MatrixXd Xtest = random_matrix(&rng, 150, 2);
    auto smooth = [](double a, double b) { return std::sin(2.0 * a) + 0.5 * b * b; };
    Eigen::VectorXd y(n), ytest(150);
    for (int i = 0; i < n; ++i) y(i) = smooth(X(i, 0), X(i, 1)) + rng.normal(0.0, 0.3);
    for (int i = 0; i < 150; ++i) ytest(i) = smooth(Xtest(i, 0), Xtest(i, 1));

    const auto tree = matext::fit(
        make_spec(LearnerKind::regression_tree, {{"max_depth", 64}, {"min_leaf", 1}}), X, y);
    const auto forest = matext::fit(
        make_spec(LearnerKind::bagged_forest, {{"n_trees", 40}, {"min_leaf", 1}}), X, y,
        uint64_t(t));
    const double mse_tree = (tree.predict(Xtest) - ytest).squaredNorm();
    const double mse_forest = (forest.predict(Xtest) - ytest).squaredNorm();
    if (mse_forest < mse_tree) ++forest_wins;
  }
  CHECK(forest_wins >= 15);
}

TEST_CASE("fit rejects degenerate and malformed input") {
  Eigen::MatrixXd X(1, 2);
  X << 1.0, 2.0;
  Eigen::VectorXd y1(1);
  y1 << 1.0;
  CHECK_THROWS_AS(matext::fit(make_spec(LearnerKind::ridge), X, y1), Error);

  Eigen::MatrixXd X2(3, 1);
  X2 << 1, 2, 3;
  Eigen::VectorXd bad(2);
  bad << 1, 2;
  CHECK_THROWS_AS(matext::fit(make_spec(LearnerKind::ridge), X2, bad), Error);

  Eigen::VectorXd with_nan(3);
  with_nan << 1.0, std::nan(""), 2.0;
  CHECK_THROWS_AS(matext::fit(make_spec(LearnerKind::ridge), X2, with_nan), Error);

  CHECK_THROWS_AS(matext::fit(make_spec(LearnerKind::external), X2, Eigen::VectorXd::Zero(3)),
                  Error);
}

TEST_CASE("spec validation rejects bad hyperparameters") {
  CHECK_THROWS_AS(make_spec(LearnerKind::ridge, {{"lambda", -1.0}}).validate(), Error);
  CHECK_THROWS_AS(make_spec(LearnerKind::knn, {{"k", 0}}).validate(), Error);
  CHECK_THROWS_AS(make_spec(LearnerKind::regression_tree, {{"min_leaf", 0}}).validate(), Error);
  CHECK_THROWS_AS(
      make_spec(LearnerKind::bagged_forest, {{"feature_subsample", 1.5}}).validate(), Error);
  CHECK_NOTHROW(make_spec(LearnerKind::lasso, {{"lambda", 0.0}}).validate());
}

// ---------------------------------------------------------------------------
// cross-fitting

namespace {

matext::Document feature_doc(const std::string& id, int arm, std::vector<double> x,
                             std::optional<double> score, bool coded, double pi) {
  matext::Document d;
  d.id = id;
  d.arm = arm;
  d.features = std::move(x);
  d.human_score = score;
  d.coded = coded;
  if (coded) d.inclusion_prob = pi;
  return d;
}

/// Linear outcome over two features with noise; half of each arm coded.
Experiment crossfit_experiment(matext::Rng* rng, int per_arm = 30, int coded_per_arm = 15) {
  std::vector<matext::Document> docs;
  for (int arm = 1; arm >= 0; --arm) {
    for (int i = 0; i < per_arm; ++i) {
      const double x0 = rng->normal(), x1 = rng->normal();
      const double y = 1.0 + 2.0 * x0 - x1 + 0.3 * arm + rng->normal(0.0, 0.4);
      const bool coded = i < coded_per_arm;
      docs.push_back(feature_doc((arm ? "t" : "c") + std::to_string(i), arm, {x0, x1},
                                 coded ? std::optional<double>(y) : std::nullopt, coded,
                                 double(coded_per_arm) / per_arm));
    }
  }
  return Experiment::from_documents(std::move(docs));
}

}  // namespace

TEST_CASE("pure cross-fitting never trains a model on its own targets") {
  matext::Rng rng(2001);
  const Experiment exp = crossfit_experiment(&rng);
  matext::CrossFitPlan plan;
  plan.K = 5;
  plan.seed = 9;
  const auto spec = make_spec(LearnerKind::ridge, {{"lambda", 0.5}});
  const auto result = matext::cross_fit_detail(exp, spec, plan);

  REQUIRE(result.predictions.size() == std::size_t(exp.N()));
  REQUIRE(result.partition_of.size() == std::size_t(exp.N()));
  REQUIRE(result.fold_training_rows.size() == 5);

  for (int i = 0; i < exp.N(); ++i) {
    const int k = result.partition_of[i];
    REQUIRE(k >= 0);
    REQUIRE(k < 5);
    for (const auto& group_rows : result.fold_training_rows[k])
      CHECK(std::find(group_rows.begin(), group_rows.end(), std::size_t(i)) == group_rows.end());
  }
  // training rows are always coded documents
  for (const auto& per_group : result.fold_training_rows)
    for (const auto& rows : per_group)
      for (const auto r : rows) CHECK(exp.doc(r).coded);
}

TEST_CASE("partitions balance each stratum to within one document") {
  matext::Rng rng(2002);
  const Experiment exp = crossfit_experiment(&rng, 20, 11);
  matext::CrossFitPlan plan;
  plan.K = 4;
  plan.seed = 3;
  const auto result = matext::cross_fit_detail(exp, make_spec(LearnerKind::ridge), plan);
  for (const int arm : {0, 1}) {
    for (const bool coded : {true, false}) {
      std::vector<int> counts(plan.K, 0);
      for (int i = 0; i < exp.N(); ++i)
        if (exp.doc(i).arm == arm && exp.doc(i).coded == coded)
          ++counts[result.partition_of[i]];
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      CHECK(*hi - *lo <= 1);
    }
  }
}

TEST_CASE("cv-departure predicts uncoded documents from the full coded set") {
  matext::Rng rng(2003);
  const Experiment exp = crossfit_experiment(&rng);
  matext::CrossFitPlan plan;
  plan.mode = matext::CrossFitMode::cv_departure;
  plan.seed = 17;
  const auto spec = make_spec(LearnerKind::ridge, {{"lambda", 0.5}});
  const auto result = matext::cross_fit_detail(exp, spec, plan);

  REQUIRE(result.final_training_rows.size() == 2);
  for (int g = 0; g < 2; ++g) {
    const int arm = g;  // per-arm groups are indexed by arm
    std::vector<std::size_t> coded = exp.coded_indices(arm);
    auto rows = result.final_training_rows[arm];
    std::sort(rows.begin(), rows.end());
    CHECK(rows == coded);
  }

  // uncoded docs: reproduce the final-model prediction by refitting by hand
  for (const int arm : {0, 1}) {
    const auto coded = exp.coded_indices(arm);
    Eigen::MatrixXd X(coded.size(), 2);
    Eigen::VectorXd y(coded.size());
    for (std::size_t r = 0; r < coded.size(); ++r) {
      X(r, 0) = exp.doc(coded[r]).features[0];
      X(r, 1) = exp.doc(coded[r]).features[1];
      y(r) = *exp.doc(coded[r]).human_score;
    }
    const auto final_model =
        matext::fit(spec, X, y, matext::mix_seed(plan.seed, 0, std::uint64_t(arm) + 1));
    for (const auto i : exp.arm_indices(arm)) {
      if (exp.doc(i).coded) continue;
      Eigen::MatrixXd q(1, 2);
      q << exp.doc(i).features[0], exp.doc(i).features[1];
      CHECK(result.predictions[i] == doctest::Approx(final_model.predict(q)(0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("uncoded documents never influence other predictions") {
  matext::Rng rng(2004);
  const Experiment base = crossfit_experiment(&rng);
  // find an uncoded document and perturb its features wildly
  int target = -1;
  for (int i = 0; i < base.N(); ++i)
    if (!base.doc(i).coded) {
      target = i;
      break;
    }
  REQUIRE(target >= 0);
  std::vector<matext::Document> docs(base.documents().begin(), base.documents().end());
  docs[target].features = {500.0, -800.0};
  const Experiment perturbed = Experiment::from_documents(std::move(docs));

  for (const auto mode : {matext::CrossFitMode::pure_crossfit, matext::CrossFitMode::cv_departure}) {
    matext::CrossFitPlan plan;
    plan.mode = mode;
    plan.seed = 31;
    const auto spec = make_spec(LearnerKind::ridge, {{"lambda", 0.5}});
    const auto a = matext::cross_fit_predict(base, spec, plan);
    const auto b = matext::cross_fit_predict(perturbed, spec, plan);
    for (int i = 0; i < base.N(); ++i) {
      if (i == target) continue;
      CHECK(a[i] == b[i]);
    }
    CHECK(a[target] != b[target]);
  }
}

TEST_CASE("combined-arm models pool the arms") {
  matext::Rng rng(2005);
  const Experiment exp = crossfit_experiment(&rng);
  matext::CrossFitPlan plan;
  plan.per_arm_models = false;
  plan.seed = 77;
  const auto result = matext::cross_fit_detail(exp, make_spec(LearnerKind::ridge), plan);
  REQUIRE(result.fold_training_rows.size() == 5);
  for (const auto& per_group : result.fold_training_rows) {
    REQUIRE(per_group.size() == 1);  // one pooled group
    int arms_seen = 0;
    bool saw0 = false, saw1 = false;
    for (const auto r : per_group[0]) (exp.doc(r).arm == 1 ? saw1 : saw0) = true;
    arms_seen = int(saw0) + int(saw1);
    CHECK(arms_seen == 2);
  }
}

TEST_CASE("cross-fitting validates its plan and inputs") {
  matext::Rng rng(2006);
  const Experiment exp = crossfit_experiment(&rng, 10, 4);  // 4 coded per arm
  matext::CrossFitPlan plan;
  plan.K = 5;  // more folds than coded docs per arm
  try {
    matext::cross_fit_predict(exp, make_spec(LearnerKind::ridge), plan);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCoded);
  }
  plan.K = 1;
  CHECK_THROWS_AS(matext::cross_fit_predict(exp, make_spec(LearnerKind::ridge), plan), Error);
}

TEST_CASE("tune_cv picks the clearly better penalty and reports honest r2") {
  matext::Rng rng(2007);
  const int n = 60;
  const Eigen::MatrixXd X = random_matrix(&rng, n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 2.0 * X(i, 0) - X(i, 1) + rng.normal(0.0, 0.5);

  std::vector<PredictorSpec> grid = {make_spec(LearnerKind::ridge, {{"lambda", 0.05}}),
                                     make_spec(LearnerKind::ridge, {{"lambda", 1e6}})};
  const auto [best, r2] = matext::tune_cv(grid, X, y, 5, 42);
  CHECK(best.get("lambda", -1.0) == 0.05);
  CHECK(r2 > 0.5);

  // singleton grid comes straight back
  const auto [only, only_r2] = matext::tune_cv({grid[1]}, X, y, 5, 42);
  CHECK(only.get("lambda", -1.0) == 1e6);
  CHECK(only_r2 < 0.1);  // shrunk-to-mean model explains nothing

  CHECK_THROWS_AS(matext::tune_cv({}, X, y), Error);
}

TEST_CASE("tune_cv reports nonpositive r2 on pure noise") {
  matext::Rng rng(2008);
  int nonpositive = 0;
  const int runs = 10;
  for (int t = 0; t < runs; ++t) {
    const Eigen::MatrixXd X = random_matrix(&rng, 50, 3);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) y(i) = rng.normal();
    const auto [best, r2] = matext::tune_cv(
        {make_spec(LearnerKind::ridge, {{"lambda", 0.1}})}, X, y, 5, 100 + t);
    if (r2 <= 0.0) ++nonpositive;
  }
  CHECK(nonpositive >= 7);
}

TEST_CASE("external predictions load by id and validate thoroughly") {
  matext::Rng rng(2009);
  const Experiment exp = crossfit_experiment(&rng, 4, 2);  // ids t0..t3, c0..c3
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "matext_preds.csv").string();

  SUBCASE("happy path maps ids to document order") {
    std::string content = "id,predicted_score\n";
    for (int i = exp.N() - 1; i >= 0; --i)
      content += exp.doc(i).id + "," + std::to_string(i * 0.5) + "\n";
    matext::write_text_file(path, content);
    const auto preds = matext::read_external_predictions(path, exp);
    REQUIRE(preds.size() == std::size_t(exp.N()));
    for (int i = 0; i < exp.N(); ++i) CHECK(preds[i] == doctest::Approx(i * 0.5));

    PredictorSpec spec;
    spec.kind = LearnerKind::external;
    spec.predictions_path = path;
    matext::CrossFitPlan plan;
    const auto result = matext::cross_fit_detail(exp, spec, plan);
    CHECK(result.predictions == preds);
    for (const auto k : result.partition_of) CHECK(k == -1);
  }
  SUBCASE("missing document") {
    matext::write_text_file(path, "id,predicted_score\nt0,1.0\n");
    CHECK_THROWS_AS(matext::read_external_predictions(path, exp), Error);
  }
  SUBCASE("duplicate id") {
    std::string content = "id,predicted_score\n";
    for (int i = 0; i < exp.N(); ++i) content += exp.doc(0).id + ",1.0\n";
    matext::write_text_file(path, content);
    try {
      matext::read_external_predictions(path, exp);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DuplicateId);
    }
  }
  SUBCASE("non-numeric and non-finite values") {
    std::string content = "id,predicted_score\n";
    for (int i = 0; i < exp.N(); ++i)
      content += exp.doc(i).id + (i == 2 ? ",abc\n" : ",1.0\n");
    matext::write_text_file(path, content);
    CHECK_THROWS_AS(matext::read_external_predictions(path, exp), Error);

    content = "id,predicted_score\n";
    for (int i = 0; i < exp.N(); ++i)
      content += exp.doc(i).id + (i == 2 ? ",inf\n" : ",1.0\n");
    matext::write_text_file(path, content);
    CHECK_THROWS_AS(matext::read_external_predictions(path, exp), Error);
  }
  std::remove(path.c_str());
}
