#include "matext/estimators.hpp"

#include <Eigen/Dense>
#include <cmath>

#include <nlohmann/json.hpp>

#include "matext/error.hpp"
#include "matext/stats.hpp"

namespace matext {

using nlohmann::json;

std::string estimator_method_name(EstimatorMethod method) {
  switch (method) {
    case EstimatorMethod::oracle: return "oracle";
    case EstimatorMethod::subset: return "subset";
    case EstimatorMethod::synthetic: return "synthetic";
    case EstimatorMethod::model_assisted: return "model_assisted";
    case EstimatorMethod::covariate_adjusted: return "covariate_adjusted";
  }
  internal_check(false, "unreachable estimator method");
  return {};
}

namespace {

void check_preds(const Experiment& exp, const std::vector<double>& preds) {
  if (preds.size() != static_cast<std::size_t>(exp.N()))
    throw Error(ErrorCode::LengthMismatch,
                "got " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(exp.N()) + " documents");
  for (double v : preds)
    if (!std::isfinite(v))
      throw Error(ErrorCode::NonFiniteInput, "predictions contain non-finite values");
}

void require_coded(const Experiment& exp, int minimum) {
  for (int arm : {1, 0})
    if (exp.n_arm(arm) < minimum)
      throw Error(ErrorCode::TooFewCoded, "arm " + std::to_string(arm) + " has " +
                                              std::to_string(exp.n_arm(arm)) +
                                              " coded documents, need >= " +
                                              std::to_string(minimum));
}

/// Mean of the coded human scores in one arm, summed in document order.
/// Shared by every estimator so the h=1 and zero-predictor reduction
/// identities hold bitwise, not merely to tolerance.
double coded_score_mean(const Experiment& exp, int arm) {
  double sum = 0.0;
  int count = 0;
  for (const auto& d : exp.documents())
    if (d.arm == arm && d.coded) {
      sum += *d.human_score;
      ++count;
    }
  return sum / count;
}

double coded_score_var(const Experiment& exp, int arm) {
  const double m = coded_score_mean(exp, arm);
  double ss = 0.0;
  int count = 0;
  for (const auto& d : exp.documents())
    if (d.arm == arm && d.coded) {
      ss += (*d.human_score - m) * (*d.human_score - m);
      ++count;
    }
  return ss / (count - 1);
}

double pred_mean_all(const Experiment& exp, const std::vector<double>& preds, int arm) {
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < exp.N(); ++i)
    if (exp.doc(i).arm == arm) {
      sum += preds[i];
      ++count;
    }
  return sum / count;
}

double pred_mean_coded(const Experiment& exp, const std::vector<double>& preds, int arm) {
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < exp.N(); ++i)
    if (exp.doc(i).arm == arm && exp.doc(i).coded) {
      sum += preds[i];
      ++count;
    }
  return sum / count;
}

double residual_var(const Experiment& exp, const std::vector<double>& preds, int arm) {
  std::vector<double> e;
  for (int i = 0; i < exp.N(); ++i)
    if (exp.doc(i).arm == arm && exp.doc(i).coded)
      e.push_back(*exp.doc(i).human_score - preds[i]);
  return sample_var(e);
}

double r2_from_vars(double s2_e, double s2_y) {
  if (s2_y == 0.0) return s2_e == 0.0 ? 1.0 : 0.0;
  return 1.0 - s2_e / s2_y;
}

void finish_interval(ImpactEstimate& est) {
  const double z = two_sided_z(est.alpha);
  est.ci_lo = est.tau_hat - z * est.se;
  est.ci_hi = est.tau_hat + z * est.se;
}

void fill_counts(ImpactEstimate& est, const Experiment& exp) {
  est.n1 = exp.n1();
  est.n0 = exp.n0();
  est.N1 = exp.N1();
  est.N0 = exp.N0();
}

}  // namespace

ResidualSet coded_residuals(const Experiment& exp, const std::vector<double>& preds) {
  check_preds(exp, preds);
  ResidualSet set;
  for (int i = 0; i < exp.N(); ++i)
    if (exp.doc(i).coded) {
      set.arm.push_back(exp.doc(i).arm);
      set.residual.push_back(*exp.doc(i).human_score - preds[i]);
    }
  return set;
}

ImpactEstimate estimate_oracle(const Experiment& exp, double alpha) {
  if (!exp.fully_coded())
    throw Error(ErrorCode::NotFullyCoded,
                "oracle estimate needs every document coded (" +
                    std::to_string(exp.n1() + exp.n0()) + " of " + std::to_string(exp.N()) + ")");
  require_coded(exp, 2);
  ImpactEstimate est;
  est.method = EstimatorMethod::oracle;
  est.alpha = alpha;
  fill_counts(est, exp);
  est.tau_hat = coded_score_mean(exp, 1) - coded_score_mean(exp, 0);
  est.s2_treat = coded_score_var(exp, 1);
  est.s2_control = coded_score_var(exp, 0);
  est.se = std::sqrt(*est.s2_treat / exp.N1() + *est.s2_control / exp.N0());
  finish_interval(est);
  return est;
}

ImpactEstimate estimate_subset(const Experiment& exp, double alpha) {
  require_coded(exp, 2);
  ImpactEstimate est;
  est.method = EstimatorMethod::subset;
  est.alpha = alpha;
  fill_counts(est, exp);
  est.tau_hat = coded_score_mean(exp, 1) - coded_score_mean(exp, 0);
  est.s2_treat = coded_score_var(exp, 1);
  est.s2_control = coded_score_var(exp, 0);
  est.se = std::sqrt(*est.s2_treat / exp.n1() + *est.s2_control / exp.n0());
  finish_interval(est);
  return est;
}

ImpactEstimate estimate_synthetic(const Experiment& exp, const std::vector<double>& preds,
                                  double alpha) {
  check_preds(exp, preds);
  if (exp.N1() < 2 || exp.N0() < 2)
    throw Error(ErrorCode::TooFewCoded, "synthetic estimate needs >= 2 documents per arm");
  ImpactEstimate est;
  est.method = EstimatorMethod::synthetic;
  est.alpha = alpha;
  est.note = "naive plug-in variance on predicted scores; anti-conservative";
  fill_counts(est, exp);
  est.tau_hat = pred_mean_all(exp, preds, 1) - pred_mean_all(exp, preds, 0);
  double var[2];
  for (int arm : {0, 1}) {
    const double m = pred_mean_all(exp, preds, arm);
    double ss = 0.0;
    for (int i = 0; i < exp.N(); ++i)
      if (exp.doc(i).arm == arm) ss += (preds[i] - m) * (preds[i] - m);
    var[arm] = ss / (exp.N_arm(arm) - 1);
  }
  est.se = std::sqrt(var[1] / exp.N1() + var[0] / exp.N0());
  finish_interval(est);
  return est;
}

ImpactEstimate estimate_model_assisted(const Experiment& exp, const std::vector<double>& preds,
                                       double alpha) {
  check_preds(exp, preds);
  require_coded(exp, 2);
  for (const auto& d : exp.documents())
    if (d.coded && !d.inclusion_prob)
      throw Error(ErrorCode::MissingInclusionProb,
                  "document '" + d.id + "' is coded but has no inclusion probability");

  ImpactEstimate est;
  est.method = EstimatorMethod::model_assisted;
  est.alpha = alpha;
  fill_counts(est, exp);

  // Arm mean = coded score mean + (prediction mean over everyone - prediction
  // mean over the coded subset). Algebraically identical to averaging the
  // predictions and adding the mean coded residual, but this form makes the
  // zero-predictor and full-coding reductions exact: the correction term is
  // literally 0.0 there.
  double ytilde[2];
  for (int arm : {0, 1})
    ytilde[arm] = coded_score_mean(exp, arm) +
                  (pred_mean_all(exp, preds, arm) - pred_mean_coded(exp, preds, arm));
  est.tau_hat = ytilde[1] - ytilde[0];

  est.s2_treat = coded_score_var(exp, 1);
  est.s2_control = coded_score_var(exp, 0);
  est.se2_treat = residual_var(exp, preds, 1);
  est.se2_control = residual_var(exp, preds, 0);
  est.r2_treat = r2_from_vars(*est.se2_treat, *est.s2_treat);
  est.r2_control = r2_from_vars(*est.se2_control, *est.s2_control);

  const double fpc1 = static_cast<double>(exp.N1() - exp.n1()) / exp.N1();
  const double fpc0 = static_cast<double>(exp.N0() - exp.n0()) / exp.N0();
  const double se2 = *est.s2_treat / exp.N1() + *est.s2_control / exp.N0() +
                     fpc1 * *est.se2_treat / exp.n1() + fpc0 * *est.se2_control / exp.n0();
  est.se = std::sqrt(se2);
  finish_interval(est);
  return est;
}

std::pair<double, double> bias_decomposition(const Experiment& exp,
                                             const std::vector<double>& preds) {
  check_preds(exp, preds);
  require_coded(exp, 2);
  const double synthetic_part =
      pred_mean_all(exp, preds, 1) - pred_mean_all(exp, preds, 0);
  double correction[2];
  for (int arm : {0, 1}) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < exp.N(); ++i)
      if (exp.doc(i).arm == arm && exp.doc(i).coded) {
        sum += *exp.doc(i).human_score - preds[i];
        ++count;
      }
    correction[arm] = sum / count;
  }
  return {synthetic_part, correction[1] - correction[0]};
}

CovariateAdjustedResult estimate_covariate_adjusted(const Experiment& exp,
                                                    const std::vector<double>& preds,
                                                    double alpha, bool require_covariates) {
  check_preds(exp, preds);
  if (require_covariates && !exp.baseline_covariates())
    throw Error(ErrorCode::MissingCovariates,
                "covariate-adjusted estimate needs baseline covariates");
  for (const auto& d : exp.documents())
    if (d.coded && !d.inclusion_prob)
      throw Error(ErrorCode::MissingInclusionProb,
                  "document '" + d.id + "' is coded but has no inclusion probability");

  const int N = exp.N();
  const int q = exp.baseline_covariates() ? static_cast<int>(exp.baseline_covariates()->cols()) : 0;
  const int k = 2 + q;

  Eigen::VectorXd ystar(N);
  Eigen::MatrixXd D(N, k);
  for (int i = 0; i < N; ++i) {
    const Document& d = exp.doc(i);
    double value = preds[i];
    if (d.coded) value += (*d.human_score - preds[i]) / *d.inclusion_prob;
    ystar(i) = value;
    D(i, 0) = 1.0;
    D(i, 1) = d.arm;
    for (int c = 0; c < q; ++c) D(i, 2 + c) = (*exp.baseline_covariates())(i, c);
  }

  const Eigen::MatrixXd dtd = D.transpose() * D;
  const auto solver = dtd.ldlt();
  const Eigen::VectorXd beta = solver.solve(D.transpose() * ystar);
  const Eigen::VectorXd resid = ystar - D * beta;

  // HC1 sandwich: (D'D)^-1 D' diag(e^2) D (D'D)^-1 * n/(n-k).
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < N; ++i)
    meat.noalias() += resid(i) * resid(i) * D.row(i).transpose() * D.row(i);
  const Eigen::MatrixXd bread = solver.solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd vcov = bread * meat * bread;
  vcov *= static_cast<double>(N) / (N - k);

  CovariateAdjustedResult result;
  result.coefficients.reserve(k);
  for (int c = 0; c < k; ++c) {
    RegressionTerm term;
    term.name = c == 0 ? "intercept" : c == 1 ? "treatment" : "cov" + std::to_string(c - 2);
    term.estimate = beta(c);
    term.se = std::sqrt(vcov(c, c));
    result.coefficients.push_back(term);
  }

  ImpactEstimate& est = result.estimate;
  est.method = EstimatorMethod::covariate_adjusted;
  est.alpha = alpha;
  fill_counts(est, exp);
  est.tau_hat = beta(1);
  est.se = std::sqrt(vcov(1, 1));
  if (exp.n1() >= 2 && exp.n0() >= 2) {
    const auto [r2t, r2c] = empirical_r2(exp, preds);
    est.r2_treat = r2t;
    est.r2_control = r2c;
  }
  finish_interval(est);
  return result;
}

std::pair<double, double> empirical_r2(const Experiment& exp, const std::vector<double>& preds) {
  check_preds(exp, preds);
  require_coded(exp, 2);
  const double r2_1 = r2_from_vars(residual_var(exp, preds, 1), coded_score_var(exp, 1));
  const double r2_0 = r2_from_vars(residual_var(exp, preds, 0), coded_score_var(exp, 0));
  return {r2_1, r2_0};
}

json ImpactEstimate::to_json() const {
  json j;
  j["method"] = estimator_method_name(method);
  j["tau_hat"] = tau_hat;
  j["se"] = se;
  j["ci_lo"] = ci_lo;
  j["ci_hi"] = ci_hi;
  j["alpha"] = alpha;
  j["n1"] = n1;
  j["n0"] = n0;
  j["N1"] = N1;
  j["N0"] = N0;
  if (s2_treat) j["s2_treat"] = *s2_treat;
  if (s2_control) j["s2_control"] = *s2_control;
  if (se2_treat) j["se2_treat"] = *se2_treat;
  if (se2_control) j["se2_control"] = *se2_control;
  if (r2_treat) j["r2_treat"] = *r2_treat;
  if (r2_control) j["r2_control"] = *r2_control;
  if (!note.empty()) j["note"] = note;
  return j;
}

CsvTable estimates_table(const std::vector<ImpactEstimate>& estimates) {
  CsvTable table;
  table.header = {"method", "tau_hat", "se",      "ci_lo", "ci_hi", "r2_treat",
                  "r2_control", "n1",  "n0",      "N1",    "N0"};
  for (const auto& est : estimates) {
    std::vector<std::string> row;
    row.push_back(estimator_method_name(est.method));
    row.push_back(format_double(est.tau_hat));
    row.push_back(format_double(est.se));
    row.push_back(format_double(est.ci_lo));
    row.push_back(format_double(est.ci_hi));
    row.push_back(est.r2_treat ? format_double(*est.r2_treat) : "");
    row.push_back(est.r2_control ? format_double(*est.r2_control) : "");
    row.push_back(std::to_string(est.n1));
    row.push_back(std::to_string(est.n0));
    row.push_back(std::to_string(est.N1));
    row.push_back(std::to_string(est.N0));
    table.rows.push_back(std::move(row));
  }
  return table;
}

json estimates_json(const std::vector<ImpactEstimate>& estimates) {
  json arr = json::array();
  for (const auto& est : estimates) arr.push_back(est.to_json());
  return arr;
}

}  // namespace matext
