#include "matext/simulation.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "matext/error.hpp"
#include "matext/rng.hpp"
#include "matext/stats.hpp"

namespace matext {

using nlohmann::json;

const std::array<EstimatorMethod, kEstimatorSlots> kEstimatorOrder = {
    EstimatorMethod::oracle, EstimatorMethod::subset, EstimatorMethod::synthetic,
    EstimatorMethod::model_assisted, EstimatorMethod::covariate_adjusted};

namespace {

constexpr int kLinearTermCap = 10;

int linear_terms(const DGPSpec& dgp) { return std::min(kLinearTermCap, dgp.p_features); }

double systematic_raw_var(const DGPSpec& dgp) {
  // var of the unscaled index: m unit-variance linear terms, plus
  // var(0.5(X^2-1)) = 0.5 and var(0.5 X0 X1) = 0.25, all uncorrelated.
  return linear_terms(dgp) + (dgp.linear_only ? 0.0 : 0.75);
}

double signal_scale(const DGPSpec& dgp) {
  if (dgp.signal == 0.0) return 0.0;
  return dgp.resolved_noise_sd() *
         std::sqrt(dgp.signal / ((1.0 - dgp.signal) * systematic_raw_var(dgp)));
}

std::vector<int> draw_assignment(int N, double p, Rng& rng) {
  const int N1 = static_cast<int>(std::lround(p * N));
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<int> arm(N, 0);
  for (int t = 0; t < N1; ++t) arm[perm[t]] = 1;
  return arm;
}

}  // namespace

void DGPSpec::validate() const {
  if (N < 4) throw Error(ErrorCode::InvalidDGP, "population size must be >= 4");
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::InvalidDGP, "treated fraction must lie in (0,1)");
  if (!std::isfinite(tau)) throw Error(ErrorCode::InvalidDGP, "tau must be finite");
  if (mode == DGPMode::synthetic) {
    if (p_features < 1) throw Error(ErrorCode::InvalidDGP, "need at least one feature");
    if (!(signal >= 0.0 && signal < 1.0))
      throw Error(ErrorCode::InvalidDGP, "signal must lie in [0,1)");
    if (!(resolved_noise_sd() > 0.0))
      throw Error(ErrorCode::InvalidDGP, "noise sd must be > 0");
    if (effect_mode == EffectMode::feature_shift && (signal == 0.0 || p_features < 3))
      throw Error(ErrorCode::InvalidDGP,
                  "feature_shift needs signal > 0 and at least 3 features");
  } else {
    if (corpus_path.empty())
      throw Error(ErrorCode::InvalidDGP, "resample mode needs a corpus file");
    if (effect_mode != EffectMode::constant_shift)
      throw Error(ErrorCode::InvalidDGP, "resample mode supports constant_shift only");
  }
}

double DGPSpec::resolved_noise_sd() const {
  return noise_sd < 0.0 ? std::sqrt(1.0 - signal) : noise_sd;
}

double DGPSpec::theoretical_sigma0() const {
  const double s = signal_scale(*this);
  const double noise = resolved_noise_sd();
  return std::sqrt(s * s * systematic_raw_var(*this) + pretest_beta * pretest_beta +
                   noise * noise);
}

DGPSpec DGPSpec::from_json(const json& j) {
  DGPSpec dgp;
  if (j.contains("mode"))
    dgp.mode = j.at("mode").get<std::string>() == "resample_file" ? DGPMode::resample_file
                                                                  : DGPMode::synthetic;
  if (j.contains("N")) dgp.N = j.at("N").get<int>();
  if (j.contains("p")) dgp.p = j.at("p").get<double>();
  if (j.contains("p_features")) dgp.p_features = j.at("p_features").get<int>();
  if (j.contains("signal")) dgp.signal = j.at("signal").get<double>();
  if (j.contains("tau")) dgp.tau = j.at("tau").get<double>();
  if (j.contains("noise_sd")) dgp.noise_sd = j.at("noise_sd").get<double>();
  if (j.contains("effect_mode"))
    dgp.effect_mode = j.at("effect_mode").get<std::string>() == "feature_shift"
                          ? EffectMode::feature_shift
                          : EffectMode::constant_shift;
  if (j.contains("linear_only")) dgp.linear_only = j.at("linear_only").get<bool>();
  if (j.contains("pretest_beta")) dgp.pretest_beta = j.at("pretest_beta").get<double>();
  if (j.contains("seed")) dgp.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("corpus")) dgp.corpus_path = j.at("corpus").get<std::string>();
  if (j.contains("corpus_schema")) dgp.corpus_schema = j.at("corpus_schema").get<std::string>();
  dgp.validate();
  return dgp;
}

json DGPSpec::to_json() const {
  json j;
  j["mode"] = mode == DGPMode::synthetic ? "synthetic" : "resample_file";
  j["N"] = N;
  j["p"] = p;
  j["p_features"] = p_features;
  j["signal"] = signal;
  j["tau"] = tau;
  j["noise_sd"] = noise_sd;
  j["effect_mode"] =
      effect_mode == EffectMode::constant_shift ? "constant_shift" : "feature_shift";
  j["linear_only"] = linear_only;
  j["pretest_beta"] = pretest_beta;
  j["seed"] = seed;
  if (!corpus_path.empty()) j["corpus"] = corpus_path;
  if (!corpus_schema.empty()) j["corpus_schema"] = corpus_schema;
  return j;
}

double Population::tau_true() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < y0.size(); ++i) sum += y1[i] - y0[i];
  return sum / static_cast<double>(y0.size());
}

double Population::sigma0() const { return std::sqrt(population_var(y0)); }

Population Population::from_observed(const Experiment& exp) {
  Population pop;
  pop.mode = DGPMode::synthetic;
  pop.N_experiment = exp.N();
  pop.reassignable = false;
  pop.X = exp.feature_matrix();
  pop.covariates = exp.baseline_covariates();
  int N1 = 0;
  for (const auto& d : exp.documents()) {
    if (!d.human_score)
      throw Error(ErrorCode::NotFullyCoded,
                  "sensitivity analysis needs a score for every document; '" + d.id +
                      "' has none");
    pop.y0.push_back(*d.human_score);
    pop.y1.push_back(*d.human_score);
    pop.arm.push_back(d.arm);
    N1 += d.arm;
  }
  pop.p = static_cast<double>(N1) / exp.N();
  return pop;
}

Population generate_population(const DGPSpec& dgp) {
  dgp.validate();
  Population pop;
  pop.mode = dgp.mode;
  pop.N_experiment = dgp.N;
  pop.p = dgp.p;

  if (dgp.mode == DGPMode::synthetic) {
    const int N = dgp.N, p_feat = dgp.p_features, m = linear_terms(dgp);
    const double s = signal_scale(dgp);
    const double noise = dgp.resolved_noise_sd();
    const double effect = dgp.tau * dgp.theoretical_sigma0();

    Rng rng(mix_seed(dgp.seed, 0xD1u));
    pop.X.resize(N, p_feat);
    if (dgp.pretest_beta != 0.0) pop.covariates = Eigen::MatrixXd(N, 1);
    pop.y0.resize(N);
    pop.y1.resize(N);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < p_feat; ++j) pop.X(i, j) = rng.normal();
      double index = 0.0;
      for (int j = 0; j < m; ++j) index += pop.X(i, j);
      if (!dgp.linear_only)
        index += 0.5 * (pop.X(i, 0) * pop.X(i, 0) - 1.0) + 0.5 * pop.X(i, 0) * pop.X(i, 1);
      double y = s * index + noise * rng.normal();
      if (pop.covariates) {
        const double w = rng.normal();
        (*pop.covariates)(i, 0) = w;
        y += dgp.pretest_beta * w;
      }
      pop.y0[i] = y;
      pop.y1[i] = y + effect;
    }
    if (dgp.effect_mode == EffectMode::feature_shift) {
      pop.feature_shift_index = 2;
      pop.feature_shift_delta = effect / s;
    }
    Rng assign_rng(mix_seed(dgp.seed, 0xA2u));
    pop.arm = draw_assignment(N, dgp.p, assign_rng);
    return pop;
  }

  // resample_file: a fully scored corpus is the population; the experimental
  // sample of N is drawn from it each replication.
  ColumnSchema schema;
  if (!dgp.corpus_schema.empty()) {
    schema = ColumnSchema::from_json_file(dgp.corpus_schema);
  } else {
    schema.feature_prefix = "x";
    schema.human_score = "human_score";
  }
  const Experiment corpus = load_experiment(dgp.corpus_path, schema);
  if (corpus.N() < dgp.N)
    throw Error(ErrorCode::InvalidDGP, "corpus has " + std::to_string(corpus.N()) +
                                           " documents, needs >= " + std::to_string(dgp.N));
  pop.X = corpus.feature_matrix();
  pop.covariates = corpus.baseline_covariates();
  for (const auto& d : corpus.documents()) {
    if (!d.human_score)
      throw Error(ErrorCode::InvalidDGP,
                  "corpus must be fully scored; '" + d.id + "' has no score");
    pop.y0.push_back(*d.human_score);
  }
  const double effect = dgp.tau * pop.sigma0();
  pop.y1.resize(pop.y0.size());
  for (std::size_t i = 0; i < pop.y0.size(); ++i) pop.y1[i] = pop.y0[i] + effect;
  pop.arm.assign(pop.y0.size(), 0);  // assignment is drawn per replication
  return pop;
}

SimCondition SimCondition::from_json(const json& j) {
  SimCondition condition;
  if (j.contains("n")) condition.n = j.at("n").get<int>();
  if (j.contains("learner")) condition.learner = PredictorSpec::from_json(j.at("learner"));
  if (j.contains("crossfit")) condition.crossfit = CrossFitPlan::from_json(j.at("crossfit"));
  if (j.contains("replications")) condition.replications = j.at("replications").get<int>();
  return condition;
}

json SimCondition::to_json() const {
  json j;
  j["n"] = n;
  j["learner"] = learner.to_json();
  j["crossfit"] = crossfit.to_json();
  j["replications"] = replications;
  return j;
}

ReplicationResult run_replication(const Population& pop, const SimCondition& condition,
                                  std::uint64_t seed) {
  const int N = pop.N_experiment;
  std::vector<std::size_t> rows;
  if (pop.size() > N) {
    Rng subset_rng(mix_seed(seed, 0xE1u));
    rows = subset_rng.sample_without_replacement(pop.size(), N);
  } else {
    rows.resize(N);
    std::iota(rows.begin(), rows.end(), 0);
  }

  std::vector<int> arm(N);
  if (pop.reassignable) {
    Rng assign_rng(mix_seed(seed, 0xE2u));
    arm = draw_assignment(N, pop.p, assign_rng);
  } else {
    for (int i = 0; i < N; ++i) arm[i] = pop.arm[rows[i]];
  }

  int N1 = 0;
  for (int a : arm) N1 += a;

  std::vector<Document> docs(N);
  for (int i = 0; i < N; ++i) {
    Document& d = docs[i];
    const std::size_t row = rows[i];
    d.id = "d" + std::to_string(row);
    d.arm = arm[i];
    d.features.resize(pop.X.cols());
    for (Eigen::Index j = 0; j < pop.X.cols(); ++j) d.features[j] = pop.X(row, j);
    if (arm[i] == 1 && pop.feature_shift_index >= 0)
      d.features[pop.feature_shift_index] += pop.feature_shift_delta;
    d.human_score = arm[i] == 1 ? pop.y1[row] : pop.y0[row];
    d.coded = true;
  }
  std::optional<Eigen::MatrixXd> covariates;
  if (pop.covariates) {
    covariates = Eigen::MatrixXd(N, pop.covariates->cols());
    for (int i = 0; i < N; ++i) covariates->row(i) = pop.covariates->row(rows[i]);
  }
  const Experiment full = Experiment::from_documents(std::move(docs), std::move(covariates));

  // Coding budget split proportionally across arms (largest-remainder on the
  // treated arm keeps n1 + n0 == n).
  const int n1 = static_cast<int>(std::lround(static_cast<double>(condition.n) * N1 / N));
  const int n0 = condition.n - n1;
  const Experiment design = select_coding_sample(full, n1, n0, mix_seed(seed, 0xE3u));

  CrossFitPlan plan = condition.crossfit;
  plan.seed = mix_seed(seed, 0xE4u);
  const std::vector<double> preds = cross_fit_predict(design, condition.learner, plan);

  ReplicationResult result;
  result.tau_hat.fill(std::numeric_limits<double>::quiet_NaN());
  result.se_hat.fill(std::numeric_limits<double>::quiet_NaN());
  const auto record = [&](int slot, const ImpactEstimate& est) {
    result.tau_hat[slot] = est.tau_hat;
    result.se_hat[slot] = est.se;
  };
  record(0, estimate_oracle(full));
  record(1, estimate_subset(design));
  record(2, estimate_synthetic(design, preds));
  record(3, estimate_model_assisted(design, preds));
  if (pop.covariates) {
    const CovariateAdjustedResult adjusted = estimate_covariate_adjusted(design, preds);
    record(4, adjusted.estimate);
    result.pretest_coef = adjusted.coefficients[2].estimate;
    result.pretest_se = adjusted.coefficients[2].se;
  }
  return result;
}

namespace {

MetricRow summarize(const std::vector<double>& tau, const std::vector<double>& se,
                    double tau_true, double delta, double mse_oracle,
                    double var_sq_oracle) {
  const int R = static_cast<int>(tau.size());
  const double z = two_sided_z(0.05);
  MetricRow row;
  row.replications = R;
  row.mean_tau = mean(tau);
  row.emp_var = population_var(tau);

  std::vector<double> se2(R), sq(R);
  int covered = 0, rejected = 0;
  for (int r = 0; r < R; ++r) {
    se2[r] = se[r] * se[r];
    sq[r] = (tau[r] - tau_true) * (tau[r] - tau_true);
    if (std::abs(tau[r] - tau_true) <= z * se[r]) ++covered;
    if (std::abs(tau[r]) > z * se[r]) ++rejected;
  }
  row.mean_se2 = mean(se2);
  row.coverage = static_cast<double>(covered) / R;
  row.rejection_rate = static_cast<double>(rejected) / R;
  row.mc_se_mean = std::sqrt(row.emp_var / R);
  row.mc_se_coverage = std::sqrt(row.coverage * (1.0 - row.coverage) / R);

  const double mse = mean(sq);
  const double var_sq = population_var(sq);
  row.re = 100.0 * mse / mse_oracle;
  row.mc_se_re = row.re * std::sqrt(var_sq / (R * mse * mse) +
                                    var_sq_oracle / (R * mse_oracle * mse_oracle));

  const double var_emp_var = (central_moment4(tau) - row.emp_var * row.emp_var) / R;
  if (row.emp_var > 0.0) {
    row.rb = 100.0 * (row.mean_se2 - row.emp_var) / row.emp_var;
    row.mc_se_rb = 100.0 / row.emp_var *
                   std::sqrt(population_var(se2) / R +
                             (row.mean_se2 / row.emp_var) * (row.mean_se2 / row.emp_var) *
                                 var_emp_var);
    const auto power_at = [&](double v) {
      const double shift = delta / std::sqrt(v);
      return normal_cdf(-z + shift) + normal_cdf(-z - shift);
    };
    row.power = power_at(row.emp_var);
    const double eps = 1e-6 * row.emp_var;
    const double dp_dv = (power_at(row.emp_var + eps) - power_at(row.emp_var - eps)) / (2 * eps);
    row.mc_se_power = std::abs(dp_dv) * std::sqrt(var_emp_var);
  } else {
    row.rb = 0.0;
    row.power = delta > 0.0 ? 1.0 : 0.0;
  }
  return row;
}

}  // namespace

SimulationReport run_simulation(const DGPSpec& dgp, const std::vector<SimCondition>& conditions,
                                int parallelism, double power_effect_sd) {
  if (conditions.empty()) throw Error(ErrorCode::EmptyGrid, "no simulation conditions");
  for (const auto& condition : conditions)
    if (condition.replications < 2)
      throw Error(ErrorCode::InvalidPlan, "need >= 2 replications per condition");

  const Population pop = generate_population(dgp);
  SimulationReport report;
  report.tau_true = pop.tau_true();
  report.sigma0 = pop.sigma0();
  report.power_effect_sd = power_effect_sd;
  const double delta = power_effect_sd * report.sigma0;

  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const SimCondition& condition = conditions[ci];
    const int R = condition.replications;
    std::vector<ReplicationResult> results(R);

    // Replication r's stream depends only on (dgp.seed, ci, r); worker threads
    // write disjoint slots, so any parallelism yields the same results vector.
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto worker = [&] {
      for (int r = next.fetch_add(1); r < R; r = next.fetch_add(1)) {
        try {
          results[r] = run_replication(
              pop, condition, mix_seed(dgp.seed, static_cast<std::uint64_t>(ci) + 1,
                                       static_cast<std::uint64_t>(r) + 1));
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    const int jobs = std::max(1, std::min(parallelism, R));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(jobs);
      for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
      for (auto& thread : pool) thread.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    const int slots = pop.covariates ? kEstimatorSlots : kEstimatorSlots - 1;
    std::vector<double> oracle_sq(R);
    for (int r = 0; r < R; ++r)
      oracle_sq[r] = (results[r].tau_hat[0] - report.tau_true) *
                     (results[r].tau_hat[0] - report.tau_true);
    const double mse_oracle = mean(oracle_sq);
    const double var_sq_oracle = population_var(oracle_sq);

    for (int s = 0; s < slots; ++s) {
      std::vector<double> tau(R), se(R);
      for (int r = 0; r < R; ++r) {
        tau[r] = results[r].tau_hat[s];
        se[r] = results[r].se_hat[s];
      }
      MetricRow row = summarize(tau, se, report.tau_true, delta, mse_oracle, var_sq_oracle);
      row.condition = static_cast<int>(ci);
      row.n = condition.n;
      row.estimator = estimator_method_name(kEstimatorOrder[s]);
      if (s == 0) {  // the oracle's own relative efficiency is definitionally 100
        row.re = 100.0;
        row.mc_se_re = 0.0;
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

json SimulationReport::to_json() const {
  json j;
  j["tau_true"] = tau_true;
  j["sigma0"] = sigma0;
  j["power_effect_sd"] = power_effect_sd;
  json rows_json = json::array();
  for (const auto& row : rows) {
    json r;
    r["condition"] = row.condition;
    r["n"] = row.n;
    r["replications"] = row.replications;
    r["estimator"] = row.estimator;
    r["mean_tau"] = row.mean_tau;
    r["emp_var"] = row.emp_var;
    r["mean_se2"] = row.mean_se2;
    r["power"] = row.power;
    r["re"] = row.re;
    r["rb"] = row.rb;
    r["coverage"] = row.coverage;
    r["rejection_rate"] = row.rejection_rate;
    r["mc_se_mean"] = row.mc_se_mean;
    r["mc_se_power"] = row.mc_se_power;
    r["mc_se_re"] = row.mc_se_re;
    r["mc_se_rb"] = row.mc_se_rb;
    r["mc_se_coverage"] = row.mc_se_coverage;
    rows_json.push_back(std::move(r));
  }
  j["rows"] = std::move(rows_json);
  return j;
}

CsvTable SimulationReport::to_table() const {
  CsvTable table;
  table.header = {"condition",   "n",         "replications", "estimator",  "mean_tau",
                  "emp_var",     "mean_se2",  "power",        "re",         "rb",
                  "coverage",    "rejection_rate", "mc_se_mean", "mc_se_power", "mc_se_re",
                  "mc_se_rb",    "mc_se_coverage"};
  for (const auto& row : rows)
    table.rows.push_back({std::to_string(row.condition), std::to_string(row.n),
                          std::to_string(row.replications), row.estimator,
                          format_double(row.mean_tau), format_double(row.emp_var),
                          format_double(row.mean_se2), format_double(row.power),
                          format_double(row.re), format_double(row.rb),
                          format_double(row.coverage), format_double(row.rejection_rate),
                          format_double(row.mc_se_mean), format_double(row.mc_se_power),
                          format_double(row.mc_se_re), format_double(row.mc_se_rb),
                          format_double(row.mc_se_coverage)});
  return table;
}

json SensitivityResult::to_json() const {
  json j;
  j["ma_tau"] = ma_tau;
  j["ma_se"] = ma_se;
  j["subset_tau"] = subset_tau;
  j["subset_se"] = subset_se;
  j["ma_rejection_rate"] = ma_rejection_rate;
  j["subset_rejection_rate"] = subset_rejection_rate;
  return j;
}

SensitivityResult sensitivity_resample(const Experiment& exp, int n,
                                       const PredictorSpec& learner, const CrossFitPlan& plan,
                                       int B, std::uint64_t seed) {
  if (B < 1) throw Error(ErrorCode::InvalidPlan, "need at least one draw");
  const Population pop = Population::from_observed(exp);
  SimCondition condition;
  condition.n = n;
  condition.learner = learner;
  condition.crossfit = plan;
  condition.replications = B;

  SensitivityResult result;
  const double z = two_sided_z(0.05);
  int ma_rejected = 0, subset_rejected = 0;
  for (int b = 0; b < B; ++b) {
    const ReplicationResult rep =
        run_replication(pop, condition, mix_seed(seed, static_cast<std::uint64_t>(b)));
    result.ma_tau.push_back(rep.tau_hat[3]);
    result.ma_se.push_back(rep.se_hat[3]);
    result.subset_tau.push_back(rep.tau_hat[1]);
    result.subset_se.push_back(rep.se_hat[1]);
    if (std::abs(rep.tau_hat[3]) > z * rep.se_hat[3]) ++ma_rejected;
    if (std::abs(rep.tau_hat[1]) > z * rep.se_hat[1]) ++subset_rejected;
  }
  result.ma_rejection_rate = static_cast<double>(ma_rejected) / B;
  result.subset_rejection_rate = static_cast<double>(subset_rejected) / B;
  return result;
}

}  // namespace matext
