#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "matext/csv.hpp"
#include "matext/data.hpp"
#include "matext/error.hpp"
#include "matext/estimators.hpp"
#include "matext/learners.hpp"
#include "matext/planner.hpp"
#include "matext/simulation.hpp"
#include "matext/stats.hpp"
#include "matext/textstats.hpp"

namespace {

using matext::ColumnSchema;
using matext::CsvTable;
using nlohmann::json;

void write_json_file(const std::string& path, const json& j) {
  matext::write_text_file(path, j.dump(2) + "\n");
}

/// Every command leaves a manifest next to its outputs with the fully
/// resolved parameters and seed, enough to re-run it exactly. No timestamps:
/// reruns must be byte-identical.
void write_manifest(const std::string& out_prefix, const std::string& command,
                    std::uint64_t seed, const json& params,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["seed"] = seed;
  m["parameters"] = params;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  write_json_file(out_prefix + ".manifest.json", m);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::string current;
  for (const char ch : text) {
    if (ch == ',') {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  parts.push_back(current);
  return parts;
}

/// Column mapping used when no schema file is given: id and arm columns by
/// those names, every x- or txt_-prefixed column as a feature, and the
/// optional roles by their conventional names when present.
ColumnSchema default_schema(const std::string& data_path) {
  const CsvTable table = matext::read_csv(data_path);
  ColumnSchema schema;
  for (const auto& name : table.header) {
    if (name == "human_score") schema.human_score = name;
    else if (name == "coded") schema.coded = name;
    else if (name == "inclusion_prob") schema.inclusion_prob = name;
    else if (name == "text" || name == "raw_text") schema.raw_text = name;
    else if (name.rfind("x", 0) == 0 || name.rfind("txt_", 0) == 0)
      schema.features.push_back(name);
  }
  return schema;
}

ColumnSchema resolve_schema(const std::string& data_path, const std::string& schema_path,
                            const std::vector<std::string>& covariates) {
  ColumnSchema schema = schema_path.empty() ? default_schema(data_path)
                                            : ColumnSchema::from_json_file(schema_path);
  if (!covariates.empty()) schema.covariates = covariates;
  return schema;
}

struct LearnerFlags {
  std::string kind = "ridge";
  double lambda = 1.0;
  int k = 10;
  int max_depth = 6;
  int min_leaf = 5;
  int n_trees = 200;
  double feature_subsample = 1.0 / 3.0;
  bool no_standardize = false;
  std::string predictions_path;
  std::string spec_file;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--learner", kind,
                    "ridge|lasso|knn|regression_tree|bagged_forest|external");
    cmd->add_option("--lambda", lambda, "ridge/lasso penalty");
    cmd->add_option("--k", k, "knn neighbor count");
    cmd->add_option("--max-depth", max_depth, "tree depth cap");
    cmd->add_option("--min-leaf", min_leaf, "minimum rows per leaf");
    cmd->add_option("--trees", n_trees, "forest size");
    cmd->add_option("--feature-subsample", feature_subsample,
                    "forest per-node feature fraction");
    cmd->add_flag("--no-standardize", no_standardize, "fit on raw features");
    cmd->add_option("--predictions", predictions_path,
                    "external predictions file (kind=external)");
    cmd->add_option("--learner-file", spec_file, "learner spec as JSON (overrides flags)");
  }

  matext::PredictorSpec build(const std::string& kind_name) const {
    if (!spec_file.empty()) return matext::PredictorSpec::from_json_file(spec_file);
    matext::PredictorSpec spec;
    spec.kind = matext::learner_kind_from_string(kind_name);
    spec.standardize = !no_standardize;
    switch (spec.kind) {
      case matext::LearnerKind::ridge:
      case matext::LearnerKind::lasso:
        spec.hyperparams["lambda"] = lambda;
        break;
      case matext::LearnerKind::knn:
        spec.hyperparams["k"] = k;
        break;
      case matext::LearnerKind::regression_tree:
        spec.hyperparams["max_depth"] = max_depth;
        spec.hyperparams["min_leaf"] = min_leaf;
        break;
      case matext::LearnerKind::bagged_forest:
        spec.hyperparams["n_trees"] = n_trees;
        spec.hyperparams["min_leaf"] = min_leaf;
        spec.hyperparams["max_depth"] = max_depth;
        spec.hyperparams["feature_subsample"] = feature_subsample;
        break;
      case matext::LearnerKind::external:
        spec.predictions_path = predictions_path;
        break;
    }
    spec.validate();
    return spec;
  }
};

struct CrossFitFlags {
  int K = 5;
  std::string mode = "pure_crossfit";
  bool combined_arms = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--K", K, "cross-fit partition count");
    cmd->add_option("--mode", mode, "pure_crossfit|cv_departure");
    cmd->add_flag("--combined-arms", combined_arms,
                  "one model pooled over arms instead of per-arm models");
  }

  matext::CrossFitPlan build(std::uint64_t seed) const {
    matext::CrossFitPlan plan;
    plan.K = K;
    plan.mode = matext::crossfit_mode_from_string(mode);
    plan.per_arm_models = !combined_arms;
    plan.seed = seed;
    return plan;
  }
};

// ---------------------------------------------------------------------------
// plan

int run_plan(const matext::DesignPlan& plan, double target_mdes,
             const std::string& grid_spec, const std::string& out,
             const std::string& format) {
  plan.validate();
  std::vector<double> grid;
  if (grid_spec.empty()) {
    for (int i = 1; i <= 20; ++i) grid.push_back(i / 20.0);
  } else {
    for (const auto& part : split_list(grid_spec))
      grid.push_back(std::stod(part));
  }
  const auto curve = matext::mdes_curve(plan, grid);
  const auto warnings = matext::plan_warnings(plan);

  json report;
  report["plan"] = plan.to_json();
  report["warnings"] = warnings;
  report["curve"] = matext::curve_json(curve);
  report["se_at_h"] = std::sqrt(matext::variance_ma(plan));
  report["mdes_at_h"] = matext::mdes(plan);
  report["inflation_at_h"] = matext::se_inflation(plan);
  if (target_mdes > 0.0) {
    const auto required = matext::required_fraction(plan, target_mdes);
    json r;
    r["target_mdes"] = target_mdes;
    r["h"] = required.h;
    r["feasible"] = required.feasible;
    report["required_fraction"] = r;
  }

  const CsvTable table = matext::curve_table(curve);
  matext::write_csv(out + ".csv", table);
  write_json_file(out + ".json", report);
  write_manifest(out, "plan", 0, report["plan"], {},
                 {out + ".csv", out + ".json"});

  for (const auto& warning : warnings) std::cerr << "warning: " << warning << "\n";
  if (format == "json") {
    std::cout << report.dump(2) << "\n";
  } else {
    std::cout << matext::csv_to_string(table);
    if (target_mdes > 0.0) {
      const auto required = matext::required_fraction(plan, target_mdes);
      std::cout << "required coded fraction for mdes " << matext::format_double(target_mdes)
                << ": "
                << (required.feasible ? matext::format_double(required.h) : "infeasible")
                << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sample

int run_sample(const std::string& data, const std::string& schema_path, int n1, int n0,
               std::uint64_t seed, const std::string& out, const std::string& format) {
  const ColumnSchema schema = resolve_schema(data, schema_path, {});
  const matext::Experiment exp = matext::load_experiment(data, schema);
  // the drawn design lists documents to send for coding, so scores need not
  // exist yet; inclusion probability is the stratified draw rate
  const auto selected = matext::draw_coding_indices(exp, n1, n0, seed);

  CsvTable table;
  table.header = {"id", "arm", "inclusion_prob"};
  json ids = json::array();
  for (const auto i : selected) {
    const auto& d = exp.doc(i);
    const int nz = d.arm == 1 ? n1 : n0;
    const double pi = static_cast<double>(nz) / exp.N_arm(d.arm);
    table.rows.push_back({d.id, std::to_string(d.arm), matext::format_double(pi)});
    json row;
    row["id"] = d.id;
    row["arm"] = d.arm;
    row["inclusion_prob"] = pi;
    ids.push_back(std::move(row));
  }
  json report;
  report["n1"] = n1;
  report["n0"] = n0;
  report["N1"] = exp.N1();
  report["N0"] = exp.N0();
  report["selected"] = std::move(ids);

  matext::write_csv(out + ".csv", table);
  write_json_file(out + ".json", report);
  json params;
  params["data"] = data;
  params["n1"] = n1;
  params["n0"] = n0;
  write_manifest(out, "sample", seed, params, {data}, {out + ".csv", out + ".json"});

  if (format == "json")
    std::cout << report.dump(2) << "\n";
  else
    std::cout << matext::csv_to_string(table);
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

int run_estimate(const std::string& data, const std::string& schema_path,
                 const std::vector<std::string>& covariates, const LearnerFlags& learner,
                 const CrossFitFlags& crossfit, const std::string& compare,
                 double alpha, std::uint64_t seed, const std::string& out,
                 const std::string& format) {
  const ColumnSchema schema = resolve_schema(data, schema_path, covariates);
  const matext::Experiment exp = matext::load_experiment(data, schema);
  const matext::CrossFitPlan plan = crossfit.build(seed);

  std::vector<std::string> kinds;
  const bool exploratory = !compare.empty();
  if (exploratory) {
    for (const auto& part : split_list(compare))
      kinds.push_back(part);
  } else {
    kinds.push_back(learner.kind);
  }

  std::vector<std::string> outputs;
  for (const auto& kind : kinds) {
    const matext::PredictorSpec spec = learner.build(kind);
    const std::vector<double> preds = matext::cross_fit_predict(exp, spec, plan);

    std::vector<matext::ImpactEstimate> estimates;
    if (exp.fully_coded()) estimates.push_back(matext::estimate_oracle(exp, alpha));
    estimates.push_back(matext::estimate_subset(exp, alpha));
    estimates.push_back(matext::estimate_synthetic(exp, preds, alpha));
    estimates.push_back(matext::estimate_model_assisted(exp, preds, alpha));

    json report;
    if (exp.baseline_covariates()) {
      matext::CovariateAdjustedResult adjusted =
          matext::estimate_covariate_adjusted(exp, preds, alpha);
      for (std::size_t c = 2; c < adjusted.coefficients.size(); ++c)
        adjusted.coefficients[c].name = schema.covariates[c - 2];
      json coefs = json::array();
      for (const auto& term : adjusted.coefficients) {
        json t;
        t["name"] = term.name;
        t["estimate"] = term.estimate;
        t["se"] = term.se;
        coefs.push_back(std::move(t));
      }
      report["coefficients"] = std::move(coefs);
      estimates.push_back(adjusted.estimate);
    }
    if (exploratory)
      for (auto& est : estimates)
        est.note += est.note.empty() ? "exploratory" : "; exploratory";

    report["learner"] = spec.to_json();
    report["crossfit"] = plan.to_json();
    report["estimates"] = matext::estimates_json(estimates);
    if (exploratory)
      report["exploratory"] =
          "comparison across learners; pre-specify one model for confirmatory analysis";

    const std::string prefix = exploratory ? out + "." + kind : out;
    const CsvTable table = matext::estimates_table(estimates);
    matext::write_csv(prefix + ".csv", table);
    write_json_file(prefix + ".json", report);
    outputs.push_back(prefix + ".csv");
    outputs.push_back(prefix + ".json");

    if (exploratory) std::cout << "# learner: " << kind << " (exploratory)\n";
    if (format == "json")
      std::cout << report.dump(2) << "\n";
    else
      std::cout << matext::csv_to_string(table);
  }

  json params;
  params["data"] = data;
  params["alpha"] = alpha;
  params["crossfit"] = plan.to_json();
  params["learners"] = kinds;
  if (exploratory) params["exploratory"] = true;
  write_manifest(out, "estimate", seed, params, {data}, outputs);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

int run_simulate(const std::string& config_path, matext::DGPSpec dgp,
                 const std::string& n_list, int replications, const LearnerFlags& learner,
                 const CrossFitFlags& crossfit, int jobs, std::uint64_t seed,
                 double power_effect, const std::string& out, const std::string& format) {
  std::vector<matext::SimCondition> conditions;
  if (!config_path.empty()) {
    const json config = json::parse(matext::read_text_file(config_path));
    dgp = matext::DGPSpec::from_json(config.at("dgp"));
    for (const auto& jc : config.at("conditions"))
      conditions.push_back(matext::SimCondition::from_json(jc));
    if (config.contains("power_effect_sd"))
      power_effect = config.at("power_effect_sd").get<double>();
  } else {
    dgp.seed = seed;
    dgp.validate();
    for (const auto& part : split_list(n_list)) {
      matext::SimCondition condition;
      condition.n = std::stoi(part);
      condition.learner = learner.build(learner.kind);
      condition.crossfit = crossfit.build(0);  // per-replication seeds are derived
      condition.replications = replications;
      conditions.push_back(std::move(condition));
    }
  }

  const matext::SimulationReport report =
      matext::run_simulation(dgp, conditions, jobs, power_effect);

  const CsvTable table = report.to_table();
  matext::write_csv(out + ".csv", table);
  write_json_file(out + ".json", report.to_json());

  json params;
  params["dgp"] = dgp.to_json();
  json jconds = json::array();
  for (const auto& condition : conditions) jconds.push_back(condition.to_json());
  params["conditions"] = std::move(jconds);
  params["power_effect_sd"] = power_effect;
  params["jobs"] = jobs;
  write_manifest(out, "simulate", dgp.seed, params,
                 config_path.empty() ? std::vector<std::string>{}
                                     : std::vector<std::string>{config_path},
                 {out + ".csv", out + ".json"});

  if (format == "json")
    std::cout << report.to_json().dump(2) << "\n";
  else
    std::cout << matext::csv_to_string(table);
  return 0;
}

// ---------------------------------------------------------------------------
// extract

int run_extract(const std::string& input, const std::string& id_col,
                const std::string& text_col, const std::string& merge_path,
                const std::string& schema_path, const std::string& out,
                const std::string& format) {
  matext::CorpusIdRule rule;
  rule.id_column = id_col;
  rule.text_column = text_col;
  const auto rows = matext::extract_corpus(input, rule);
  const CsvTable features = matext::corpus_feature_table(rows);

  CsvTable output = features;
  if (!merge_path.empty()) {
    const ColumnSchema schema = resolve_schema(merge_path, schema_path, {});
    const CsvTable base = matext::read_csv(merge_path);
    const int id_column = base.require_col(schema.id);
    std::map<std::string, std::size_t> by_id;
    for (std::size_t r = 0; r < rows.size(); ++r) by_id[rows[r].id] = r;

    output = base;
    for (std::size_t c = 1; c < features.header.size(); ++c)
      output.header.push_back(features.header[c]);
    std::set<std::string> used;
    for (std::size_t r = 0; r < output.rows.size(); ++r) {
      const std::string& id = output.rows[r][id_column];
      const auto it = by_id.find(id);
      if (it == by_id.end())
        throw matext::Error(matext::ErrorCode::SchemaMismatch,
                            "no extracted features for document '" + id + "'");
      used.insert(id);
      for (std::size_t c = 1; c < features.header.size(); ++c)
        output.rows[r].push_back(features.rows[it->second][c]);
    }
    for (const auto& row : rows)
      if (!used.count(row.id))
        throw matext::Error(matext::ErrorCode::SchemaMismatch,
                            "extracted document '" + row.id + "' is not in the experiment");
  }

  matext::write_csv(out + ".csv", output);
  json report = json::array();
  for (const auto& row : rows) {
    json r;
    r["id"] = row.id;
    r["word_count"] = row.features.word_count;
    r["sentence_count"] = row.features.sentence_count;
    r["words_per_sentence"] = row.features.words_per_sentence;
    r["avg_word_length"] = row.features.avg_word_length;
    r["type_token_ratio"] = row.features.type_token_ratio;
    report.push_back(std::move(r));
  }
  write_json_file(out + ".json", report);
  json params;
  params["input"] = input;
  if (!merge_path.empty()) params["merge"] = merge_path;
  write_manifest(out, "extract", 0, params,
                 merge_path.empty() ? std::vector<std::string>{input}
                                    : std::vector<std::string>{input, merge_path},
                 {out + ".csv", out + ".json"});

  if (format == "json")
    std::cout << report.dump(2) << "\n";
  else
    std::cout << matext::csv_to_string(output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-assisted impact estimation toolkit"};
  app.require_subcommand(1);
  // --h is a documented plan flag, so help gets no short name anywhere.
  app.set_help_flag("--help", "print help");

  std::uint64_t seed = 0;
  std::string out = "matext_out";
  std::string format = "table";
  app.add_option("--seed", seed, "root seed for all randomness")->capture_default_str();
  app.add_option("--out", out, "output path prefix")->capture_default_str();
  app.add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "json"}));

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "closed-form design calculations");
  plan_cmd->set_help_flag("--help", "print help");
  matext::DesignPlan plan;
  double target_mdes = 0.0;
  std::string grid_spec;
  plan_cmd->add_option("--N", plan.N, "total documents");
  plan_cmd->add_option("--p", plan.p, "treated fraction");
  plan_cmd->add_option("--h", plan.h, "coded fraction");
  plan_cmd->add_option("--r2", plan.r2, "assumed predictive r2");
  plan_cmd->add_option("--sigma2", plan.sigma2, "outcome variance");
  plan_cmd->add_option("--alpha", plan.alpha, "test size");
  plan_cmd->add_option("--power", plan.power, "target power");
  plan_cmd->add_option("--multiplier", plan.mdes_multiplier, "mdes multiplier");
  plan_cmd->add_option("--target-mdes", target_mdes, "solve for the required coded fraction");
  plan_cmd->add_option("--h-grid", grid_spec, "comma-separated coded fractions for the curve");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "draw an arm-stratified coding sample");
  std::string data_path, schema_path;
  int n1 = 0, n0 = 0;
  sample_cmd->add_option("--data", data_path, "experiment file")->required();
  sample_cmd->add_option("--schema", schema_path, "column schema JSON");
  sample_cmd->add_option("--n1", n1, "treated documents to code")->required();
  sample_cmd->add_option("--n0", n0, "control documents to code")->required();

  // estimate
  auto* estimate_cmd = app.add_subcommand("estimate", "impact estimates from a coded sample");
  std::string est_data, est_schema, compare;
  std::vector<std::string> covariates;
  double alpha = 0.05;
  LearnerFlags est_learner;
  CrossFitFlags est_crossfit;
  estimate_cmd->add_option("--data", est_data, "experiment file")->required();
  estimate_cmd->add_option("--schema", est_schema, "column schema JSON");
  estimate_cmd->add_option("--covariates", covariates, "baseline covariate columns")
      ->delimiter(',');
  estimate_cmd->add_option("--alpha", alpha, "interval size");
  estimate_cmd->add_option("--compare-learners", compare,
                           "comma-separated kinds; output is labeled exploratory");
  est_learner.add_to(estimate_cmd);
  est_crossfit.add_to(estimate_cmd);

  // simulate
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo evaluation harness");
  std::string config_path, n_list = "100";
  int replications = 2000, jobs = 1;
  double power_effect = 0.25;
  matext::DGPSpec dgp;
  LearnerFlags sim_learner;
  CrossFitFlags sim_crossfit;
  simulate_cmd->add_option("--config", config_path, "simulation config JSON");
  simulate_cmd->add_option("--N", dgp.N, "population size");
  simulate_cmd->add_option("--p", dgp.p, "treated fraction");
  simulate_cmd->add_option("--p-features", dgp.p_features, "feature count");
  simulate_cmd->add_option("--signal", dgp.signal, "target predictive r2 of the outcome model");
  simulate_cmd->add_option("--tau", dgp.tau, "true effect in sd units");
  simulate_cmd->add_option("--n", n_list, "comma-separated coding budgets");
  simulate_cmd->add_option("--replications", replications, "replications per condition");
  simulate_cmd->add_option("--jobs", jobs, "worker threads");
  simulate_cmd->add_option("--power-effect", power_effect, "power target in sd units");
  sim_learner.add_to(simulate_cmd);
  sim_crossfit.add_to(simulate_cmd);

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "text statistics features");
  std::string input, id_col = "id", text_col = "text", merge_path, extract_schema;
  extract_cmd->add_option("--input", input, "directory of text files or delimited file")
      ->required();
  extract_cmd->add_option("--id-col", id_col, "id column for delimited input");
  extract_cmd->add_option("--text-col", text_col, "text column for delimited input");
  extract_cmd->add_option("--merge", merge_path, "experiment file to append features to");
  extract_cmd->add_option("--schema", extract_schema, "schema for the merge target");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(plan_cmd))
      return run_plan(plan, target_mdes, grid_spec, out, format);
    if (app.got_subcommand(sample_cmd))
      return run_sample(data_path, schema_path, n1, n0, seed, out, format);
    if (app.got_subcommand(estimate_cmd))
      return run_estimate(est_data, est_schema, covariates, est_learner, est_crossfit,
                          compare, alpha, seed, out, format);
    if (app.got_subcommand(simulate_cmd))
      return run_simulate(config_path, dgp, n_list, replications, sim_learner, sim_crossfit,
                          jobs, seed, power_effect, out, format);
    if (app.got_subcommand(extract_cmd))
      return run_extract(input, id_col, text_col, merge_path, extract_schema, out, format);
  } catch (const matext::Error& e) {
    std::cerr << "error [" << matext::error_code_name(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
