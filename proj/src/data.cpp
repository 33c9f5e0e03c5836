#include "matext/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "matext/csv.hpp"
#include "matext/error.hpp"
#include "matext/rng.hpp"
#include "matext/stats.hpp"

namespace matext {

using nlohmann::json;

Experiment Experiment::from_documents(std::vector<Document> docs,
                                      std::optional<Eigen::MatrixXd> baseline_covariates) {
  Experiment exp;
  exp.docs_ = std::move(docs);
  exp.p_ = exp.docs_.empty() ? 0 : static_cast<int>(exp.docs_.front().features.size());
  for (std::size_t i = 0; i < exp.docs_.size(); ++i) {
    const Document& d = exp.docs_[i];
    if (d.arm != 0 && d.arm != 1)
      throw Error(ErrorCode::InvalidArm,
                  "document '" + d.id + "' has arm " + std::to_string(d.arm));
    if (static_cast<int>(d.features.size()) != exp.p_)
      throw Error(ErrorCode::WidthMismatch,
                  "document '" + d.id + "' has " + std::to_string(d.features.size()) +
                      " features, expected " + std::to_string(exp.p_));
    for (double x : d.features) {
      if (!std::isfinite(x))
        throw Error(ErrorCode::MissingFeature,
                    "document '" + d.id + "' has a non-finite feature value");
    }
    if (d.coded && !d.human_score.has_value())
      throw Error(ErrorCode::CodedWithoutScore,
                  "document '" + d.id + "' is coded but has no human score");
    if (d.human_score && !std::isfinite(*d.human_score))
      throw Error(ErrorCode::NonFiniteInput, "document '" + d.id + "' has non-finite score");
    if (d.inclusion_prob) {
      const double pi = *d.inclusion_prob;
      if (!(pi > 0.0 && pi <= 1.0))
        throw Error(ErrorCode::SchemaMismatch,
                    "document '" + d.id + "' has inclusion_prob outside (0,1]");
    }
    if (d.arm == 1) {
      ++exp.N1_;
      if (d.coded) ++exp.n1_;
    } else {
      ++exp.N0_;
      if (d.coded) ++exp.n0_;
    }
  }
  if (baseline_covariates) {
    if (baseline_covariates->rows() != static_cast<Eigen::Index>(exp.docs_.size()))
      throw Error(ErrorCode::MissingCovariates,
                  "baseline covariate matrix has " + std::to_string(baseline_covariates->rows()) +
                      " rows, expected " + std::to_string(exp.docs_.size()));
    if (!baseline_covariates->allFinite())
      throw Error(ErrorCode::NonFiniteInput, "baseline covariates contain non-finite values");
    exp.covariates_ = std::move(baseline_covariates);
  }
  return exp;
}

Eigen::MatrixXd Experiment::feature_matrix() const {
  Eigen::MatrixXd X(docs_.size(), p_);
  for (std::size_t i = 0; i < docs_.size(); ++i)
    for (int j = 0; j < p_; ++j) X(static_cast<Eigen::Index>(i), j) = docs_[i].features[j];
  return X;
}

std::vector<std::size_t> Experiment::arm_indices(int arm) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < docs_.size(); ++i)
    if (docs_[i].arm == arm) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> Experiment::coded_indices(int arm) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < docs_.size(); ++i)
    if (docs_[i].arm == arm && docs_[i].coded) idx.push_back(i);
  return idx;
}

// ---------------------------------------------------------------------------
// Schema mapping

ColumnSchema ColumnSchema::from_json(const json& j) {
  ColumnSchema s;
  if (!j.contains("id") || !j.contains("arm"))
    throw Error(ErrorCode::SchemaMismatch, "schema must name 'id' and 'arm' columns");
  s.id = j.at("id").get<std::string>();
  s.arm = j.at("arm").get<std::string>();
  if (j.contains("features")) s.features = j.at("features").get<std::vector<std::string>>();
  if (j.contains("feature_prefix")) s.feature_prefix = j.at("feature_prefix").get<std::string>();
  if (j.contains("human_score")) s.human_score = j.at("human_score").get<std::string>();
  if (j.contains("coded")) s.coded = j.at("coded").get<std::string>();
  if (j.contains("inclusion_prob")) s.inclusion_prob = j.at("inclusion_prob").get<std::string>();
  if (j.contains("raw_text")) s.raw_text = j.at("raw_text").get<std::string>();
  if (j.contains("covariates")) s.covariates = j.at("covariates").get<std::vector<std::string>>();
  return s;
}

ColumnSchema ColumnSchema::from_json_file(const std::string& path) {
  return from_json(json::parse(read_text_file(path)));
}

json ColumnSchema::to_json() const {
  json j;
  j["id"] = id;
  j["arm"] = arm;
  j["features"] = features;
  if (!feature_prefix.empty()) j["feature_prefix"] = feature_prefix;
  if (!human_score.empty()) j["human_score"] = human_score;
  if (!coded.empty()) j["coded"] = coded;
  if (!inclusion_prob.empty()) j["inclusion_prob"] = inclusion_prob;
  if (!raw_text.empty()) j["raw_text"] = raw_text;
  if (!covariates.empty()) j["covariates"] = covariates;
  return j;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_flag(const std::string& raw, bool& out) {
  std::string s;
  for (char c : raw) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s.empty() || s == "0" || s == "false" || s == "no") {
    out = false;
    return true;
  }
  if (s == "1" || s == "true" || s == "yes") {
    out = true;
    return true;
  }
  return false;
}

}  // namespace

Experiment load_experiment(const std::string& data_path, const ColumnSchema& schema) {
  const CsvTable table = read_csv(data_path);

  const int id_col = table.require_col(schema.id);
  const int arm_col = table.require_col(schema.arm);

  std::vector<int> feature_cols;
  std::vector<std::string> taken = {schema.id, schema.arm};
  if (!schema.human_score.empty()) taken.push_back(schema.human_score);
  if (!schema.coded.empty()) taken.push_back(schema.coded);
  if (!schema.inclusion_prob.empty()) taken.push_back(schema.inclusion_prob);
  if (!schema.raw_text.empty()) taken.push_back(schema.raw_text);
  for (const auto& c : schema.covariates) taken.push_back(c);

  std::set<int> seen;
  for (const auto& name : schema.features) {
    const int c = table.require_col(name);
    if (seen.insert(c).second) feature_cols.push_back(c);
  }
  if (!schema.feature_prefix.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const std::string& name = table.header[c];
      if (name.rfind(schema.feature_prefix, 0) != 0) continue;
      if (std::find(taken.begin(), taken.end(), name) != taken.end()) continue;
      if (seen.insert(static_cast<int>(c)).second) feature_cols.push_back(static_cast<int>(c));
    }
  }
  if (feature_cols.empty())
    throw Error(ErrorCode::SchemaMismatch, "schema must name at least one feature column");

  const int score_col = schema.human_score.empty() ? -1 : table.require_col(schema.human_score);
  const int coded_col = schema.coded.empty() ? -1 : table.require_col(schema.coded);
  const int pi_col =
      schema.inclusion_prob.empty() ? -1 : table.require_col(schema.inclusion_prob);
  const int text_col = schema.raw_text.empty() ? -1 : table.require_col(schema.raw_text);
  std::vector<int> cov_cols;
  for (const auto& name : schema.covariates) cov_cols.push_back(table.require_col(name));

  std::vector<Document> docs;
  docs.reserve(table.rows.size());
  std::optional<Eigen::MatrixXd> covariates;
  if (!cov_cols.empty())
    covariates = Eigen::MatrixXd(table.rows.size(), cov_cols.size());

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string row_name = "row " + std::to_string(r + 1);
    Document d;
    d.id = row[id_col];

    const std::string& arm_raw = row[arm_col];
    if (arm_raw == "0") {
      d.arm = 0;
    } else if (arm_raw == "1") {
      d.arm = 1;
    } else {
      throw Error(ErrorCode::InvalidArm, row_name + ": arm value '" + arm_raw + "'");
    }

    d.features.reserve(feature_cols.size());
    for (int c : feature_cols) {
      double x;
      if (!parse_double(row[c], x) || !std::isfinite(x))
        throw Error(ErrorCode::MissingFeature,
                    row_name + ": feature column '" + table.header[c] + "' is missing or invalid");
      d.features.push_back(x);
    }

    if (score_col >= 0 && !row[score_col].empty()) {
      double y;
      if (!parse_double(row[score_col], y))
        throw Error(ErrorCode::SchemaMismatch, row_name + ": unparseable score");
      d.human_score = y;
    }

    if (coded_col >= 0) {
      bool flag;
      if (!parse_flag(row[coded_col], flag))
        throw Error(ErrorCode::SchemaMismatch,
                    row_name + ": unparseable coded flag '" + row[coded_col] + "'");
      if (flag && !d.human_score)
        throw Error(ErrorCode::CodedWithoutScore, row_name + ": coded=true but score is empty");
      d.coded = flag;
    } else {
      d.coded = d.human_score.has_value();
    }

    if (pi_col >= 0 && !row[pi_col].empty()) {
      double pi;
      if (!parse_double(row[pi_col], pi) || !(pi > 0.0 && pi <= 1.0))
        throw Error(ErrorCode::SchemaMismatch,
                    row_name + ": inclusion_prob must lie in (0,1]");
      d.inclusion_prob = pi;
    }

    if (text_col >= 0 && !row[text_col].empty()) d.raw_text = row[text_col];

    for (std::size_t q = 0; q < cov_cols.size(); ++q) {
      double w;
      if (!parse_double(row[cov_cols[q]], w) || !std::isfinite(w))
        throw Error(ErrorCode::MissingCovariates,
                    row_name + ": covariate column '" + table.header[cov_cols[q]] +
                        "' is missing or invalid");
      (*covariates)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) = w;
    }

    docs.push_back(std::move(d));
  }

  Experiment exp = Experiment::from_documents(std::move(docs), std::move(covariates));

  // Fill per-arm design probabilities for an applied coding design when the
  // file does not carry them explicitly.
  if (pi_col < 0 && (exp.n1() > 0 || exp.n0() > 0)) {
    std::vector<Document> patched = exp.documents();
    for (auto& d : patched) {
      const int nz = exp.n_arm(d.arm);
      const int Nz = exp.N_arm(d.arm);
      if (nz > 0) d.inclusion_prob = static_cast<double>(nz) / static_cast<double>(Nz);
    }
    exp = Experiment::from_documents(std::move(patched), exp.baseline_covariates());
  }
  return exp;
}

// ---------------------------------------------------------------------------
// Coding design

std::vector<std::size_t> draw_coding_indices(const Experiment& exp, int n1, int n0,
                                             std::uint64_t seed) {
  if (n1 < 0 || n0 < 0 || (n1 == 0 && n0 == 0))
    throw Error(ErrorCode::NonPositiveSample,
                "coding sample sizes must be non-negative with at least one positive");
  if (n1 > exp.N1())
    throw Error(ErrorCode::SampleTooLarge,
                "n1=" + std::to_string(n1) + " exceeds N1=" + std::to_string(exp.N1()));
  if (n0 > exp.N0())
    throw Error(ErrorCode::SampleTooLarge,
                "n0=" + std::to_string(n0) + " exceeds N0=" + std::to_string(exp.N0()));

  Rng rng(seed);
  std::vector<std::size_t> selected;
  for (int arm : {1, 0}) {
    const int nz = arm == 1 ? n1 : n0;
    const auto pool = exp.arm_indices(arm);
    const auto pick = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(nz));
    for (std::size_t k : pick) selected.push_back(pool[k]);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

Experiment select_coding_sample(const Experiment& exp, int n1, int n0, std::uint64_t seed) {
  const auto selected = draw_coding_indices(exp, n1, n0, seed);
  std::vector<bool> in_sample(exp.N(), false);
  for (std::size_t i : selected) in_sample[i] = true;

  std::vector<Document> docs = exp.documents();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Document& d = docs[i];
    d.coded = in_sample[i] && d.human_score.has_value();
    const int nz = d.arm == 1 ? n1 : n0;
    const int Nz = exp.N_arm(d.arm);
    if (nz > 0)
      d.inclusion_prob = static_cast<double>(nz) / static_cast<double>(Nz);
    else
      d.inclusion_prob.reset();
  }
  return Experiment::from_documents(std::move(docs), exp.baseline_covariates());
}

// ---------------------------------------------------------------------------
// Serialization

void save_experiment_csv(const Experiment& exp, const std::string& path,
                         const ColumnSchema& schema) {
  const int p = exp.n_features();
  std::vector<std::string> feature_names = schema.features;
  if (static_cast<int>(feature_names.size()) != p) {
    feature_names.clear();
    const std::string prefix = schema.feature_prefix.empty() ? "x" : schema.feature_prefix;
    for (int j = 0; j < p; ++j) feature_names.push_back(prefix + std::to_string(j));
  }
  const std::string score_name = schema.human_score.empty() ? "human_score" : schema.human_score;
  const std::string coded_name = schema.coded.empty() ? "coded" : schema.coded;
  const std::string pi_name =
      schema.inclusion_prob.empty() ? "inclusion_prob" : schema.inclusion_prob;

  bool any_text = false, any_pred = false;
  for (const auto& d : exp.documents()) {
    any_text |= d.raw_text.has_value();
    any_pred |= d.predicted_score.has_value();
  }

  CsvTable table;
  table.header = {schema.id, schema.arm};
  for (const auto& f : feature_names) table.header.push_back(f);
  table.header.push_back(score_name);
  table.header.push_back(coded_name);
  table.header.push_back(pi_name);
  if (any_pred) table.header.push_back("predicted_score");
  if (any_text) table.header.push_back(schema.raw_text.empty() ? "raw_text" : schema.raw_text);

  const int q = exp.baseline_covariates() ? static_cast<int>(exp.baseline_covariates()->cols()) : 0;
  std::vector<std::string> cov_names = schema.covariates;
  if (static_cast<int>(cov_names.size()) != q) {
    cov_names.clear();
    for (int k = 0; k < q; ++k) cov_names.push_back("cov" + std::to_string(k));
  }
  for (const auto& c : cov_names) table.header.push_back(c);

  for (int i = 0; i < exp.N(); ++i) {
    const Document& d = exp.doc(static_cast<std::size_t>(i));
    std::vector<std::string> row = {d.id, std::to_string(d.arm)};
    for (double x : d.features) row.push_back(format_double(x));
    row.push_back(d.human_score ? format_double(*d.human_score) : "");
    row.push_back(d.coded ? "1" : "0");
    row.push_back(d.inclusion_prob ? format_double(*d.inclusion_prob) : "");
    if (any_pred) row.push_back(d.predicted_score ? format_double(*d.predicted_score) : "");
    if (any_text) row.push_back(d.raw_text.value_or(""));
    for (int k = 0; k < q; ++k)
      row.push_back(format_double((*exp.baseline_covariates())(i, k)));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

json experiment_to_json(const Experiment& exp) {
  json docs = json::array();
  for (const auto& d : exp.documents()) {
    json jd;
    jd["id"] = d.id;
    jd["arm"] = d.arm;
    jd["features"] = d.features;
    jd["coded"] = d.coded;
    if (d.human_score) jd["human_score"] = *d.human_score;
    if (d.predicted_score) jd["predicted_score"] = *d.predicted_score;
    if (d.inclusion_prob) jd["inclusion_prob"] = *d.inclusion_prob;
    if (d.raw_text) jd["raw_text"] = *d.raw_text;
    docs.push_back(std::move(jd));
  }
  json j;
  j["documents"] = std::move(docs);
  if (exp.baseline_covariates()) {
    const auto& W = *exp.baseline_covariates();
    json rows = json::array();
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < W.cols(); ++k) row.push_back(W(i, k));
      rows.push_back(std::move(row));
    }
    j["baseline_covariates"] = std::move(rows);
  }
  return j;
}

Experiment experiment_from_json(const json& j) {
  std::vector<Document> docs;
  for (const auto& jd : j.at("documents")) {
    Document d;
    d.id = jd.at("id").get<std::string>();
    d.arm = jd.at("arm").get<int>();
    d.features = jd.at("features").get<std::vector<double>>();
    d.coded = jd.at("coded").get<bool>();
    if (jd.contains("human_score")) d.human_score = jd.at("human_score").get<double>();
    if (jd.contains("predicted_score"))
      d.predicted_score = jd.at("predicted_score").get<double>();
    if (jd.contains("inclusion_prob")) d.inclusion_prob = jd.at("inclusion_prob").get<double>();
    if (jd.contains("raw_text")) d.raw_text = jd.at("raw_text").get<std::string>();
    docs.push_back(std::move(d));
  }
  std::optional<Eigen::MatrixXd> covariates;
  if (j.contains("baseline_covariates")) {
    const auto& rows = j.at("baseline_covariates");
    if (!rows.empty()) {
      Eigen::MatrixXd W(rows.size(), rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
          W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k].get<double>();
      covariates = std::move(W);
    }
  }
  return Experiment::from_documents(std::move(docs), std::move(covariates));
}

}  // namespace matext
