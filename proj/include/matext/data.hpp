#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace matext {

/// One unit of the experiment: a document with its arm assignment, extracted
/// feature vector, and (when human-coded) rubric score.
struct Document {
  std::string id;
  int arm = 0;  // 0 = control, 1 = treated
  std::vector<double> features;
  std::optional<std::string> raw_text;
  std::optional<double> human_score;
  std::optional<double> predicted_score;
  bool coded = false;
  /// n_z / N_z for the document's arm once a coding design is applied;
  /// unset before any design. Must lie in (0, 1] when set.
  std::optional<double> inclusion_prob;
};

/// Immutable unit-level dataset. Construction validates all invariants;
/// operations that change coding state return a new Experiment.
class Experiment {
 public:
  static Experiment from_documents(std::vector<Document> docs,
                                   std::optional<Eigen::MatrixXd> baseline_covariates = {});

  const std::vector<Document>& documents() const { return docs_; }
  const Document& doc(std::size_t i) const { return docs_[i]; }

  int N() const { return static_cast<int>(docs_.size()); }
  int N_arm(int arm) const { return arm == 1 ? N1_ : N0_; }
  int N1() const { return N1_; }
  int N0() const { return N0_; }
  int n_arm(int arm) const { return arm == 1 ? n1_ : n0_; }
  int n1() const { return n1_; }      // coded count, treated
  int n0() const { return n0_; }      // coded count, control
  int n_features() const { return p_; }

  bool fully_coded() const { return n1_ == N1_ && n0_ == N0_; }

  const std::optional<Eigen::MatrixXd>& baseline_covariates() const { return covariates_; }

  /// N x p dense feature matrix, row i = documents()[i].features.
  Eigen::MatrixXd feature_matrix() const;

  /// Indices of documents in the given arm, ascending.
  std::vector<std::size_t> arm_indices(int arm) const;
  /// Indices of coded documents in the given arm, ascending.
  std::vector<std::size_t> coded_indices(int arm) const;

 private:
  Experiment() = default;
  std::vector<Document> docs_;
  std::optional<Eigen::MatrixXd> covariates_;
  int N1_ = 0, N0_ = 0, n1_ = 0, n0_ = 0, p_ = 0;
};

/// Column-name mapping from a delimited file to the experiment data model.
/// `features` lists feature columns explicitly; `feature_prefix`, when
/// non-empty, additionally pulls in every column with that prefix. Optional
/// roles are disabled by empty strings.
struct ColumnSchema {
  std::string id = "id";
  std::string arm = "arm";
  std::vector<std::string> features;
  std::string feature_prefix;
  std::string human_score;
  std::string coded;
  std::string inclusion_prob;
  std::string raw_text;
  std::vector<std::string> covariates;

  static ColumnSchema from_json(const nlohmann::json& j);
  static ColumnSchema from_json_file(const std::string& path);
  nlohmann::json to_json() const;
};

/// Loads and validates an experiment from a comma-separated file (header row
/// required). Arm values outside {0,1} and rows with missing features are
/// rejected with the offending row reported. When the file carries coded
/// flags (or scores) but no inclusion-probability column, per-arm
/// probabilities n_z/N_z are filled in.
Experiment load_experiment(const std::string& data_path, const ColumnSchema& schema);

/// Draws an arm-stratified simple random sample without replacement:
/// n1 treated and n0 control indices, uniform over same-size subsets,
/// deterministic given seed. Returned indices are ascending.
std::vector<std::size_t> draw_coding_indices(const Experiment& exp, int n1, int n0,
                                             std::uint64_t seed);

/// Applies a coding design: exactly n_z documents per arm get coded = true
/// (where scores exist) and every document in arm z gets
/// inclusion_prob = n_z/N_z. Previous coding state is discarded.
Experiment select_coding_sample(const Experiment& exp, int n1, int n0, std::uint64_t seed);

/// Writes the experiment back to a delimited file using the given schema
/// names; reloading yields identical field values.
void save_experiment_csv(const Experiment& exp, const std::string& path,
                         const ColumnSchema& schema);

nlohmann::json experiment_to_json(const Experiment& exp);
Experiment experiment_from_json(const nlohmann::json& j);

}  // namespace matext
