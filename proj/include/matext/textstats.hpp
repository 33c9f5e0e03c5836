#pragma once

#include <string>
#include <vector>

#include "matext/csv.hpp"

namespace matext {

/// Surface text statistics. Token rule, stated exactly because the
/// type-token ratio depends on it: the text splits into maximal runs of
/// non-whitespace bytes (whitespace = space, \t, \n, \r, \f, \v); each run
/// is lowercased (ASCII letters only) and stripped of leading and trailing
/// ASCII punctuation; runs left empty are dropped, except that a text whose
/// runs all strip to empty keeps the unstripped runs as tokens. Sentences
/// are the segments between maximal runs of {. ! ?} that contain any
/// non-whitespace byte; a text with no such terminator counts as one
/// sentence. Bytes outside ASCII pass through untouched.
struct TextFeatures {
  int word_count = 0;
  int sentence_count = 0;
  double words_per_sentence = 0.0;
  double avg_word_length = 0.0;
  double type_token_ratio = 0.0;
};

/// Rejects text that is empty after whitespace trim (EmptyText).
TextFeatures extract_features(const std::string& text);

struct CorpusRow {
  std::string id;
  TextFeatures features;
};

/// Column names for delimited corpus input; a directory input ignores this
/// and takes each regular file as one document with the filename stem as id.
struct CorpusIdRule {
  std::string id_column = "id";
  std::string text_column = "text";
};

/// Extracts features for every document in a directory of text files or a
/// delimited file with (id, text) columns. Rows come back sorted by id;
/// duplicate ids are rejected.
std::vector<CorpusRow> extract_corpus(const std::string& path, const CorpusIdRule& rule = {});

/// Flat table keyed by id with txt_-prefixed feature columns, ready to merge
/// into an experiment file as features.
CsvTable corpus_feature_table(const std::vector<CorpusRow>& rows);

}  // namespace matext
