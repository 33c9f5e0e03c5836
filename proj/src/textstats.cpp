#include "matext/textstats.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "matext/error.hpp"
#include "matext/stats.hpp"

namespace matext {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

std::string strip_punct(const std::string& token) {
  std::size_t begin = 0, end = token.size();
  while (begin < end && std::ispunct(static_cast<unsigned char>(token[begin]))) ++begin;
  while (end > begin && std::ispunct(static_cast<unsigned char>(token[end - 1]))) --end;
  return token.substr(begin, end - begin);
}

}  // namespace

TextFeatures extract_features(const std::string& text) {
  std::vector<std::string> raw;
  std::string current;
  for (char c : text) {
    if (is_space(c)) {
      if (!current.empty()) raw.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!current.empty()) raw.push_back(std::move(current));
  if (raw.empty()) throw Error(ErrorCode::EmptyText, "text is empty after whitespace trim");

  std::vector<std::string> words;
  for (const auto& token : raw) {
    std::string stripped = strip_punct(token);
    if (!stripped.empty()) words.push_back(std::move(stripped));
  }
  if (words.empty()) words = raw;  // all-punctuation text still counts its runs as words

  int sentences = 0;
  bool segment_has_content = false;
  for (char c : text) {
    if (is_terminator(c)) {
      if (segment_has_content) ++sentences;
      segment_has_content = false;
    } else if (!is_space(c)) {
      segment_has_content = true;
    }
  }
  if (segment_has_content) ++sentences;
  sentences = std::max(1, sentences);

  TextFeatures features;
  features.word_count = static_cast<int>(words.size());
  features.sentence_count = sentences;
  features.words_per_sentence =
      static_cast<double>(features.word_count) / features.sentence_count;
  std::size_t total_chars = 0;
  std::set<std::string> distinct;
  for (const auto& word : words) {
    total_chars += word.size();
    distinct.insert(word);
  }
  features.avg_word_length = static_cast<double>(total_chars) / features.word_count;
  features.type_token_ratio = static_cast<double>(distinct.size()) / features.word_count;
  return features;
}

std::vector<CorpusRow> extract_corpus(const std::string& path, const CorpusIdRule& rule) {
  namespace fs = std::filesystem;
  std::vector<CorpusRow> rows;
  std::set<std::string> seen;

  const auto add = [&](const std::string& id, const std::string& text) {
    if (!seen.insert(id).second)
      throw Error(ErrorCode::DuplicateId, "duplicate document id '" + id + "'");
    rows.push_back({id, extract_features(text)});
  };

  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) add(file.stem().string(), read_text_file(file.string()));
  } else {
    const CsvTable table = read_csv(path);
    const int id_col = table.require_col(rule.id_column);
    const int text_col = table.require_col(rule.text_column);
    for (const auto& row : table.rows) add(row[id_col], row[text_col]);
  }

  std::sort(rows.begin(), rows.end(),
            [](const CorpusRow& a, const CorpusRow& b) { return a.id < b.id; });
  return rows;
}

CsvTable corpus_feature_table(const std::vector<CorpusRow>& rows) {
  CsvTable table;
  table.header = {"id",
                  "txt_word_count",
                  "txt_sentence_count",
                  "txt_words_per_sentence",
                  "txt_avg_word_length",
                  "txt_type_token_ratio"};
  for (const auto& row : rows)
    table.rows.push_back({row.id, std::to_string(row.features.word_count),
                          std::to_string(row.features.sentence_count),
                          format_double(row.features.words_per_sentence),
                          format_double(row.features.avg_word_length),
                          format_double(row.features.type_token_ratio)});
  return table;
}

}  // namespace matext
