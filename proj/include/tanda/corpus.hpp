#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tanda {

// One question-sentence pair with its binary relevance label.
struct QAPair {
  std::string question_id;
  std::string question_text;
  std::string sentence_text;
  int label = 0;  // 0 or 1
};

struct Candidate {
  std::string sentence_text;
  int label = 0;
};

// A question with its candidate sentences in file order. `scores` is either
// empty or aligned one-to-one with `candidates`.
struct QuestionGroup {
  std::string question_id;
  std::string question_text;
  std::vector<Candidate> candidates;
  std::vector<double> scores;

  int positives() const;
  int negatives() const;
};

using Dataset = std::vector<QuestionGroup>;

// Evaluation settings: RAW keeps everything, NO_ALL_NEG drops questions with
// no positive candidate, CLEAN additionally drops questions with no negative.
enum class DatasetMode { Raw, NoAllNeg, Clean };

DatasetMode mode_from_string(std::string_view name);
std::string to_string(DatasetMode mode);

struct DatasetStats {
  size_t n_questions = 0;
  size_t n_pairs = 0;
  size_t n_pos = 0;
  size_t n_neg = 0;
};

// Collapses runs of ASCII whitespace to single spaces and trims the ends.
std::string normalize_whitespace(std::string_view text);

// Reads `question_id<TAB>question<TAB>sentence<TAB>label` lines. Lines with
// the same question_id must be contiguous; `#`-prefixed lines are comments.
// Throws DataError with a 1-based line number on malformed input.
Dataset parse_as2_tsv(std::istream& in);
Dataset parse_as2_file(const std::string& path);

void serialize_as2_tsv(const Dataset& groups, std::ostream& out);
std::string serialize_as2_tsv(const Dataset& groups);
void write_as2_file(const Dataset& groups, const std::string& path);

Dataset filter_mode(Dataset groups, DatasetMode mode);

DatasetStats dataset_stats(const Dataset& groups);

// Score files: one decimal number per line, aligned with the data lines of
// the TSV they accompany.
std::vector<double> parse_scores(std::istream& in);
std::vector<double> parse_scores_file(const std::string& path);

// Distributes a flat score list over the groups, in pair order.
void attach_scores(Dataset& groups, const std::vector<double>& scores);

std::vector<QAPair> flatten(const Dataset& groups);

// Inverse of flatten for contiguous ids; scores are dropped.
Dataset regroup(const std::vector<QAPair>& pairs);

}  // namespace tanda
