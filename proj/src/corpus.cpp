#include "tanda/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "tanda/errors.hpp"

namespace tanda {

int QuestionGroup::positives() const {
  int n = 0;
  for (const auto& c : candidates) n += c.label;
  return n;
}

int QuestionGroup::negatives() const {
  return static_cast<int>(candidates.size()) - positives();
}

DatasetMode mode_from_string(std::string_view name) {
  if (name == "raw") return DatasetMode::Raw;
  if (name == "no-all-neg" || name == "no_all_neg") return DatasetMode::NoAllNeg;
  if (name == "clean") return DatasetMode::Clean;
  throw ConfigError("unknown dataset mode: " + std::string(name));
}

std::string to_string(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::Raw: return "raw";
    case DatasetMode::NoAllNeg: return "no-all-neg";
    case DatasetMode::Clean: return "clean";
  }
  return "raw";
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;  // trims leading whitespace
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_space = false;
    }
  }
  return out;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

[[noreturn]] void parse_fail(size_t line_no, const std::string& what) {
  throw DataError("as2 tsv line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

Dataset parse_as2_tsv(std::istream& in) {
  Dataset groups;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      parse_fail(line_no, "expected 4 tab-separated columns, got " +
                              std::to_string(fields.size()));
    }
    const std::string id(fields[0]);
    const std::string question = normalize_whitespace(fields[1]);
    const std::string sentence = normalize_whitespace(fields[2]);
    if (id.empty()) parse_fail(line_no, "empty question_id");
    if (question.empty()) parse_fail(line_no, "empty question text");
    if (sentence.empty()) parse_fail(line_no, "empty sentence text");
    int label;
    if (fields[3] == "0") {
      label = 0;
    } else if (fields[3] == "1") {
      label = 1;
    } else {
      parse_fail(line_no, "label must be 0 or 1, got '" +
                              std::string(fields[3]) + "'");
    }

    if (!groups.empty() && groups.back().question_id == id) {
      groups.back().candidates.push_back({sentence, label});
      continue;
    }
    if (seen_ids.count(id)) {
      parse_fail(line_no, "question_id '" + id + "' is not contiguous");
    }
    seen_ids.insert(id);
    QuestionGroup g;
    g.question_id = id;
    g.question_text = question;
    g.candidates.push_back({sentence, label});
    groups.push_back(std::move(g));
  }
  return groups;
}

Dataset parse_as2_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_as2_tsv(in);
}

void serialize_as2_tsv(const Dataset& groups, std::ostream& out) {
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      out << g.question_id << '\t' << g.question_text << '\t'
          << c.sentence_text << '\t' << c.label << '\n';
    }
  }
}

std::string serialize_as2_tsv(const Dataset& groups) {
  std::ostringstream out;
  serialize_as2_tsv(groups, out);
  return out.str();
}

void write_as2_file(const Dataset& groups, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  serialize_as2_tsv(groups, out);
  if (!out) throw DataError("write failed: " + path);
}

Dataset filter_mode(Dataset groups, DatasetMode mode) {
  if (mode == DatasetMode::Raw) return groups;
  Dataset kept;
  kept.reserve(groups.size());
  for (auto& g : groups) {
    if (g.positives() == 0) continue;
    if (mode == DatasetMode::Clean && g.negatives() == 0) continue;
    kept.push_back(std::move(g));
  }
  return kept;
}

DatasetStats dataset_stats(const Dataset& groups) {
  DatasetStats stats;
  stats.n_questions = groups.size();
  for (const auto& g : groups) {
    stats.n_pairs += g.candidates.size();
    stats.n_pos += static_cast<size_t>(g.positives());
  }
  stats.n_neg = stats.n_pairs - stats.n_pos;
  return stats;
}

std::vector<double> parse_scores(std::istream& in) {
  std::vector<double> scores;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      size_t used = 0;
      const double value = std::stod(line, &used);
      while (used < line.size() &&
             std::isspace(static_cast<unsigned char>(line[used]))) {
        ++used;
      }
      if (used != line.size()) throw std::invalid_argument("trailing junk");
      scores.push_back(value);
    } catch (const std::exception&) {
      throw DataError("score file line " + std::to_string(line_no) +
                      ": not a number: '" + line + "'");
    }
  }
  return scores;
}

std::vector<double> parse_scores_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_scores(in);
}

void attach_scores(Dataset& groups, const std::vector<double>& scores) {
  size_t total = 0;
  for (const auto& g : groups) total += g.candidates.size();
  if (scores.size() != total) {
    throw DataError("score count " + std::to_string(scores.size()) +
                    " does not match pair count " + std::to_string(total));
  }
  size_t next = 0;
  for (auto& g : groups) {
    g.scores.assign(scores.begin() + static_cast<long>(next),
                    scores.begin() + static_cast<long>(next + g.candidates.size()));
    next += g.candidates.size();
  }
}

std::vector<QAPair> flatten(const Dataset& groups) {
  std::vector<QAPair> pairs;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      pairs.push_back({g.question_id, g.question_text, c.sentence_text, c.label});
    }
  }
  return pairs;
}

Dataset regroup(const std::vector<QAPair>& pairs) {
  Dataset groups;
  for (const auto& p : pairs) {
    if (groups.empty() || groups.back().question_id != p.question_id) {
      QuestionGroup g;
      g.question_id = p.question_id;
      g.question_text = p.question_text;
      groups.push_back(std::move(g));
    }
    groups.back().candidates.push_back({p.sentence_text, p.label});
  }
  return groups;
}

}  // namespace tanda
