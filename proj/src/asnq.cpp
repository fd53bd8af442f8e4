#include "tanda/asnq.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "tanda/corpus.hpp"
#include "tanda/errors.hpp"

namespace tanda {

namespace {

using nlohmann::json;

std::string id_to_string(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<int64_t>());
  if (value.is_number_unsigned()) return std::to_string(value.get<uint64_t>());
  throw DataError("example_id is neither string nor integer");
}

TokenSpan span_from_json(const json& node) {
  TokenSpan span;
  span.start = node.at("start_token").get<int64_t>();
  span.end = node.at("end_token").get<int64_t>();
  return span;
}

}  // namespace

NQRecord parse_nq_record(std::string_view json_line) {
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad NQ json line: ") + e.what());
  }

  NQRecord record;
  try {
    record.example_id = id_to_string(j.at("example_id"));
  } catch (const json::exception& e) {
    throw DataError(std::string("NQ record without example_id: ") + e.what());
  }

  try {
    record.question_text = j.at("question_text").get<std::string>();
    const auto& tokens = j.at("document_tokens");
    record.document_tokens.reserve(tokens.size());
    for (const auto& t : tokens) {
      DocToken tok;
      tok.token = t.at("token").get<std::string>();
      tok.is_html = t.at("html_token").get<bool>();
      record.document_tokens.push_back(std::move(tok));
    }
    if (record.document_tokens.empty()) {
      throw DataError("empty document_tokens");
    }
    const int64_t n_tokens = static_cast<int64_t>(record.document_tokens.size());
    for (const auto& a : j.at("annotations")) {
      Annotation ann;
      if (a.contains("long_answer")) {
        TokenSpan la = span_from_json(a.at("long_answer"));
        if (!(la.start == -1 && la.end == -1)) {  // NQ null-span convention
          if (la.start < 0 || la.end > n_tokens || la.start >= la.end) {
            throw DataError("long_answer span out of range");
          }
          ann.long_answer = la;
        }
      }
      if (a.contains("short_answers")) {
        for (const auto& s : a.at("short_answers")) {
          TokenSpan sa = span_from_json(s);
          if (sa.start < 0 || sa.end > n_tokens || sa.start >= sa.end) {
            throw DataError("short_answer span out of range");
          }
          ann.short_answers.push_back(sa);
        }
      }
      if (a.contains("yes_no_answer")) {
        ann.yes_no_answer = a.at("yes_no_answer").get<std::string>();
      }
      record.annotations.push_back(std::move(ann));
    }
  } catch (const json::exception& e) {
    throw DataError("bad NQ record " + record.example_id + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("bad NQ record " + record.example_id + ": " + e.what());
  }
  return record;
}

namespace {

bool is_block_level_tag(std::string_view token) {
  // Strip <, </, trailing /> or >; lowercase the tag name.
  size_t begin = 0;
  size_t end = token.size();
  if (begin < end && token[begin] == '<') ++begin;
  if (begin < end && token[begin] == '/') ++begin;
  while (end > begin && (token[end - 1] == '>' || token[end - 1] == '/')) --end;
  std::string name;
  for (size_t i = begin; i < end; ++i) {
    const char c = token[i];
    if (std::isspace(static_cast<unsigned char>(c))) break;
    name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  static const std::set<std::string> kBlockTags = {
      "p",  "table", "tr", "td", "th", "ul", "ol",         "li",
      "dl", "dt",    "dd", "div", "h1", "h2", "h3",        "h4",
      "h5", "h6",    "br", "blockquote",     "pre"};
  return kBlockTags.count(name) > 0;
}

bool is_terminal_punct(const std::string& token) {
  return token == "." || token == "!" || token == "?";
}

}  // namespace

std::string detokenize(const NQRecord& doc, const TokenSpan& span) {
  std::string text;
  for (int64_t i = span.start; i < span.end; ++i) {
    const auto& tok = doc.document_tokens[static_cast<size_t>(i)];
    if (tok.is_html) continue;
    if (!text.empty()) text.push_back(' ');
    text += tok.token;
  }
  return normalize_whitespace(text);
}

std::vector<SentenceSpan> split_sentences(const NQRecord& record) {
  std::vector<SentenceSpan> sentences;
  int64_t sent_start = -1;  // -1: no open sentence
  int64_t last_word = -1;   // last non-html token of the open sentence

  auto close_sentence = [&](int64_t end_exclusive) {
    if (sent_start < 0) return;
    SentenceSpan s;
    s.span = {sent_start, end_exclusive};
    s.text = detokenize(record, s.span);
    if (!s.text.empty()) sentences.push_back(std::move(s));
    sent_start = -1;
    last_word = -1;
  };

  const int64_t n = static_cast<int64_t>(record.document_tokens.size());
  for (int64_t i = 0; i < n; ++i) {
    const auto& tok = record.document_tokens[static_cast<size_t>(i)];
    if (tok.is_html) {
      if (is_block_level_tag(tok.token)) close_sentence(last_word + 1);
      continue;
    }
    if (sent_start < 0) sent_start = i;
    last_word = i;
    if (is_terminal_punct(tok.token)) close_sentence(i + 1);
  }
  close_sentence(last_word + 1);
  return sentences;
}

AsnqLabel assign_label(const SentenceSpan& sentence, const Annotation& annotation,
                       const NQRecord& doc, bool case_insensitive_match) {
  if (!annotation.long_answer.has_value() || annotation.short_answers.empty()) {
    throw ConfigError("assign_label needs a long answer and short answers");
  }
  AsnqLabel label;
  label.in_long_answer = annotation.long_answer->contains(sentence.span);
  if (label.in_long_answer) {
    for (const auto& sa : annotation.short_answers) {
      if (sentence.span.contains(sa)) {
        label.contains_short_answer = true;
        break;
      }
    }
  } else {
    auto fold = [&](const std::string& s) {
      if (!case_insensitive_match) return s;
      std::string lower = s;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
      });
      return lower;
    };
    const std::string text = fold(sentence.text);
    for (const auto& sa : annotation.short_answers) {
      const std::string needle = fold(detokenize(doc, sa));
      if (!needle.empty() && text.find(needle) != std::string::npos) {
        label.contains_short_answer = true;
        break;
      }
    }
  }
  label.value = 1 + static_cast<int>(label.contains_short_answer) +
                2 * static_cast<int>(label.in_long_answer);
  return label;
}

std::string AsnqBuildStats::to_json() const {
  nlohmann::json j;
  j["records_read"] = records_read;
  j["records_kept"] = records_kept;
  j["records_skipped"] = records_skipped;
  j["questions_emitted"] = questions_emitted;
  nlohmann::json counts;
  for (int label = 1; label <= 4; ++label) {
    counts[std::to_string(label)] = label_counts[static_cast<size_t>(label)];
  }
  j["label_counts"] = counts;
  return j.dump(2);
}

namespace {

// Line reader over zlib's gzFile, which transparently handles both plain and
// gzip-compressed input (magic-byte detection happens inside zlib).
class GzLineReader {
 public:
  explicit GzLineReader(const std::string& path)
      : file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) throw DataError("cannot open " + path);
  }
  ~GzLineReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  GzLineReader(const GzLineReader&) = delete;
  GzLineReader& operator=(const GzLineReader&) = delete;

  bool next(std::string& line) {
    line.clear();
    char buf[1 << 16];
    while (true) {
      if (gzgets(file_, buf, sizeof(buf)) == nullptr) {
        int errnum = 0;
        const char* msg = gzerror(file_, &errnum);
        if (errnum != Z_OK && errnum != Z_STREAM_END) {
          throw DataError(std::string("gzip read error: ") + msg);
        }
        return !line.empty();
      }
      line += buf;
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
      // Buffer filled without a newline: keep reading the same line.
    }
  }

 private:
  gzFile file_;
};

const Annotation* choose_annotation(const NQRecord& record) {
  for (const auto& ann : record.annotations) {
    if (!ann.long_answer.has_value()) continue;
    if (ann.short_answers.empty()) continue;
    if (ann.yes_no_answer != "NONE") continue;  // no span to match
    return &ann;
  }
  return nullptr;
}

}  // namespace

AsnqBuildStats build_asnq(const std::string& input_path, std::ostream& out,
                          const AsnqBuildConfig& cfg) {
  GzLineReader reader(input_path);
  AsnqBuildStats stats;
  std::string line;
  while (reader.next(line)) {
    if (line.empty()) continue;
    ++stats.records_read;
    NQRecord record;
    try {
      record = parse_nq_record(line);
    } catch (const DataError& e) {
      if (!cfg.lenient) {
        throw DataError("record " + std::to_string(stats.records_read) + ": " +
                        e.what());
      }
      ++stats.records_skipped;
      continue;
    }
    const Annotation* ann = choose_annotation(record);
    if (ann == nullptr) continue;

    const std::string question = normalize_whitespace(record.question_text);
    bool emitted = false;
    for (const auto& sentence : split_sentences(record)) {
      const AsnqLabel label =
          assign_label(sentence, *ann, record, cfg.case_insensitive_match);
      out << question << '\t' << sentence.text << '\t' << label.value << '\n';
      ++stats.label_counts[static_cast<size_t>(label.value)];
      emitted = true;
    }
    if (emitted) {
      ++stats.records_kept;
      ++stats.questions_emitted;
    }
    if (!out) throw DataError("write failure while emitting pairs");
  }
  return stats;
}

void binarize(std::istream& in, std::ostream& out, const std::set<int>& negatives) {
  if (negatives.empty()) {
    throw ConfigError("binarize needs a non-empty negative label subset");
  }
  for (int label : negatives) {
    if (label < 1 || label > 3) {
      throw ConfigError("negative labels must come from {1,2,3}");
    }
  }
  std::string line;
  size_t line_no = 0;
  size_t question_index = 0;
  std::string current_question;
  bool any_question = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab1 = line.find('\t');
    const size_t tab2 = tab1 == std::string::npos ? std::string::npos
                                                  : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos) {
      throw DataError("asnq tsv line " + std::to_string(line_no) +
                      ": expected 3 tab-separated columns");
    }
    const std::string question = line.substr(0, tab1);
    const std::string sentence = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string label_text = line.substr(tab2 + 1);
    if (label_text.size() != 1 || label_text[0] < '1' || label_text[0] > '4') {
      throw DataError("asnq tsv line " + std::to_string(line_no) +
                      ": label must be 1..4, got '" + label_text + "'");
    }
    const int label = label_text[0] - '0';

    if (!any_question || question != current_question) {
      current_question = question;
      any_question = true;
      ++question_index;
    }
    int binary;
    if (label == 4) {
      binary = 1;
    } else if (negatives.count(label)) {
      binary = 0;
    } else {
      continue;
    }
    char id[24];
    std::snprintf(id, sizeof(id), "asnq-%08zu", question_index);
    out << id << '\t' << question << '\t' << sentence << '\t' << binary << '\n';
  }
  if (!out) throw DataError("write failure during binarize");
}

}  // namespace tanda
