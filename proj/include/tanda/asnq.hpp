#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tanda {

// Half-open token span [start, end).
struct TokenSpan {
  int64_t start = 0;
  int64_t end = 0;

  bool contains(const TokenSpan& inner) const {
    return inner.start >= start && inner.end <= end;
  }
};

struct Annotation {
  std::optional<TokenSpan> long_answer;
  std::vector<TokenSpan> short_answers;
  std::string yes_no_answer = "NONE";
};

struct DocToken {
  std::string token;
  bool is_html = false;
};

// One machine-reading record: a question over a tokenized document with
// long-answer / short-answer annotations.
struct NQRecord {
  std::string example_id;
  std::string question_text;
  std::vector<DocToken> document_tokens;
  std::vector<Annotation> annotations;
};

struct SentenceSpan {
  TokenSpan span;       // over document_tokens, may include inline html tokens
  std::string text;     // detokenized, html tokens removed, whitespace normal
};

// Four-way taxonomy cell: value = 1 + contains_short_answer + 2*in_long_answer.
struct AsnqLabel {
  int value = 1;
  bool in_long_answer = false;
  bool contains_short_answer = false;
};

// Parses one simplified-NQ JSON line. A long_answer with start == end == -1
// maps to an absent span. Throws DataError, citing example_id when available.
NQRecord parse_nq_record(std::string_view json_line);

// Deterministic sentence segmentation: a boundary falls after every non-html
// token whose text is exactly ".", "!" or "?", and at every html-token run
// containing a block-level tag (p, table, tr, td, th, ul, ol, li, dl, dt, dd,
// div, h1-h6, br, blockquote, pre — open or close, any case). Html tokens
// never appear in sentence text; empty segments are dropped.
std::vector<SentenceSpan> split_sentences(const NQRecord& record);

// Requires an annotation with a present long_answer and >= 1 short answer.
// Inside the long answer, "contains short answer" means span containment;
// outside, it means the detokenized short-answer string occurs as a substring
// of the sentence text (case-sensitive by default).
AsnqLabel assign_label(const SentenceSpan& sentence, const Annotation& annotation,
                       const NQRecord& doc, bool case_insensitive_match = false);

struct AsnqBuildConfig {
  bool lenient = false;                 // skip malformed records instead of failing
  bool case_insensitive_match = false;  // accidental-occurrence matching
};

struct AsnqBuildStats {
  uint64_t records_read = 0;
  uint64_t records_kept = 0;
  uint64_t records_skipped = 0;   // malformed, lenient mode only
  uint64_t questions_emitted = 0;
  std::array<uint64_t, 5> label_counts{};  // index by label value, [0] unused

  std::string to_json() const;
};

// Streams simplified-NQ JSONL (gzip detected automatically) and emits one
// `question<TAB>sentence<TAB>label` line per sentence of every kept record,
// in input order. A record is kept iff it has an annotation with a present
// long_answer, at least one short answer, and no yes/no marker; the first
// such annotation is used.
AsnqBuildStats build_asnq(const std::string& input_path, std::ostream& out,
                          const AsnqBuildConfig& cfg = {});

// Rewrites a 4-label ASNQ TSV as binary AS2 TSV: label 4 becomes 1, labels in
// `negatives` become 0, everything else is dropped. Synthetic contiguous
// question ids are derived from the question order of first appearance.
void binarize(std::istream& in, std::ostream& out, const std::set<int>& negatives);

std::string detokenize(const NQRecord& doc, const TokenSpan& span);

}  // namespace tanda
