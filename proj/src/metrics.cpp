#include "tanda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tanda/errors.hpp"

namespace tanda {

RankedList rank(const std::vector<double>& scores,
                const std::vector<int>& labels) {
  for (size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) {
      throw NumericError("NaN score at candidate " + std::to_string(i));
    }
  }
  RankedList ranked;
  ranked.order.resize(scores.size());
  std::iota(ranked.order.begin(), ranked.order.end(), size_t{0});
  std::stable_sort(ranked.order.begin(), ranked.order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  if (!labels.empty()) {
    if (labels.size() != scores.size()) {
      throw ConfigError("labels/scores length mismatch");
    }
    ranked.relevance.reserve(labels.size());
    for (size_t idx : ranked.order) ranked.relevance.push_back(labels[idx]);
  }
  return ranked;
}

namespace {

size_t count_relevant(const std::vector<int>& rel) {
  size_t n = 0;
  for (int r : rel) n += static_cast<size_t>(r != 0);
  return n;
}

[[noreturn]] void no_relevant() {
  throw NumericError("metric undefined: no relevant candidate (filter first)");
}

}  // namespace

double average_precision(const std::vector<int>& ranked_relevance) {
  const size_t total_relevant = count_relevant(ranked_relevance);
  if (total_relevant == 0) no_relevant();
  double sum = 0.0;
  size_t hits = 0;
  for (size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (ranked_relevance[k] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

double reciprocal_rank(const std::vector<int>& ranked_relevance) {
  for (size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (ranked_relevance[k] != 0) return 1.0 / static_cast<double>(k + 1);
  }
  no_relevant();
}

double precision_at_1(const std::vector<int>& ranked_relevance) {
  if (count_relevant(ranked_relevance) == 0) no_relevant();
  return ranked_relevance.front() != 0 ? 1.0 : 0.0;
}

MetricReport evaluate(const Dataset& groups, DatasetMode mode) {
  const Dataset kept = filter_mode(groups, mode);
  if (kept.empty()) {
    throw NumericError("no questions survive mode '" + to_string(mode) + "'");
  }
  MetricReport report;
  report.mode = mode;
  report.n_questions = kept.size();
  // Fixed summation order for bit reproducibility.
  for (const auto& g : kept) {
    if (g.scores.size() != g.candidates.size()) {
      throw DataError("question '" + g.question_id +
                      "' has no aligned scores");
    }
    std::vector<int> labels(g.candidates.size());
    for (size_t i = 0; i < g.candidates.size(); ++i) {
      labels[i] = g.candidates[i].label;
    }
    const RankedList ranked = rank(g.scores, labels);
    report.map += average_precision(ranked.relevance);
    report.mrr += reciprocal_rank(ranked.relevance);
    report.p_at_1 += precision_at_1(ranked.relevance);
  }
  const double n = static_cast<double>(kept.size());
  report.map /= n;
  report.mrr /= n;
  report.p_at_1 /= n;
  return report;
}

}  // namespace tanda
