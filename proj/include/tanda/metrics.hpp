#pragma once

#include <vector>

#include "tanda/corpus.hpp"

namespace tanda {

// Candidate indices in descending score order (stable: ties keep the original
// candidate order), plus the relevance labels rearranged into that order when
// labels were supplied.
struct RankedList {
  std::vector<size_t> order;
  std::vector<int> relevance;
};

struct MetricReport {
  double map = 0.0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  size_t n_questions = 0;
  DatasetMode mode = DatasetMode::Raw;
};

// Stable descending sort of candidate indices. Throws NumericError on NaN.
RankedList rank(const std::vector<double>& scores,
                const std::vector<int>& labels = {});

// AP = (1/R) * sum over relevant ranks k of precision@k. Requires at least
// one relevant item (callers filter with NO_ALL_NEG/CLEAN first).
double average_precision(const std::vector<int>& ranked_relevance);

double reciprocal_rank(const std::vector<int>& ranked_relevance);

double precision_at_1(const std::vector<int>& ranked_relevance);

// Applies filter_mode, ranks every group by its scores and averages the three
// metrics over the surviving questions, in input order.
MetricReport evaluate(const Dataset& groups, DatasetMode mode);

}  // namespace tanda
