#include <doctest.h>

#include <cmath>
#include <limits>

#include "tanda/errors.hpp"
#include "tanda/metrics.hpp"
#include "tanda/rng.hpp"

using namespace tanda;

// Brute-force reference: computes each candidate's rank explicitly by
// counting, never sorting, so it shares no code path with rank().
namespace {

struct BruteMetrics {
  double ap, rr, p1;
};

BruteMetrics brute_force(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  const size_t n = scores.size();
  // rank of candidate i (1-based): strictly-better scores, plus earlier
  // equal scores (the stable-tie rule)
  std::vector<size_t> rank(n);
  for (size_t i = 0; i < n; ++i) {
    size_t r = 1;
    for (size_t j = 0; j < n; ++j) {
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++r;
    }
    rank[i] = r;
  }
  size_t total_relevant = 0;
  for (int l : labels) total_relevant += static_cast<size_t>(l);

  double ap = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!labels[i]) continue;
    size_t relevant_at_or_above = 0;
    for (size_t j = 0; j < n; ++j) {
      if (labels[j] && rank[j] <= rank[i]) ++relevant_at_or_above;
    }
    ap += static_cast<double>(relevant_at_or_above) /
          static_cast<double>(rank[i]);
  }
  ap /= static_cast<double>(total_relevant);

  size_t best_relevant_rank = n + 1;
  for (size_t i = 0; i < n; ++i) {
    if (labels[i]) best_relevant_rank = std::min(best_relevant_rank, rank[i]);
  }
  const double rr = 1.0 / static_cast<double>(best_relevant_rank);
  const double p1 = best_relevant_rank == 1 ? 1.0 : 0.0;
  return {ap, rr, p1};
}

std::vector<int> ranked_relevance(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
  return rank(scores, labels).relevance;
}

}  // namespace

TEST_CASE("rank: stable descending order with lowest-index ties") {
  const auto ranked = rank({0.2, 0.9, 0.9});
  CHECK(ranked.order == std::vector<size_t>{1, 2, 0});
  CHECK(rank({5.0}).order == std::vector<size_t>{0});
}

TEST_CASE("rank: monotone increasing scores reverse the order") {
  // brute-force cross-check over every length up to 4
  for (size_t n = 1; n <= 4; ++n) {
    std::vector<double> scores(n);
    for (size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(i);
    const auto ranked = rank(scores);
    for (size_t i = 0; i < n; ++i) {
      CHECK(ranked.order[i] == n - 1 - i);
    }
  }
}

TEST_CASE("rank: NaN scores are an error") {
  CHECK_THROWS_AS(rank({0.1, std::numeric_limits<double>::quiet_NaN()}),
                  NumericError);
}

TEST_CASE("average_precision: hand-enumerated values") {
  CHECK(average_precision({1, 1, 0}) == doctest::Approx(1.0));
  CHECK(average_precision({1, 0, 1}) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(average_precision({0, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(average_precision({0, 0}), NumericError);
}

TEST_CASE("reciprocal_rank and precision_at_1: hand-enumerated values") {
  CHECK(reciprocal_rank({0, 0, 1, 0}) == doctest::Approx(1.0 / 3.0));
  CHECK(precision_at_1({0, 0, 1, 0}) == doctest::Approx(0.0));
  CHECK(reciprocal_rank({1, 0}) == doctest::Approx(1.0));
  CHECK(precision_at_1({1, 0}) == doctest::Approx(1.0));
  CHECK(reciprocal_rank({0, 1}) == doctest::Approx(0.5));
  CHECK(precision_at_1({0, 1}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(reciprocal_rank({0, 0}), NumericError);
  CHECK_THROWS_AS(precision_at_1({0}), NumericError);
}

namespace {

Dataset one_question(const std::vector<int>& labels,
                     const std::vector<double>& scores) {
  QuestionGroup g;
  g.question_id = "q0";
  g.question_text = "q";
  for (size_t i = 0; i < labels.size(); ++i) {
    g.candidates.push_back({"s" + std::to_string(i), labels[i]});
  }
  g.scores = scores;
  return {g};
}

}  // namespace

TEST_CASE("evaluate: single question matches the AP example") {
  // relevance-by-score order [1,0,1]
  const auto report = evaluate(one_question({1, 0, 1}, {3.0, 2.0, 1.0}),
                               DatasetMode::Clean);
  CHECK(report.map == doctest::Approx(0.833333333333).epsilon(1e-9));
  CHECK(report.mrr == doctest::Approx(1.0));
  CHECK(report.p_at_1 == doctest::Approx(1.0));
  CHECK(report.n_questions == 1);
}

TEST_CASE("evaluate: equal scores fall back to candidate order") {
  const auto report = evaluate(one_question({0, 1}, {0.5, 0.5}),
                               DatasetMode::Clean);
  CHECK(report.mrr == doctest::Approx(0.5));
  CHECK(report.p_at_1 == doctest::Approx(0.0));
}

TEST_CASE("evaluate: perfect classifier scores give all metrics 1") {
  auto rng = Xoshiro256ss::seeded(5);
  Dataset data;
  for (int q = 0; q < 20; ++q) {
    QuestionGroup g;
    g.question_id = "q" + std::to_string(q);
    g.question_text = "q";
    const size_t n = 2 + rng.bounded(5);
    bool has_pos = false, has_neg = false;
    for (size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(rng.bounded(2));
      (label ? has_pos : has_neg) = true;
      g.candidates.push_back({"s", label});
      g.scores.push_back(static_cast<double>(label));
    }
    if (has_pos && has_neg) data.push_back(std::move(g));
  }
  const auto report = evaluate(data, DatasetMode::Clean);
  CHECK(report.map == doctest::Approx(1.0));
  CHECK(report.mrr == doctest::Approx(1.0));
  CHECK(report.p_at_1 == doctest::Approx(1.0));
}

TEST_CASE("evaluate: zero surviving questions is an error") {
  CHECK_THROWS_AS(evaluate(one_question({0, 0}, {0.1, 0.2}), DatasetMode::Clean),
                  NumericError);
}

TEST_CASE("metrics match the brute-force reference on random instances") {
  auto rng = Xoshiro256ss::seeded(99);
  int checked = 0;
  while (checked < 1000) {
    const size_t n = 1 + rng.bounded(8);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any_relevant = false;
    for (size_t i = 0; i < n; ++i) {
      // coarse scores so ties actually happen
      scores[i] = static_cast<double>(rng.bounded(4));
      labels[i] = static_cast<int>(rng.bounded(2));
      any_relevant = any_relevant || labels[i] == 1;
    }
    if (!any_relevant) continue;
    ++checked;
    const auto rel = ranked_relevance(scores, labels);
    const auto ref = brute_force(scores, labels);
    CHECK(average_precision(rel) == doctest::Approx(ref.ap).epsilon(1e-12));
    CHECK(reciprocal_rank(rel) == doctest::Approx(ref.rr).epsilon(1e-12));
    CHECK(precision_at_1(rel) == doctest::Approx(ref.p1).epsilon(1e-12));
  }
}

TEST_CASE("metric invariants: range, P@1 <= MRR, scale/shift invariance") {
  auto rng = Xoshiro256ss::seeded(123);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.bounded(8);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      scores[i] = rng.unit() * 4.0 - 2.0;
      labels[i] = static_cast<int>(rng.bounded(2));
      any = any || labels[i] == 1;
    }
    if (!any) continue;
    const auto rel = ranked_relevance(scores, labels);
    const double ap = average_precision(rel);
    const double rr = reciprocal_rank(rel);
    const double p1 = precision_at_1(rel);
    CHECK(ap > 0.0);
    CHECK(ap <= 1.0);
    CHECK(rr <= 1.0);
    CHECK(p1 <= rr);

    // argsort invariance under positive affine maps
    const double c = 0.25 + rng.unit() * 3.0;
    const double d = rng.unit() * 10.0 - 5.0;
    std::vector<double> mapped(n);
    for (size_t i = 0; i < n; ++i) mapped[i] = c * scores[i] + d;
    CHECK(ranked_relevance(mapped, labels) == rel);
  }
}
