#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "audio_audit/indicators.hpp"

namespace audio_audit {

using IdSet = std::unordered_set<std::string>;

/// P(random positive outscores random negative), ties count 1/2. Computed
/// from mid-ranks. Throws AuditError(UndefinedMetric) without both classes.
double auroc(std::span<const double> scores, const std::vector<bool>& positives);

/// Mean precision at each positive's rank in descending-score order; equal
/// scores keep index order. Throws AuditError(UndefinedMetric) with no
/// positives.
double average_precision(std::span<const double> scores, const std::vector<bool>& positives);

/// List-based variants. AP follows list order exactly (including its
/// tie-break); AUROC uses the list's scores. Every positive must be a
/// subject of the list (AuditError(Consistency) otherwise).
double auroc(const RankedList& ranking, const IdSet& positives);
double average_precision(const RankedList& ranking, const IdSet& positives);

struct FoePoint {
    double recall = 0.0;
    double foe = 0.0;
    std::size_t k = 0;         // positives that must be found
    std::size_t position = 0;  // 1-based rank of the k-th positive
};

/// Expected 1-based position of the k-th of P positives among N items
/// under uniformly random order: k (N + 1) / (P + 1).
double random_review_expectation(std::size_t k, std::size_t n, std::size_t p);

/// {0.05, 0.10, ..., 1.00}.
std::vector<double> default_recall_grid();

/// For each recall r, k = ceil(r P); foe = position of the k-th positive
/// divided by the random-baseline expectation.
std::vector<FoePoint> foe_curve(const RankedList& ranking, const IdSet& positives,
                                std::span<const double> recalls);

struct EffortSummary {
    double mean_savings = 0.0;  // 1 - mean(foe)
    double speedup = 0.0;       // 1 / mean(foe)
};

EffortSummary effort_summary(std::span<const FoePoint> curve);

struct EvaluationReport {
    IssueType issue = IssueType::OffTopic;
    double alpha = 0.0;
    double auroc = 0.0;
    double ap = 0.0;
    std::vector<FoePoint> foe_curve;
    double mean_savings = 0.0;
    double speedup = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_positives = 0;
};

EvaluationReport evaluate_ranking(const RankedList& ranking, const IdSet& positives, double alpha,
                                  std::span<const double> recalls);

nlohmann::json to_json(const EvaluationReport& report);
/// "recall,foe" rows.
std::string foe_csv(std::span<const FoePoint> curve);

}  // namespace audio_audit
