#include "audio_audit/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "audio_audit/errors.hpp"

namespace audio_audit {

double auroc(std::span<const double> scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size()) fail(ErrorKind::Consistency, "scores and labels differ in length");
    const std::size_t n = scores.size();
    const auto p = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
    const std::size_t q = n - p;
    if (p == 0 || q == 0) fail(ErrorKind::UndefinedMetric, "AUROC needs at least one positive and one negative");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // sum of 1-based mid-ranks of positives
    double rank_sum = 0.0;
    for (std::size_t lo = 0; lo < n;) {
        std::size_t hi = lo;
        while (hi + 1 < n && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
        const double mid = (static_cast<double>(lo + 1) + static_cast<double>(hi + 1)) / 2.0;
        for (std::size_t m = lo; m <= hi; ++m) {
            if (positives[order[m]]) rank_sum += mid;
        }
        lo = hi + 1;
    }
    const double pd = static_cast<double>(p);
    const double u = rank_sum - pd * (pd + 1.0) / 2.0;
    return u / (pd * static_cast<double>(q));
}

namespace {

double ap_over_order(const std::vector<bool>& hits_in_order) {
    std::size_t found = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < hits_in_order.size(); ++r) {
        if (hits_in_order[r]) {
            ++found;
            sum += static_cast<double>(found) / static_cast<double>(r + 1);
        }
    }
    if (found == 0) fail(ErrorKind::UndefinedMetric, "average precision needs at least one positive");
    return sum / static_cast<double>(found);
}

std::vector<bool> hits_for(const RankedList& ranking, const IdSet& positives) {
    std::vector<bool> hits(ranking.size());
    std::size_t matched = 0;
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        const auto& s = ranking.entries[r].subject;
        if (s.is_pair()) fail(ErrorKind::Consistency, "per-sample metrics need a per-sample ranking");
        hits[r] = positives.contains(s.first);
        matched += hits[r];
    }
    if (matched != positives.size()) {
        for (const auto& id : positives) {
            const bool present = std::any_of(ranking.entries.begin(), ranking.entries.end(),
                                             [&](const RankedEntry& e) { return e.subject.first == id; });
            if (!present) fail(ErrorKind::Consistency, "positive '" + id + "' is absent from the ranking");
        }
    }
    return hits;
}

}  // namespace

double average_precision(std::span<const double> scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size()) fail(ErrorKind::Consistency, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<bool> hits(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) hits[r] = positives[order[r]];
    return ap_over_order(hits);
}

double auroc(const RankedList& ranking, const IdSet& positives) {
    const auto hits = hits_for(ranking, positives);
    std::vector<double> scores(ranking.size());
    for (std::size_t r = 0; r < ranking.size(); ++r) scores[r] = ranking.entries[r].score;
    return auroc(scores, hits);
}

double average_precision(const RankedList& ranking, const IdSet& positives) {
    return ap_over_order(hits_for(ranking, positives));
}

double random_review_expectation(std::size_t k, std::size_t n, std::size_t p) {
    return static_cast<double>(k) * static_cast<double>(n + 1) / static_cast<double>(p + 1);
}

std::vector<double> default_recall_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 20; ++i) grid.push_back(i / 20.0);
    return grid;
}

std::vector<FoePoint> foe_curve(const RankedList& ranking, const IdSet& positives, std::span<const double> recalls) {
    const auto hits = hits_for(ranking, positives);
    const std::size_t n = ranking.size();
    const std::size_t p = positives.size();
    if (p == 0) fail(ErrorKind::UndefinedMetric, "fraction of effort needs at least one positive");

    std::vector<std::size_t> hit_positions;  // 1-based
    for (std::size_t r = 0; r < n; ++r) {
        if (hits[r]) hit_positions.push_back(r + 1);
    }

    std::vector<FoePoint> curve;
    curve.reserve(recalls.size());
    for (double r : recalls) {
        if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::Parameter, "recall levels must lie in (0, 1]");
        // tolerance keeps grid values like 0.15 * 20 from rounding up
        auto k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(p) - 1e-9));
        k = std::clamp<std::size_t>(k, 1, p);
        const std::size_t pos = hit_positions[k - 1];
        curve.push_back({r, static_cast<double>(pos) / random_review_expectation(k, n, p), k, pos});
    }
    return curve;
}

EffortSummary effort_summary(std::span<const FoePoint> curve) {
    if (curve.empty()) fail(ErrorKind::Parameter, "effort summary of an empty curve");
    double sum = 0.0;
    for (const auto& pt : curve) sum += pt.foe;
    const double mean = sum / static_cast<double>(curve.size());
    return {1.0 - mean, 1.0 / mean};
}

EvaluationReport evaluate_ranking(const RankedList& ranking, const IdSet& positives, double alpha,
                                  std::span<const double> recalls) {
    EvaluationReport rep;
    rep.issue = ranking.issue;
    rep.alpha = alpha;
    rep.auroc = auroc(ranking, positives);
    rep.ap = average_precision(ranking, positives);
    rep.foe_curve = foe_curve(ranking, positives, recalls);
    const auto eff = effort_summary(rep.foe_curve);
    rep.mean_savings = eff.mean_savings;
    rep.speedup = eff.speedup;
    rep.n_samples = ranking.size();
    rep.n_positives = positives.size();
    return rep;
}

nlohmann::json to_json(const EvaluationReport& rep) {
    nlohmann::json curve = nlohmann::json::array();
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& pt : rep.foe_curve) {
        curve.push_back({{"recall", pt.recall}, {"foe", pt.foe}, {"k", pt.k}, {"position", pt.position}});
        grid.push_back(pt.recall);
    }
    return {
        {"issue_type", std::string(to_string(rep.issue))},
        {"alpha", rep.alpha},
        {"auroc", rep.auroc},
        {"ap", rep.ap},
        {"foe_curve", std::move(curve)},
        {"mean_savings", rep.mean_savings},
        {"speedup", rep.speedup},
        {"n_samples", rep.n_samples},
        {"n_positives", rep.n_positives},
        {"header",
         {{"recall_grid", std::move(grid)},
          {"foe_baseline", "k*(N+1)/(P+1)"},
          {"tie_break", "score desc, subject asc"}}},
    };
}

std::string foe_csv(std::span<const FoePoint> curve) {
    std::string out = "recall,foe\n";
    char buf[64];
    for (const auto& pt : curve) {
        auto res = std::to_chars(buf, buf + sizeof buf, pt.recall);
        out.append(buf, res.ptr);
        out += ',';
        res = std::to_chars(buf, buf + sizeof buf, pt.foe);
        out.append(buf, res.ptr);
        out += '\n';
    }
    return out;
}

}  // namespace audio_audit
