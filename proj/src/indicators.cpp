#include "audio_audit/indicators.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "audio_audit/errors.hpp"

namespace audio_audit {

std::string_view to_string(IssueType issue) noexcept {
    switch (issue) {
        case IssueType::OffTopic: return "OT";
        case IssueType::NearDuplicate: return "ND";
        case IssueType::LabelError: return "LE";
    }
    return "?";
}

IssueType parse_issue(std::string_view tag) {
    std::string up(tag);
    for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "OT") return IssueType::OffTopic;
    if (up == "ND") return IssueType::NearDuplicate;
    if (up == "LE") return IssueType::LabelError;
    fail(ErrorKind::Parameter, "unknown issue type '" + std::string(tag) + "' (expected OT, ND or LE)");
}

Subject Subject::pair(std::string a, std::string b) {
    if (b < a) std::swap(a, b);
    return {std::move(a), std::move(b)};
}

void sort_entries(std::vector<RankedEntry>& entries) {
    std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.subject < b.subject;
    });
}

void RankedList::validate() const {
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < entries.size(); ++r) {
        const auto& e = entries[r];
        if (r > 0 && e.score > entries[r - 1].score) fail(ErrorKind::Data, "ranked list scores increase at rank " + std::to_string(r + 1));
        if (e.subject.is_pair() && !(e.subject.first < e.subject.second)) {
            fail(ErrorKind::Data, "pair subject not canonical: " + e.subject.key());
        }
        if (!seen.insert(e.subject.key()).second) fail(ErrorKind::Data, "duplicate subject " + e.subject.key());
    }
}

DistanceMatrix pairwise_distances(const EmbeddingSet& emb) {
    const std::size_t n = emb.size();
    const std::size_t dim = emb.dim();
    DistanceMatrix dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* a = emb.row(i).data();
        for (std::size_t j = i + 1; j < n; ++j) {
            const float* b = emb.row(j).data();
            double dot = 0.0;
            for (std::size_t c = 0; c < dim; ++c) dot += static_cast<double>(a[c]) * static_cast<double>(b[c]);
            const double d = std::clamp(1.0 - dot, 0.0, 2.0);
            dist.at(i, j) = d;
            dist.at(j, i) = d;
        }
    }
    return dist;
}

namespace {

void check_dist(const EmbeddingSet& emb, const DistanceMatrix& dist) {
    if (dist.size() != emb.size()) fail(ErrorKind::Consistency, "distance matrix size does not match embeddings");
}

RankedList per_sample_list(IssueType issue, const EmbeddingSet& emb, const std::vector<double>& scores) {
    RankedList list{issue, {}, {}};
    list.entries.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) list.entries.push_back({Subject::sample(emb.sample_ids()[i]), scores[i]});
    sort_entries(list.entries);
    return list;
}

}  // namespace

RankedList rank_off_topic(const EmbeddingSet& emb, int k) {
    return rank_off_topic(emb, pairwise_distances(emb), k);
}

RankedList rank_off_topic(const EmbeddingSet& emb, const DistanceMatrix& dist, int k) {
    check_dist(emb, dist);
    const std::size_t n = emb.size();
    if (k < 1 || static_cast<std::size_t>(k) > n - 1 || n < 2) {
        fail(ErrorKind::Parameter, "k = " + std::to_string(k) + " outside [1, " + std::to_string(n ? n - 1 : 0) + "]");
    }
    const auto kk = static_cast<std::size_t>(k);
    std::vector<double> scores(n);
    std::vector<double> others;
    others.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        others.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) others.push_back(dist(i, j));
        }
        std::nth_element(others.begin(), others.begin() + (kk - 1), others.end());
        std::sort(others.begin(), others.begin() + kk);
        double sum = 0.0;
        for (std::size_t m = 0; m < kk; ++m) sum += others[m];
        scores[i] = sum / static_cast<double>(kk);
    }
    return per_sample_list(IssueType::OffTopic, emb, scores);
}

NearDuplicateRanking rank_near_duplicates(const EmbeddingSet& emb, std::size_t max_pairs) {
    return rank_near_duplicates(emb, pairwise_distances(emb), max_pairs);
}

NearDuplicateRanking rank_near_duplicates(const EmbeddingSet& emb, const DistanceMatrix& dist,
                                          std::size_t max_pairs) {
    check_dist(emb, dist);
    const std::size_t n = emb.size();
    if (n < 2) fail(ErrorKind::Parameter, "near-duplicate ranking needs at least 2 samples");
    if (max_pairs == 0) max_pairs = n;
    const auto& ids = emb.sample_ids();

    struct PairRef {
        double score;
        std::uint32_t lo;  // index of the lexicographically smaller id
        std::uint32_t hi;
    };
    std::vector<PairRef> pairs;
    pairs.reserve(n * (n - 1) / 2);
    std::vector<double> nearest(n, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = dist(i, j);
            nearest[i] = std::min(nearest[i], d);
            nearest[j] = std::min(nearest[j], d);
            const bool i_first = ids[i] < ids[j];
            pairs.push_back({1.0 - d / 2.0, static_cast<std::uint32_t>(i_first ? i : j),
                             static_cast<std::uint32_t>(i_first ? j : i)});
        }
    }
    const auto better = [&ids](const PairRef& a, const PairRef& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.lo != b.lo) return ids[a.lo] < ids[b.lo];
        return ids[a.hi] < ids[b.hi];
    };
    const std::size_t keep = std::min(max_pairs, pairs.size());
    std::partial_sort(pairs.begin(), pairs.begin() + keep, pairs.end(), better);

    NearDuplicateRanking out;
    out.pairs.issue = IssueType::NearDuplicate;
    out.pairs.entries.reserve(keep);
    for (std::size_t p = 0; p < keep; ++p) {
        out.pairs.entries.push_back({Subject{ids[pairs[p].lo], ids[pairs[p].hi]}, pairs[p].score});
    }

    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = 1.0 - nearest[i] / 2.0;
    out.samples = per_sample_list(IssueType::NearDuplicate, emb, scores);
    return out;
}

RankedList rank_label_errors(const EmbeddingSet& emb, std::span<const int> labels) {
    return rank_label_errors(emb, pairwise_distances(emb), labels);
}

RankedList rank_label_errors(const EmbeddingSet& emb, const DistanceMatrix& dist, std::span<const int> labels) {
    check_dist(emb, dist);
    const std::size_t n = emb.size();
    if (labels.size() != n) fail(ErrorKind::Consistency, "label count does not match embedding count");
    std::vector<double> scores(n);
    std::vector<std::string> flagged;
    for (std::size_t i = 0; i < n; ++i) {
        double intra = 2.0;
        double extra = 2.0;
        bool has_intra = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) {
                intra = std::min(intra, dist(i, j));
                has_intra = true;
            } else {
                extra = std::min(extra, dist(i, j));
            }
        }
        if (!has_intra) flagged.push_back(emb.sample_ids()[i]);
        const double denom = intra + extra;
        scores[i] = denom > 0.0 ? intra / denom : 0.5;
    }
    auto list = per_sample_list(IssueType::LabelError, emb, scores);
    std::sort(flagged.begin(), flagged.end());
    list.flagged = std::move(flagged);
    return list;
}

// ---- serialization ---------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_jsonl(const RankedList& list, std::ostream& out) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
        const auto& e = list.entries[r];
        nlohmann::json subject = e.subject.is_pair() ? nlohmann::json::array({e.subject.first, e.subject.second})
                                                     : nlohmann::json(e.subject.first);
        out << nlohmann::json{{"rank", r + 1}, {"subject", std::move(subject)}, {"score", e.score}}.dump() << '\n';
    }
}

void write_csv(const RankedList& list, std::ostream& out) {
    const bool pairs = !list.entries.empty() && list.entries.front().subject.is_pair();
    out << (pairs ? "rank,subject_a,subject_b,score\n" : "rank,subject,score\n");
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
        const auto& e = list.entries[r];
        out << r + 1 << ',' << csv_field(e.subject.first) << ',';
        if (pairs) out << csv_field(e.subject.second) << ',';
        out << shortest(e.score) << '\n';
    }
}

RankedList read_jsonl(std::istream& in, IssueType issue) {
    RankedList list{issue, {}, {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto& s = j.at("subject");
            Subject subject = s.is_array() ? Subject::pair(s.at(0).get<std::string>(), s.at(1).get<std::string>())
                                           : Subject::sample(s.get<std::string>());
            if (j.at("rank").get<std::size_t>() != list.entries.size() + 1) {
                fail(ErrorKind::Format, "ranking line " + std::to_string(lineno) + " has out-of-sequence rank");
            }
            list.entries.push_back({std::move(subject), j.at("score").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Format, "ranking line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    list.validate();
    return list;
}

void save_ranking(const RankedList& list, const fs::path& jsonl_path, const fs::path& csv_path) {
    std::ofstream jl(jsonl_path);
    if (!jl) fail(ErrorKind::Io, "cannot write " + jsonl_path.string());
    write_jsonl(list, jl);
    std::ofstream csv(csv_path);
    if (!csv) fail(ErrorKind::Io, "cannot write " + csv_path.string());
    write_csv(list, csv);
}

RankedList load_ranking(const fs::path& jsonl_path, IssueType issue) {
    std::ifstream in(jsonl_path);
    if (!in) fail(ErrorKind::Io, "cannot open " + jsonl_path.string());
    return read_jsonl(in, issue);
}

}  // namespace audio_audit
