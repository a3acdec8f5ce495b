#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "audio_audit/embedding_store.hpp"

namespace audio_audit {

enum class IssueType { OffTopic, NearDuplicate, LabelError };

/// "OT", "ND", "LE".
std::string_view to_string(IssueType issue) noexcept;
/// Accepts the short tags, case-insensitive. Throws AuditError(Parameter).
IssueType parse_issue(std::string_view tag);

/// A sample id, or an unordered id pair stored smaller-first.
struct Subject {
    std::string first;
    std::string second;  // empty unless this is a pair

    static Subject sample(std::string id) { return {std::move(id), {}}; }
    static Subject pair(std::string a, std::string b);

    bool is_pair() const { return !second.empty(); }
    /// "id" or "a|b"; unique per subject.
    std::string key() const { return is_pair() ? first + "|" + second : first; }

    auto operator<=>(const Subject&) const = default;
};

struct RankedEntry {
    Subject subject;
    double score = 0.0;
};

/// Scores non-increasing; ties ordered by subject ascending.
struct RankedList {
    IssueType issue = IssueType::OffTopic;
    std::vector<RankedEntry> entries;
    /// Samples whose score used a fallback (LE: class with a single member).
    std::vector<std::string> flagged;

    std::size_t size() const { return entries.size(); }
    /// Throws AuditError(Data) if ordering, uniqueness or pair canonicality
    /// is violated.
    void validate() const;
};

/// Sorts by score descending, then subject ascending.
void sort_entries(std::vector<RankedEntry>& entries);

/// Symmetric cosine-distance matrix over unit vectors, d = 1 - <a, b>.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    double& at(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
    std::span<const double> row(std::size_t i) const { return {d_.data() + i * n_, n_}; }

private:
    std::size_t n_;
    std::vector<double> d_;
};

/// Dot products accumulate in double in coordinate order; results are
/// clamped to [0, 2] and the diagonal is exactly zero.
DistanceMatrix pairwise_distances(const EmbeddingSet& emb);

inline constexpr int kDefaultOffTopicK = 10;

/// Mean distance to the k nearest neighbours (self excluded).
RankedList rank_off_topic(const EmbeddingSet& emb, int k = kDefaultOffTopicK);
RankedList rank_off_topic(const EmbeddingSet& emb, const DistanceMatrix& dist, int k);

struct NearDuplicateRanking {
    RankedList pairs;    // subject = id pair, score = 1 - d/2
    RankedList samples;  // score = 1 - min_j d(i, j)/2
};

/// max_pairs == 0 means the default, N.
NearDuplicateRanking rank_near_duplicates(const EmbeddingSet& emb, std::size_t max_pairs = 0);
NearDuplicateRanking rank_near_duplicates(const EmbeddingSet& emb, const DistanceMatrix& dist,
                                          std::size_t max_pairs);

/// score = d_intra / (d_intra + d_extra) with nearest-neighbour distances
/// inside/outside the sample's labelled class. A class with one member uses
/// d_intra = 2 and the sample is listed in `flagged`.
RankedList rank_label_errors(const EmbeddingSet& emb, std::span<const int> labels);
RankedList rank_label_errors(const EmbeddingSet& emb, const DistanceMatrix& dist,
                             std::span<const int> labels);

// Serialization: JSON lines {"rank", "subject", "score"} and a CSV mirror.
void write_jsonl(const RankedList& list, std::ostream& out);
void write_csv(const RankedList& list, std::ostream& out);
RankedList read_jsonl(std::istream& in, IssueType issue);
void save_ranking(const RankedList& list, const fs::path& jsonl_path, const fs::path& csv_path);
RankedList load_ranking(const fs::path& jsonl_path, IssueType issue);

}  // namespace audio_audit
