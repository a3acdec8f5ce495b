#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "audio_audit/corruption.hpp"
#include "audio_audit/errors.hpp"
#include "audio_audit/indicators.hpp"
#include "audio_audit/metrics.hpp"
#include "oracles.hpp"

using namespace audio_audit;

namespace {

EmbeddingSet make_set(const std::vector<std::vector<float>>& rows, std::vector<std::string> ids = {}) {
    if (ids.empty()) {
        for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back("id" + std::to_string(i));
    }
    std::vector<float> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return EmbeddingSet(std::move(ids), rows.front().size(), std::move(flat));
}

std::vector<std::vector<float>> rows_of(const EmbeddingSet& e) {
    std::vector<std::vector<float>> out;
    for (std::size_t i = 0; i < e.size(); ++i) out.emplace_back(e.row(i).begin(), e.row(i).end());
    return out;
}

std::map<std::string, double> by_subject(const RankedList& l) {
    std::map<std::string, double> m;
    for (const auto& e : l.entries) m[e.subject.key()] = e.score;
    return m;
}

EmbeddingSet random_unit_rows(std::size_t n, std::size_t dim, Rng& rng) {
    std::vector<std::vector<float>> rows(n, std::vector<float>(dim));
    for (auto& r : rows) {
        double sq = 0;
        std::vector<double> v(dim);
        for (auto& x : v) {
            x = rng.normal();
            sq += x * x;
        }
        for (std::size_t c = 0; c < dim; ++c) r[c] = static_cast<float>(v[c] / std::sqrt(sq));
    }
    return make_set(rows);
}

}  // namespace

TEST(Distances, HandExamples) {
    const auto e = make_set({{1, 0}, {1, 0}, {0, 1}, {0.70710678f, 0.70710678f}});
    const auto d = pairwise_distances(e);
    EXPECT_EQ(d(0, 1), 0.0);
    EXPECT_NEAR(d(0, 2), 1.0, 1e-12);
    EXPECT_NEAR(d(0, 3), 0.2929, 1e-4);
}

TEST(Distances, MatrixInvariants) {
    Rng rng(3);
    const auto e = random_unit_rows(40, 8, rng);
    const auto d = pairwise_distances(e);
    for (std::size_t i = 0; i < 40; ++i) {
        EXPECT_EQ(d(i, i), 0.0);
        for (std::size_t j = 0; j < 40; ++j) {
            EXPECT_EQ(d(i, j), d(j, i));
            EXPECT_GE(d(i, j), 0.0);
            EXPECT_LE(d(i, j), 2.0 + 1e-9);
        }
    }
}

TEST(OffTopic, OrthogonalPointRankedFirst) {
    const auto e = make_set({{1, 0}, {1, 0}, {1, 0}, {0, 1}}, {"a", "b", "c", "d"});
    const auto l = rank_off_topic(e, 2);
    EXPECT_EQ(l.entries[0].subject.first, "d");
    EXPECT_NEAR(l.entries[0].score, 1.0, 1e-12);
    EXPECT_EQ(l.entries[1].score, 0.0);
    l.validate();
}

TEST(OffTopic, AllIdenticalTiesInIdOrder) {
    const auto e = make_set({{0, 1}, {0, 1}, {0, 1}}, {"c", "a", "b"});
    const auto l = rank_off_topic(e, 1);
    ASSERT_EQ(l.size(), 3u);
    EXPECT_EQ(l.entries[0].subject.first, "a");
    EXPECT_EQ(l.entries[1].subject.first, "b");
    EXPECT_EQ(l.entries[2].subject.first, "c");
    for (const auto& x : l.entries) EXPECT_EQ(x.score, 0.0);
}

TEST(OffTopic, KOutOfRangeIsParameterError) {
    const auto e = make_set({{1, 0}, {0, 1}, {1, 0}});
    EXPECT_THROW(rank_off_topic(e, 0), AuditError);
    EXPECT_THROW(rank_off_topic(e, 3), AuditError);
    EXPECT_NO_THROW(rank_off_topic(e, 2));
}

TEST(OffTopic, PlantedOrthogonalOutliersAuroc) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto clean = gen_synthetic_embeddings(10, 50, 64, 0.05, seed);
        const auto planted = plant_corruption(clean, IssueType::OffTopic, 0.05, seed);
        const auto l = rank_off_topic(planted.embeddings, 10);
        EXPECT_GE(auroc(l, planted.ledger.positives()), 0.95) << seed;
    }
}

TEST(OffTopic, MovingAwayCannotDecreaseScore) {
    Rng rng(21);
    // points live in the first 6 of 7 dims; replacement e_7 is orthogonal to all
    auto e = random_unit_rows(20, 6, rng);
    auto rows = rows_of(e);
    for (auto& r : rows) r.push_back(0.0f);
    const auto before = by_subject(rank_off_topic(make_set(rows), 5));
    for (std::size_t victim : {0u, 7u, 19u}) {
        auto moved = rows;
        moved[victim] = std::vector<float>(7, 0.0f);
        moved[victim][6] = 1.0f;
        const auto after = by_subject(rank_off_topic(make_set(moved), 5));
        const auto key = "id" + std::to_string(victim);
        EXPECT_GE(after.at(key), before.at(key));
        EXPECT_NEAR(after.at(key), 1.0, 1e-12);
    }
}

TEST(NearDuplicates, ExactDuplicatePairFirst) {
    const auto e = make_set({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}},
                            {"e", "b", "d", "a", "c"});
    const auto nd = rank_near_duplicates(e);
    EXPECT_EQ(nd.pairs.entries[0].subject, Subject::pair("d", "b"));
    EXPECT_EQ(nd.pairs.entries[0].subject.first, "b");
    EXPECT_EQ(nd.pairs.entries[0].score, 1.0);
    EXPECT_EQ(nd.pairs.size(), 5u);  // default max_pairs = N
    EXPECT_EQ(nd.samples.entries[0].subject.first, "b");
    EXPECT_EQ(nd.samples.entries[1].subject.first, "d");
    EXPECT_EQ(nd.samples.entries[1].score, 1.0);
    nd.pairs.validate();
    nd.samples.validate();
}

TEST(NearDuplicates, OrthogonalSamplesTieAtHalf) {
    const auto e = make_set({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}, {"z", "x", "y"});
    const auto nd = rank_near_duplicates(e, 10);
    ASSERT_EQ(nd.pairs.size(), 3u);
    for (const auto& p : nd.pairs.entries) EXPECT_NEAR(p.score, 0.5, 1e-12);
    EXPECT_EQ(nd.pairs.entries[0].subject, (Subject{"x", "y"}));
    EXPECT_EQ(nd.pairs.entries[1].subject, (Subject{"x", "z"}));
    EXPECT_EQ(nd.pairs.entries[2].subject, (Subject{"y", "z"}));
}

TEST(NearDuplicates, PlantedDuplicatesAuroc) {
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        const auto clean = gen_synthetic_embeddings(10, 50, 64, 0.05, seed);
        const auto planted = plant_corruption(clean, IssueType::NearDuplicate, 0.05, seed, 0.1);
        const auto nd = rank_near_duplicates(planted.embeddings);
        EXPECT_GE(auroc(nd.samples, planted.ledger.positives()), 0.95) << seed;
    }
}

TEST(LabelErrors, HandExamples) {
    // a0 and a1 coincide, b far away
    {
        const auto e = make_set({{1, 0}, {1, 0}, {0, 1}}, {"a0", "a1", "b"});
        const std::vector<int> labels{0, 0, 1};
        const auto m = by_subject(rank_label_errors(e, labels));
        EXPECT_EQ(m.at("a0"), 0.0);
    }
    // x is equidistant from its same-label and different-label neighbour
    {
        const auto e = make_set({{1, 0}, {0.70710678f, 0.70710678f}, {0.70710678f, -0.70710678f}}, {"x", "p", "q"});
        const std::vector<int> labels{0, 0, 1};
        const auto m = by_subject(rank_label_errors(e, labels));
        EXPECT_NEAR(m.at("x"), 0.5, 1e-7);
    }
}

TEST(LabelErrors, MislabelledPointAtOtherCentroid) {
    const float s = 0.01f;
    std::vector<std::vector<float>> rows = {{1, s}, {1, -s}, {1, 0}, {1, 2 * s}, {s, 1}, {-s, 1}, {2 * s, 1}, {-2 * s, 1}};
    for (auto& r : rows) {
        const float n = std::sqrt(r[0] * r[0] + r[1] * r[1]);
        r[0] /= n;
        r[1] /= n;
    }
    rows.push_back({0, 1});  // labelled A, sits at B's centroid
    const auto e = make_set(rows);
    const std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1, 0};
    const auto l = rank_label_errors(e, labels);
    EXPECT_EQ(l.entries[0].subject.first, "id8");
    EXPECT_GT(l.entries[0].score, 0.9);
}

TEST(LabelErrors, SingletonClassIsFlagged) {
    const auto e = make_set({{1, 0}, {1, 0}, {0, 1}}, {"a", "b", "lonely"});
    const std::vector<int> labels{0, 0, 1};
    const auto l = rank_label_errors(e, labels);
    EXPECT_EQ(l.flagged, std::vector<std::string>{"lonely"});
    // d_intra = 2, d_extra = 1
    EXPECT_NEAR(by_subject(l).at("lonely"), 2.0 / 3.0, 1e-12);
}

TEST(LabelErrors, LabelCountMismatchIsError) {
    const auto e = make_set({{1, 0}, {0, 1}});
    const std::vector<int> labels{0};
    EXPECT_THROW(rank_label_errors(e, labels), AuditError);
}

TEST(LabelErrors, InvariantToClassIdPermutation) {
    const auto syn = gen_synthetic_embeddings(5, 8, 12, 0.2, 9);
    auto planted = plant_corruption(syn, IssueType::LabelError, 0.1, 9);
    const std::vector<int> perm{3, 0, 4, 1, 2};
    std::vector<int> relabeled;
    for (int l : planted.labels) relabeled.push_back(perm[l]);
    const auto a = rank_label_errors(planted.embeddings, planted.labels);
    const auto b = rank_label_errors(planted.embeddings, relabeled);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
        EXPECT_EQ(a.entries[r].subject, b.entries[r].subject);
        EXPECT_EQ(a.entries[r].score, b.entries[r].score);
    }
}

// Every ranker against the quadratic-loop reference on random fixtures.
TEST(Indicators, MatchBruteForceExactly) {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + rng.below(49);  // 2..50
        const std::size_t dim = 2 + rng.below(16);
        const EmbeddingSet e = trial % 3 == 0
                                   ? gen_synthetic_embeddings(2, static_cast<int>((n + 1) / 2), std::max<int>(2, dim), 0.3,
                                                              trial).embeddings
                                   : random_unit_rows(n, dim, rng);
        const auto rows = rows_of(e);
        std::vector<int> labels(e.size());
        for (auto& l : labels) l = static_cast<int>(rng.below(3));
        const int k = static_cast<int>(1 + rng.below(e.size() - 1));

        const auto ot = by_subject(rank_off_topic(e, k));
        const auto ot_ref = oracle::off_topic_scores(rows, k);
        const auto nd = rank_near_duplicates(e, e.size());
        const auto nd_samples = by_subject(nd.samples);
        const auto nd_ref = oracle::near_duplicate_scores(rows);
        const auto le = by_subject(rank_label_errors(e, labels));
        const auto le_ref = oracle::label_error_scores(rows, labels);
        for (std::size_t i = 0; i < e.size(); ++i) {
            const auto& id = e.sample_ids()[i];
            EXPECT_EQ(ot.at(id), ot_ref[i]);
            EXPECT_EQ(nd_samples.at(id), nd_ref[i]);
            EXPECT_EQ(le.at(id), le_ref[i]);
        }
        const auto pairs_ref = oracle::near_duplicate_pairs(rows, e.sample_ids());
        ASSERT_EQ(nd.pairs.size(), std::min(pairs_ref.size(), e.size()));
        for (std::size_t p = 0; p < nd.pairs.size(); ++p) {
            EXPECT_EQ(nd.pairs.entries[p].score, std::get<0>(pairs_ref[p]));
            EXPECT_EQ(nd.pairs.entries[p].subject.first, std::get<1>(pairs_ref[p]));
            EXPECT_EQ(nd.pairs.entries[p].subject.second, std::get<2>(pairs_ref[p]));
        }
    }
}

TEST(Indicators, PermutationEquivariant) {
    const auto syn = gen_synthetic_embeddings(4, 10, 10, 0.2, 17);
    const auto& e = syn.embeddings;
    std::vector<std::size_t> perm(e.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(1);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<std::string> ids;
    std::vector<float> flat;
    std::vector<int> labels;
    for (auto i : perm) {
        ids.push_back(e.sample_ids()[i]);
        flat.insert(flat.end(), e.row(i).begin(), e.row(i).end());
        labels.push_back(syn.labels[i]);
    }
    const EmbeddingSet p(ids, e.dim(), flat);
    const auto same = [](const RankedList& a, const RankedList& b) {
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t r = 0; r < a.size(); ++r) {
            EXPECT_EQ(a.entries[r].subject, b.entries[r].subject);
            EXPECT_EQ(a.entries[r].score, b.entries[r].score);
        }
    };
    same(rank_off_topic(e, 5), rank_off_topic(p, 5));
    same(rank_near_duplicates(e).pairs, rank_near_duplicates(p).pairs);
    same(rank_near_duplicates(e).samples, rank_near_duplicates(p).samples);
    same(rank_label_errors(e, syn.labels), rank_label_errors(p, labels));
}

TEST(Indicators, RotationInvariant) {
    const auto syn = gen_synthetic_embeddings(3, 10, 8, 0.3, 23);
    const auto& e = syn.embeddings;
    Rng rng(99);
    Eigen::MatrixXd g(8, 8);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) g(r, c) = rng.normal();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    std::vector<float> rotated;
    for (std::size_t i = 0; i < e.size(); ++i) {
        Eigen::VectorXd v(8);
        for (int c = 0; c < 8; ++c) v(c) = e.row(i)[c];
        const Eigen::VectorXd w = q * v;
        for (int c = 0; c < 8; ++c) rotated.push_back(static_cast<float>(w(c)));
    }
    const EmbeddingSet r(e.sample_ids(), 8, rotated);
    const auto close = [](const RankedList& a, const RankedList& b) {
        const auto ma = by_subject(a);
        const auto mb = by_subject(b);
        ASSERT_EQ(ma.size(), mb.size());
        for (const auto& [k, v] : ma) EXPECT_NEAR(v, mb.at(k), 1e-6) << k;
        for (std::size_t i = 0; i < a.size(); ++i) {
            // order may only differ inside near-ties
            if (a.entries[i].subject != b.entries[i].subject) {
                EXPECT_NEAR(a.entries[i].score, b.entries[i].score, 2e-6);
            }
        }
    };
    close(rank_off_topic(e, 4), rank_off_topic(r, 4));
    close(rank_near_duplicates(e, 40).samples, rank_near_duplicates(r, 40).samples);
    close(rank_label_errors(e, syn.labels), rank_label_errors(r, syn.labels));
}

TEST(RankedListIo, JsonlRoundTripAndCsv) {
    const auto e = make_set({{1, 0}, {0.6f, 0.8f}, {0, 1}}, {"a,1", "b", "c"});
    const auto nd = rank_near_duplicates(e, 3);
    std::stringstream ss;
    write_jsonl(nd.pairs, ss);
    const auto first_line = ss.str().substr(0, ss.str().find('\n'));
    EXPECT_NE(first_line.find("\"rank\":1"), std::string::npos);
    EXPECT_NE(first_line.find("\"subject\":["), std::string::npos);
    const auto back = read_jsonl(ss, IssueType::NearDuplicate);
    ASSERT_EQ(back.size(), nd.pairs.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back.entries[i].subject, nd.pairs.entries[i].subject);
        EXPECT_EQ(back.entries[i].score, nd.pairs.entries[i].score);
    }
    std::stringstream csv;
    write_csv(nd.samples, csv);
    EXPECT_EQ(csv.str().substr(0, 19), "rank,subject,score\n");
    EXPECT_NE(csv.str().find("\"a,1\""), std::string::npos);
}

TEST(RankedListIo, ValidateRejectsBadLists) {
    RankedList l{IssueType::OffTopic, {{Subject::sample("a"), 0.1}, {Subject::sample("b"), 0.2}}, {}};
    EXPECT_THROW(l.validate(), AuditError);
    l.entries = {{Subject::sample("a"), 0.2}, {Subject::sample("a"), 0.1}};
    EXPECT_THROW(l.validate(), AuditError);
    l.entries = {{Subject{"b", "a"}, 0.2}};
    EXPECT_THROW(l.validate(), AuditError);
    std::stringstream bad("{\"rank\":2,\"subject\":\"a\",\"score\":1}\n");
    EXPECT_THROW(read_jsonl(bad, IssueType::OffTopic), AuditError);
}

TEST(IssueType, ParseAndFormat) {
    EXPECT_EQ(parse_issue("nd"), IssueType::NearDuplicate);
    EXPECT_EQ(to_string(IssueType::LabelError), "LE");
    EXPECT_THROW(parse_issue("XX"), AuditError);
}
