#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "audio_audit/errors.hpp"
#include "audio_audit/review_service.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace audio_audit;
using namespace audio_audit::testing;

namespace {

class ServiceTest : public ::testing::Test {
protected:
    TempDir root;
    ReviewFixture fx;
    std::unique_ptr<ReviewService> svc;
    std::thread thread;
    int port = 0;

    void SetUp() override {
        fx = make_review_fixture(root.path());
        start();
    }
    void TearDown() override { shutdown(); }

    void start() {
        svc = std::make_unique<ReviewService>(ServiceOptions{fx.audit_dir, fx.dataset_dir});
        port = svc->bind("127.0.0.1", 0);
        thread = std::thread([this] { svc->run(); });
        httplib::Client c("127.0.0.1", port);
        for (int i = 0; i < 200 && !c.Get("/audits"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    void shutdown() {
        if (svc) svc->stop();
        if (thread.joinable()) thread.join();
        svc.reset();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }

    nlohmann::json get(const std::string& path, int expect = 200) {
        auto res = client().Get(path);
        EXPECT_TRUE(res);
        if (!res) return {};
        EXPECT_EQ(res->status, expect) << path << " " << res->body;
        return nlohmann::json::parse(res->body);
    }
    int post(const nlohmann::json& body) { return post_raw(body.dump()); }
    int post_raw(const std::string& body) {
        auto res = client().Post("/verdicts", body, "application/json");
        return res ? res->status : -1;
    }
    std::size_t n() const { return fx.manifest.size(); }
};

}  // namespace

TEST_F(ServiceTest, ListsAudits) {
    const auto j = get("/audits").at("audits");
    ASSERT_EQ(j.size(), 1u);
    EXPECT_EQ(j[0].at("id"), "0.05_1");
    EXPECT_EQ(j[0].at("issues").at("ND").at("granularity"), "pair");
    EXPECT_EQ(j[0].at("issues").at("OT").at("size"), n());
}

TEST_F(ServiceTest, PaginatesInRankingOrder) {
    const auto p1 = get("/audits/0.05_1/ranking/OT?limit=2");
    ASSERT_EQ(p1.at("entries").size(), 2u);
    EXPECT_EQ(p1.at("entries")[0].at("rank"), 1);
    ASSERT_TRUE(p1.at("next").is_string());
    const auto p2 = get("/audits/0.05_1/ranking/OT?limit=2&page_token=" + p1.at("next").get<std::string>());
    EXPECT_EQ(p2.at("entries")[0].at("rank"), 3);
    const auto ranking = load_ranking(fx.audit_dir / "OT" / "0.05" / "1" / "ranking.jsonl", IssueType::OffTopic);
    EXPECT_EQ(p2.at("entries")[1].at("subject"), ranking.entries[3].subject.first);
    const auto last = get("/audits/0.05_1/ranking/OT?offset=" + std::to_string(n() - 1) + "&limit=5");
    EXPECT_EQ(last.at("entries").size(), 1u);
    EXPECT_TRUE(last.at("next").is_null());
}

TEST_F(ServiceTest, ThreeEntryListPagesByTwo) {
    RankedList l{IssueType::OffTopic, {{Subject::sample("c0_000"), 0.9}, {Subject::sample("c0_001"), 0.5}, {Subject::sample("c0_002"), 0.1}}, {}};
    const auto dir = fx.audit_dir / "OT" / "0.2" / "9";
    fs::create_directories(dir);
    save_ranking(l, dir / "ranking.jsonl", dir / "ranking.csv");
    shutdown();
    start();
    const auto p = get("/audits/0.2_9/ranking/OT?limit=2");
    EXPECT_EQ(p.at("entries").size(), 2u);
    EXPECT_EQ(p.at("total"), 3);
    EXPECT_EQ(p.at("next"), "2");
}

TEST_F(ServiceTest, NearDuplicateEntriesCarryBothIds) {
    const auto p = get("/audits/0.05_1/ranking/ND?limit=3");
    const auto& top = p.at("entries")[0];
    EXPECT_EQ(top.at("ids"), nlohmann::json::array({"c0_000", "c0_001"}));
    EXPECT_EQ(top.at("audio"), nlohmann::json::array({"/audio/c0_000", "/audio/c0_001"}));
    EXPECT_EQ(top.at("score"), 1.0);
}

TEST_F(ServiceTest, LabelErrorEntriesCarryClassName) {
    const auto e = get("/audits/0.05_1/ranking/LE?limit=1").at("entries")[0];
    const auto& rec = fx.manifest.samples[fx.manifest.index().at(e.at("subject").get<std::string>())];
    EXPECT_EQ(e.at("label"), rec.label);
    EXPECT_EQ(e.at("class_name"), fx.manifest.classes[rec.label]);
}

TEST_F(ServiceTest, VerdictIsVisibleOnNextRead) {
    EXPECT_TRUE(get("/audits/0.05_1/ranking/ND?limit=1").at("entries")[0].at("verdict").is_null());
    EXPECT_EQ(post({{"audit", "0.05_1"}, {"issue", "ND"}, {"subject", {"c0_001", "c0_000"}}, {"decision", "confirm"}, {"reviewer", "r1"}}), 200);
    EXPECT_EQ(get("/audits/0.05_1/ranking/ND?limit=1").at("entries")[0].at("verdict"), "confirm");
    EXPECT_EQ(post({{"audit", "0.05_1"}, {"issue", "ND"}, {"subject", {"c0_000", "c0_001"}}, {"decision", "reject"}}), 200);
    EXPECT_EQ(get("/audits/0.05_1/ranking/ND?limit=1").at("entries")[0].at("verdict"), "reject");
}

TEST_F(ServiceTest, ConfirmTopDuplicateGivesClosedFormFoe) {
    ASSERT_EQ(post({{"audit", "0.05_1"}, {"issue", "ND"}, {"subject", {"c0_000", "c0_001"}}, {"decision", "confirm"}}), 200);
    const auto nd = get("/audits/0.05_1/progress").at("issues").at("ND");
    const double total = nd.at("ranking_size");
    EXPECT_EQ(nd.at("confirmed"), 1);
    EXPECT_EQ(nd.at("reviewed"), 1);
    EXPECT_NEAR(nd.at("foe_so_far").get<double>(), 1.0 / (1.0 * (total + 1) / 2.0), 1e-12);
}

TEST_F(ServiceTest, SkipCountsAsReviewedOnly) {
    const auto subject = get("/audits/0.05_1/ranking/OT?limit=1").at("entries")[0].at("subject");
    ASSERT_EQ(post({{"audit", "0.05_1"}, {"issue", "OT"}, {"subject", subject}, {"decision", "skip"}}), 200);
    const auto ot = get("/audits/0.05_1/progress").at("issues").at("OT");
    EXPECT_EQ(ot.at("reviewed"), 1);
    EXPECT_EQ(ot.at("skipped"), 1);
    EXPECT_EQ(ot.at("confirmed"), 0);
    EXPECT_TRUE(ot.at("foe_so_far").is_null());
}

TEST_F(ServiceTest, RestartReplaysToSameProgress) {
    const auto list = get("/audits/0.05_1/ranking/LE?limit=10").at("entries");
    const char* decisions[] = {"confirm", "reject", "skip", "confirm"};
    for (std::size_t i = 0; i < list.size(); ++i) {
        ASSERT_EQ(post({{"audit", "0.05_1"}, {"issue", "LE"}, {"subject", list[i].at("subject")}, {"decision", decisions[i % 4]}}), 200);
    }
    const auto before = get("/audits/0.05_1/progress");
    shutdown();
    start();
    EXPECT_EQ(get("/audits/0.05_1/progress"), before);
    EXPECT_EQ(svc->verdicts().log_size("0.05_1"), list.size());
}

TEST_F(ServiceTest, TornTailIsDroppedOnReplay) {
    const auto subject = get("/audits/0.05_1/ranking/OT?limit=1").at("entries")[0].at("subject");
    ASSERT_EQ(post({{"audit", "0.05_1"}, {"issue", "OT"}, {"subject", subject}, {"decision", "confirm"}}), 200);
    shutdown();
    {
        std::ofstream log(fx.audit_dir / "verdicts" / "0.05_1.jsonl", std::ios::app);
        log << "{\"audit\":\"0.05_1\",\"iss";
    }
    start();
    EXPECT_EQ(get("/audits/0.05_1/progress").at("issues").at("OT").at("confirmed"), 1);
    ASSERT_EQ(post({{"audit", "0.05_1"}, {"issue", "OT"}, {"subject", subject}, {"decision", "reject"}}), 200);
    shutdown();
    start();
    EXPECT_EQ(get("/audits/0.05_1/progress").at("issues").at("OT").at("rejected"), 1);
}

TEST_F(ServiceTest, RejectsBadVerdicts) {
    EXPECT_EQ(post_raw("{not json"), 400);
    EXPECT_EQ(post({{"audit", "0.05_1"}, {"issue", "ND"}}), 400);
    EXPECT_EQ(post({{"audit", "0.05_1"}, {"issue", "OT"}, {"subject", "c0_000"}, {"decision", "maybe"}}), 400);
    EXPECT_EQ(post({{"audit", "nope"}, {"issue", "OT"}, {"subject", "c0_000"}, {"decision", "skip"}}), 422);
    EXPECT_EQ(post({{"audit", "0.05_1"}, {"issue", "OT"}, {"subject", "ghost"}, {"decision", "skip"}}), 422);
    EXPECT_EQ(post({{"audit", "0.05_1"}, {"issue", "ND"}, {"subject", {"c1_000", "c2_003"}}, {"decision", "skip"}}), 422);
    EXPECT_EQ(svc->verdicts().log_size("0.05_1"), 0u);
}

TEST_F(ServiceTest, UnknownAuditOrIssueIsNotFound) {
    get("/audits/zzz/ranking/OT", 404);
    get("/audits/0.05_1/ranking/XX", 404);
    get("/audits/zzz/progress", 404);
}

TEST_F(ServiceTest, ServesAudioWithRanges) {
    const auto& s = fx.manifest.samples[2];
    const auto bytes = read_text(fx.dataset_dir / s.path);
    auto res = client().Get("/audio/" + s.id);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, bytes);
    EXPECT_EQ(res->get_header_value("Content-Type"), "audio/wav");
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");

    res = client().Get("/audio/" + s.id, {{"Range", "bytes=0-99"}});
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 206);
    EXPECT_EQ(res->body.size(), 100u);
    EXPECT_EQ(res->body, bytes.substr(0, 100));
}

TEST_F(ServiceTest, AudioRejectsUnknownAndTraversal) {
    write_file(root.path() / "secret", std::string("top secret"));
    for (const char* id : {"/audio/../secret", "/audio/%2E%2E%2Fsecret", "/audio/ghost", "/audio/..%2F..%2Fsecret"}) {
        auto res = client().Get(id);
        ASSERT_TRUE(res) << id;
        EXPECT_EQ(res->status, 404) << id;
        EXPECT_EQ(res->body.find("top secret"), std::string::npos);
    }
    EXPECT_FALSE(svc->audio_path("../secret"));
}

TEST_F(ServiceTest, ConcurrentPostsAreAllLogged) {
    const auto list = get("/audits/0.05_1/ranking/OT?limit=100").at("entries");
    std::vector<std::thread> clients;
    std::atomic<int> ok{0};
    for (int c = 0; c < 8; ++c) {
        clients.emplace_back([&, c] {
            httplib::Client cl("127.0.0.1", port);
            for (int i = 0; i < 25; ++i) {
                const nlohmann::json body{{"audit", "0.05_1"}, {"issue", "OT"}, {"subject", list[(c * 25 + i) % list.size()].at("subject")},
                                          {"decision", i % 2 ? "confirm" : "reject"}, {"reviewer", "r" + std::to_string(c)}};
                auto res = cl.Post("/verdicts", body.dump(), "application/json");
                if (res && res->status == 200) ++ok;
            }
        });
    }
    for (auto& t : clients) t.join();
    EXPECT_EQ(ok.load(), 200);
    EXPECT_EQ(svc->verdicts().log_size("0.05_1"), 200u);
    std::ifstream log(fx.audit_dir / "verdicts" / "0.05_1.jsonl");
    std::string line;
    std::set<std::uint64_t> seqs;
    while (std::getline(log, line)) seqs.insert(nlohmann::json::parse(line).at("seq").get<std::uint64_t>());
    EXPECT_EQ(seqs.size(), 200u);
    EXPECT_EQ(*seqs.rbegin() - *seqs.begin(), 199u);
}

TEST_F(ServiceTest, PreflightAndCors) {
    auto res = client().Options("/verdicts");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST(VerdictJson, RoundTrip) {
    Verdict v{"a", IssueType::NearDuplicate, Subject::pair("y", "x"), Decision::Confirm, "me", "2026-01-01T00:00:00Z", 4};
    const auto back = verdict_from_json(to_json(v));
    EXPECT_EQ(back.subject, (Subject{"x", "y"}));
    EXPECT_EQ(back.seq, 4u);
    EXPECT_EQ(back.decision, Decision::Confirm);
    EXPECT_THROW(verdict_from_json(nlohmann::json::array()), AuditError);
}
