#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "audio_audit/embedding_store.hpp"
#include "audio_audit/indicators.hpp"

namespace httplib {
class Server;
}

namespace audio_audit {

enum class Decision { Confirm, Reject, Skip };

std::string_view to_string(Decision d) noexcept;
std::optional<Decision> parse_decision(std::string_view s) noexcept;

struct Verdict {
    std::string audit;
    IssueType issue = IssueType::NearDuplicate;
    Subject subject;
    Decision decision = Decision::Skip;
    std::string reviewer;
    std::string timestamp;  // ISO 8601 UTC
    std::uint64_t seq = 0;  // acknowledgment order within the audit log
};

nlohmann::json to_json(const Verdict& v);
/// Throws AuditError(Validation) on missing or ill-typed fields.
Verdict verdict_from_json(const nlohmann::json& j);

struct IssueProgress {
    std::size_t ranking_size = 0;
    std::size_t reviewed = 0;   // distinct subjects with any verdict
    std::size_t confirmed = 0;  // latest non-skip decision is confirm
    std::size_t rejected = 0;
    std::size_t skipped = 0;    // only skip decisions so far
    /// reviewed / (c (N + 1) / (c + 1)) with c = confirmed; empty while c = 0.
    std::optional<double> foe_so_far;
};

nlohmann::json to_json(const IssueProgress& p);

/// Append-only NDJSON verdict logs, one file per audit under `dir`, with an
/// in-memory replay index. Appends are serialized and fsynced before they
/// return.
class VerdictStore {
public:
    explicit VerdictStore(fs::path dir);
    ~VerdictStore();
    VerdictStore(const VerdictStore&) = delete;
    VerdictStore& operator=(const VerdictStore&) = delete;

    /// Assigns seq (and timestamp when empty), persists, then indexes.
    Verdict append(Verdict v);

    /// Latest non-skip decision for the subject, or Skip if it was only
    /// skipped; empty if never reviewed.
    std::optional<Decision> state(const std::string& audit, IssueType issue, const std::string& subject_key) const;

    IssueProgress progress(const std::string& audit, IssueType issue, std::size_t ranking_size) const;
    std::size_t log_size(const std::string& audit) const;

private:
    struct SubjectState {
        std::optional<Decision> latest_non_skip;
    };
    using IssueIndex = std::unordered_map<std::string, SubjectState>;

    void replay();
    void index(const Verdict& v);
    fs::path log_path(const std::string& audit) const;

    fs::path dir_;
    mutable std::shared_mutex mutex_;
    std::mutex append_mutex_;
    std::map<std::pair<std::string, IssueType>, IssueIndex> index_;
    std::map<std::string, std::uint64_t> next_seq_;
    std::map<std::string, int> fds_;
};

struct ServiceOptions {
    fs::path audit_dir;
    fs::path dataset_dir;
    std::optional<fs::path> manifest;  // defaults to <dataset_dir>/manifest.json when present
    std::optional<fs::path> ui_dir;
    std::string cors_origin = "*";
};

/// HTTP triage API over a rank output directory.
///
///   GET  /audits
///   GET  /audits/{id}/ranking/{issue}?offset=&limit=
///   GET  /audits/{id}/progress
///   POST /verdicts
///   GET  /audio/{sample_id}         (Range supported)
///
/// An audit is one <alpha>/<seed> pair of the rank layout; its id is
/// "<alpha>_<seed>". ND is reviewed at pair level (pairs.jsonl).
class ReviewService {
public:
    struct Response {
        int status = 200;
        nlohmann::json body;
    };

    explicit ReviewService(ServiceOptions options);
    ~ReviewService();

    Response list_audits() const;
    Response ranking_page(const std::string& audit, const std::string& issue, std::size_t offset,
                          std::size_t limit) const;
    Response progress(const std::string& audit) const;
    Response post_verdict(const std::string& body);

    /// Resolves a sample id to a file under the dataset root; empty when the
    /// id is unknown or the path escapes the root.
    std::optional<fs::path> audio_path(const std::string& sample_id) const;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();

    VerdictStore& verdicts() { return *store_; }

private:
    struct IssueRanking {
        RankedList list;
        std::unordered_map<std::string, std::size_t> rank_of;  // subject key -> 0-based rank
    };
    struct Audit {
        std::string id;
        std::string alpha;
        std::uint64_t seed = 0;
        std::map<IssueType, IssueRanking> rankings;
    };

    void discover();
    void install_routes();
    const Audit* find_audit(const std::string& id) const;

    ServiceOptions options_;
    std::optional<DatasetManifest> manifest_;
    std::unordered_map<std::string, std::size_t> manifest_index_;
    std::map<std::string, Audit> audits_;
    std::unique_ptr<VerdictStore> store_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace audio_audit
