#include "audio_audit/review_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>

#include <httplib.h>

#include "audio_audit/errors.hpp"

namespace audio_audit {

std::string_view to_string(Decision d) noexcept {
    switch (d) {
        case Decision::Confirm: return "confirm";
        case Decision::Reject: return "reject";
        case Decision::Skip: return "skip";
    }
    return "skip";
}

std::optional<Decision> parse_decision(std::string_view s) noexcept {
    if (s == "confirm") return Decision::Confirm;
    if (s == "reject") return Decision::Reject;
    if (s == "skip") return Decision::Skip;
    return std::nullopt;
}

namespace {

std::string now_utc() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
    return buf;
}

nlohmann::json subject_json(const Subject& s) {
    return s.is_pair() ? nlohmann::json::array({s.first, s.second}) : nlohmann::json(s.first);
}

}  // namespace

nlohmann::json to_json(const Verdict& v) {
    return {{"seq", v.seq},
            {"audit", v.audit},
            {"issue", std::string(to_string(v.issue))},
            {"subject", subject_json(v.subject)},
            {"decision", std::string(to_string(v.decision))},
            {"reviewer", v.reviewer},
            {"timestamp", v.timestamp}};
}

Verdict verdict_from_json(const nlohmann::json& j) {
    const auto bad = [](const std::string& why) { fail(ErrorKind::Validation, "malformed verdict: " + why); };
    if (!j.is_object()) bad("body must be a JSON object");
    Verdict v;
    if (!j.contains("audit") || !j["audit"].is_string()) bad("'audit' must be a string");
    v.audit = j["audit"].get<std::string>();
    if (!j.contains("issue") || !j["issue"].is_string()) bad("'issue' must be a string");
    try {
        v.issue = parse_issue(j["issue"].get<std::string>());
    } catch (const AuditError& e) {
        bad(e.what());
    }
    if (!j.contains("subject")) bad("'subject' is required");
    const auto& s = j["subject"];
    if (s.is_string()) {
        v.subject = Subject::sample(s.get<std::string>());
    } else if (s.is_array() && s.size() == 2 && s[0].is_string() && s[1].is_string()) {
        v.subject = Subject::pair(s[0].get<std::string>(), s[1].get<std::string>());
    } else {
        bad("'subject' must be an id or a pair of ids");
    }
    if (!j.contains("decision") || !j["decision"].is_string()) bad("'decision' must be a string");
    const auto d = parse_decision(j["decision"].get<std::string>());
    if (!d) bad("'decision' must be confirm, reject or skip");
    v.decision = *d;
    if (j.contains("reviewer")) {
        if (!j["reviewer"].is_string()) bad("'reviewer' must be a string");
        v.reviewer = j["reviewer"].get<std::string>();
    }
    if (j.contains("timestamp")) {
        if (!j["timestamp"].is_string()) bad("'timestamp' must be a string");
        v.timestamp = j["timestamp"].get<std::string>();
    }
    if (j.contains("seq") && j["seq"].is_number_unsigned()) v.seq = j["seq"].get<std::uint64_t>();
    return v;
}

nlohmann::json to_json(const IssueProgress& p) {
    return {{"ranking_size", p.ranking_size},
            {"reviewed", p.reviewed},
            {"confirmed", p.confirmed},
            {"rejected", p.rejected},
            {"skipped", p.skipped},
            {"foe_so_far", p.foe_so_far ? nlohmann::json(*p.foe_so_far) : nlohmann::json()}};
}

// ---- VerdictStore ----------------------------------------------------------

VerdictStore::VerdictStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    replay();
}

VerdictStore::~VerdictStore() {
    for (auto& [audit, fd] : fds_) ::close(fd);
}

fs::path VerdictStore::log_path(const std::string& audit) const { return dir_ / (audit + ".jsonl"); }

void VerdictStore::index(const Verdict& v) {
    auto& state = index_[{v.audit, v.issue}][v.subject.key()];
    if (v.decision != Decision::Skip) state.latest_non_skip = v.decision;
}

void VerdictStore::replay() {
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    for (const auto& path : logs) {
        std::string text;
        {
            std::ifstream in(path, std::ios::binary);
            text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        // An unacknowledged torn write leaves a partial last line; drop it.
        if (!text.empty() && text.back() != '\n') {
            const auto keep = text.rfind('\n');
            text.resize(keep == std::string::npos ? 0 : keep + 1);
            fs::resize_file(path, text.size());
        }
        const std::string audit = path.stem().string();
        std::uint64_t next = 0;
        std::size_t start = 0;
        while (start < text.size()) {
            const auto end = text.find('\n', start);
            const auto line = text.substr(start, end - start);
            start = end + 1;
            if (line.empty()) continue;
            try {
                auto v = verdict_from_json(nlohmann::json::parse(line));
                next = std::max(next, v.seq + 1);
                index(v);
            } catch (const std::exception&) {
                fail(ErrorKind::Format, "corrupt verdict log " + path.string());
            }
        }
        next_seq_[audit] = next;
    }
}

Verdict VerdictStore::append(Verdict v) {
    std::lock_guard append_lock(append_mutex_);
    if (v.timestamp.empty()) v.timestamp = now_utc();
    {
        std::shared_lock read(mutex_);
        const auto it = next_seq_.find(v.audit);
        v.seq = it == next_seq_.end() ? 0 : it->second;
    }
    auto fd_it = fds_.find(v.audit);
    if (fd_it == fds_.end()) {
        const int fd = ::open(log_path(v.audit).c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
        if (fd < 0) fail(ErrorKind::Io, "cannot open verdict log: " + std::string(std::strerror(errno)));
        fd_it = fds_.emplace(v.audit, fd).first;
    }
    const std::string line = to_json(v).dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd_it->second, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail(ErrorKind::Io, "verdict log write failed: " + std::string(std::strerror(errno)));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_it->second) != 0) fail(ErrorKind::Io, "verdict log fsync failed: " + std::string(std::strerror(errno)));

    std::unique_lock write(mutex_);
    next_seq_[v.audit] = v.seq + 1;
    index(v);
    return v;
}

std::optional<Decision> VerdictStore::state(const std::string& audit, IssueType issue, const std::string& key) const {
    std::shared_lock lock(mutex_);
    const auto it = index_.find({audit, issue});
    if (it == index_.end()) return std::nullopt;
    const auto s = it->second.find(key);
    if (s == it->second.end()) return std::nullopt;
    return s->second.latest_non_skip ? s->second.latest_non_skip : Decision::Skip;
}

IssueProgress VerdictStore::progress(const std::string& audit, IssueType issue, std::size_t ranking_size) const {
    std::shared_lock lock(mutex_);
    IssueProgress p;
    p.ranking_size = ranking_size;
    const auto it = index_.find({audit, issue});
    if (it != index_.end()) {
        for (const auto& [key, s] : it->second) {
            ++p.reviewed;
            if (!s.latest_non_skip) {
                ++p.skipped;
            } else if (*s.latest_non_skip == Decision::Confirm) {
                ++p.confirmed;
            } else {
                ++p.rejected;
            }
        }
    }
    if (p.confirmed > 0) {
        // running estimate: P = confirmed so far, k = confirmed
        const double c = static_cast<double>(p.confirmed);
        const double expected = c * (static_cast<double>(ranking_size) + 1.0) / (c + 1.0);
        p.foe_so_far = static_cast<double>(p.reviewed) / expected;
    }
    return p;
}

std::size_t VerdictStore::log_size(const std::string& audit) const {
    std::shared_lock lock(mutex_);
    const auto it = next_seq_.find(audit);
    return it == next_seq_.end() ? 0 : it->second;
}

// ---- ReviewService ---------------------------------------------------------

namespace {

ReviewService::Response error(int status, const std::string& message) { return {status, {{"error", message}}}; }

bool within_root(const fs::path& candidate, const fs::path& root) {
    const auto c = fs::weakly_canonical(candidate);
    const auto r = fs::weakly_canonical(root);
    auto ci = c.begin();
    for (auto ri = r.begin(); ri != r.end(); ++ri, ++ci) {
        if (ri->empty()) continue;
        if (ci == c.end() || *ci != *ri) return false;
    }
    return true;
}

}  // namespace

ReviewService::ReviewService(ServiceOptions options) : options_(std::move(options)) {
    fs::path manifest_path;
    if (options_.manifest) {
        manifest_path = *options_.manifest;
    } else if (!options_.dataset_dir.empty() && fs::exists(options_.dataset_dir / "manifest.json")) {
        manifest_path = options_.dataset_dir / "manifest.json";
    }
    if (!manifest_path.empty()) {
        manifest_ = load_dataset_manifest(manifest_path);
        manifest_index_ = manifest_->index();
    }
    discover();
    store_ = std::make_unique<VerdictStore>(options_.audit_dir / "verdicts");
    server_ = std::make_unique<httplib::Server>();
    install_routes();
}

ReviewService::~ReviewService() { stop(); }

void ReviewService::discover() {
    for (IssueType issue : {IssueType::OffTopic, IssueType::NearDuplicate, IssueType::LabelError}) {
        const auto issue_dir = options_.audit_dir / std::string(to_string(issue));
        if (!fs::is_directory(issue_dir)) continue;
        for (const auto& alpha_dir : fs::directory_iterator(issue_dir)) {
            if (!alpha_dir.is_directory()) continue;
            for (const auto& seed_dir : fs::directory_iterator(alpha_dir.path())) {
                if (!seed_dir.is_directory()) continue;
                const auto seed_name = seed_dir.path().filename().string();
                if (seed_name.empty() || !std::all_of(seed_name.begin(), seed_name.end(), ::isdigit)) continue;
                fs::path file = seed_dir.path() / (issue == IssueType::NearDuplicate ? "pairs.jsonl" : "ranking.jsonl");
                if (!fs::exists(file)) file = seed_dir.path() / "ranking.jsonl";
                if (!fs::exists(file)) continue;

                const auto alpha = alpha_dir.path().filename().string();
                const auto id = alpha + "_" + seed_name;
                auto& audit = audits_[id];
                audit.id = id;
                audit.alpha = alpha;
                audit.seed = std::stoull(seed_name);
                IssueRanking r{load_ranking(file, issue), {}};
                for (std::size_t i = 0; i < r.list.size(); ++i) r.rank_of.emplace(r.list.entries[i].subject.key(), i);
                audit.rankings[issue] = std::move(r);
            }
        }
    }
}

const ReviewService::Audit* ReviewService::find_audit(const std::string& id) const {
    const auto it = audits_.find(id);
    return it == audits_.end() ? nullptr : &it->second;
}

ReviewService::Response ReviewService::list_audits() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, audit] : audits_) {
        nlohmann::json issues = nlohmann::json::object();
        for (const auto& [issue, r] : audit.rankings) {
            issues[std::string(to_string(issue))] = {{"size", r.list.size()},
                                                     {"granularity", issue == IssueType::NearDuplicate && r.list.size() &&
                                                                             r.list.entries.front().subject.is_pair()
                                                                         ? "pair"
                                                                         : "sample"}};
        }
        out.push_back({{"id", id}, {"alpha", audit.alpha}, {"seed", audit.seed}, {"issues", std::move(issues)}});
    }
    return {200, {{"audits", std::move(out)}}};
}

ReviewService::Response ReviewService::ranking_page(const std::string& audit_id, const std::string& issue_tag,
                                                   std::size_t offset, std::size_t limit) const {
    const Audit* audit = find_audit(audit_id);
    if (audit == nullptr) return error(404, "unknown audit '" + audit_id + "'");
    IssueType issue;
    try {
        issue = parse_issue(issue_tag);
    } catch (const AuditError&) {
        return error(404, "unknown issue '" + issue_tag + "'");
    }
    const auto it = audit->rankings.find(issue);
    if (it == audit->rankings.end()) return error(404, "audit '" + audit_id + "' has no " + issue_tag + " ranking");
    const auto& list = it->second.list;

    limit = std::clamp<std::size_t>(limit, 1, 1000);
    nlohmann::json entries = nlohmann::json::array();
    const std::size_t end = std::min(list.size(), offset + limit);
    for (std::size_t r = offset; r < end; ++r) {
        const auto& e = list.entries[r];
        nlohmann::json ids = nlohmann::json::array({e.subject.first});
        if (e.subject.is_pair()) ids.push_back(e.subject.second);
        nlohmann::json entry = {{"rank", r + 1}, {"subject", subject_json(e.subject)}, {"score", e.score}, {"ids", ids}};
        nlohmann::json audio = nlohmann::json::array();
        for (const auto& id : ids) audio.push_back("/audio/" + id.get<std::string>());
        entry["audio"] = std::move(audio);
        const auto state = store_->state(audit_id, issue, e.subject.key());
        entry["verdict"] = state ? nlohmann::json(std::string(to_string(*state))) : nlohmann::json();
        if (issue == IssueType::LabelError && manifest_) {
            const auto m = manifest_index_.find(e.subject.first);
            if (m != manifest_index_.end()) {
                const int label = manifest_->samples[m->second].label;
                entry["label"] = label;
                entry["class_name"] = manifest_->classes[static_cast<std::size_t>(label)];
            }
        }
        entries.push_back(std::move(entry));
    }
    return {200,
            {{"audit", audit_id},
             {"issue", std::string(to_string(issue))},
             {"offset", offset},
             {"limit", limit},
             {"total", list.size()},
             {"entries", std::move(entries)},
             {"next", end < list.size() ? nlohmann::json(std::to_string(end)) : nlohmann::json()}}};
}

ReviewService::Response ReviewService::progress(const std::string& audit_id) const {
    const Audit* audit = find_audit(audit_id);
    if (audit == nullptr) return error(404, "unknown audit '" + audit_id + "'");
    nlohmann::json issues = nlohmann::json::object();
    for (const auto& [issue, r] : audit->rankings) {
        issues[std::string(to_string(issue))] = to_json(store_->progress(audit_id, issue, r.list.size()));
    }
    return {200,
            {{"audit", audit_id},
             {"issues", std::move(issues)},
             {"foe_definition",
              "reviewed / (c * (N + 1) / (c + 1)), c = confirmed so far standing in for the unknown issue count"}}};
}

ReviewService::Response ReviewService::post_verdict(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        return error(400, std::string("malformed JSON: ") + e.what());
    }
    Verdict v;
    try {
        v = verdict_from_json(j);
    } catch (const AuditError& e) {
        return error(400, e.what());
    }
    const Audit* audit = find_audit(v.audit);
    if (audit == nullptr) return error(422, "unknown audit '" + v.audit + "'");
    const auto r = audit->rankings.find(v.issue);
    if (r == audit->rankings.end()) return error(422, "audit has no " + std::string(to_string(v.issue)) + " ranking");
    if (!r->second.rank_of.contains(v.subject.key())) {
        return error(422, "subject " + v.subject.key() + " is not in the " + std::string(to_string(v.issue)) + " ranking");
    }
    try {
        const auto stored = store_->append(std::move(v));
        return {200, {{"ok", true}, {"seq", stored.seq}, {"timestamp", stored.timestamp}}};
    } catch (const AuditError& e) {
        return error(500, e.what());
    }
}

std::optional<fs::path> ReviewService::audio_path(const std::string& sample_id) const {
    if (!manifest_) return std::nullopt;
    const auto it = manifest_index_.find(sample_id);
    if (it == manifest_index_.end()) return std::nullopt;
    const auto path = options_.dataset_dir / manifest_->samples[it->second].path;
    if (!within_root(path, options_.dataset_dir) || !fs::is_regular_file(path)) return std::nullopt;
    return path;
}

void ReviewService::install_routes() {
    auto& svr = *server_;
    svr.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type, Range"}});
    const auto send = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    const auto size_param = [](const httplib::Request& req, const char* name, std::size_t fallback) {
        if (!req.has_param(name)) return fallback;
        try {
            return static_cast<std::size_t>(std::stoull(req.get_param_value(name)));
        } catch (const std::exception&) {
            return fallback;
        }
    };

    svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    svr.Get("/audits", [this, send](const httplib::Request&, httplib::Response& res) { send(res, list_audits()); });
    svr.Get(R"(/audits/([^/]+)/ranking/([^/]+))", [this, send, size_param](const httplib::Request& req, httplib::Response& res) {
        std::size_t offset = size_param(req, "offset", 0);
        if (req.has_param("page_token")) offset = size_param(req, "page_token", offset);
        send(res, ranking_page(req.matches[1], req.matches[2], offset, size_param(req, "limit", 50)));
    });
    svr.Get(R"(/audits/([^/]+)/progress)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, progress(req.matches[1]));
    });
    svr.Post("/verdicts", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, post_verdict(req.body));
    });
    svr.Get(R"(/audio/(.+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        const auto path = audio_path(req.matches[1]);
        if (!path) {
            send(res, error(404, "unknown sample"));
            return;
        }
        std::ifstream in(*path, std::ios::binary);
        std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        res.set_header("Accept-Ranges", "bytes");
        res.set_content(std::move(bytes), "audio/wav");
    });
    if (options_.ui_dir) svr.set_mount_point("/ui", options_.ui_dir->string());
}

int ReviewService::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) fail(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void ReviewService::run() { server_->listen_after_bind(); }

void ReviewService::stop() {
    if (server_ && server_->is_running()) server_->stop();
}

}  // namespace audio_audit
