#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audio_audit/corruption.hpp"
#include "audio_audit/indicators.hpp"
#include "audio_audit/metrics.hpp"

namespace audio_audit {

/// Everything a CLI invocation needs. Echoed into every artifact it writes.
struct AuditConfig {
    std::string command;
    fs::path dataset_dir;
    fs::path manifest;
    fs::path embeddings_manifest;
    fs::path embeddings;
    std::vector<IssueType> issues{IssueType::OffTopic, IssueType::NearDuplicate, IssueType::LabelError};
    std::optional<double> alpha;
    std::uint64_t seed = 0;
    int k = kDefaultOffTopicK;
    std::size_t max_pairs = 0;  // 0 = N
    fs::path output_dir;
    std::string bind = "127.0.0.1:8080";
    std::optional<fs::path> external_pool;
    std::optional<fs::path> ledger;
    std::string model = "embeddings";

    // gen-embeddings-synthetic
    int classes = 10;
    int per_class = 50;
    int dim = 64;
    double spread = 0.05;
    std::optional<IssueType> plant;

    nlohmann::json to_json() const;
    /// 16 hex digits of FNV-1a over the canonical JSON form.
    std::string hash() const;
    /// Checks what `command` requires; AuditError(Parameter) otherwise.
    void validate() const;
};

/// {"config", "config_hash", "seed", "version"}.
nlohmann::json provenance(const AuditConfig& config);

/// "%g" of alpha, or "natural" for audits without synthetic corruption.
std::string alpha_label(std::optional<double> alpha);

/// <out>/<issue>/<alpha>/<seed>
fs::path run_dir(const fs::path& out, IssueType issue, std::optional<double> alpha, std::uint64_t seed);

InjectionResult run_corrupt(const AuditConfig& config);

/// Writes ranking.{jsonl,csv} per issue (ND also pairs.{jsonl,csv}) and a
/// provenance.json per run directory. Returns the run directories.
std::vector<fs::path> run_rank(const AuditConfig& config);

struct EvaluationSummary {
    struct Run {
        fs::path dir;
        std::string alpha;
        std::uint64_t seed = 0;
        EvaluationReport report;
    };
    std::vector<Run> runs;
    std::string markdown;
    nlohmann::json aggregate;
};

/// Scans output_dir for run directories holding ranking.jsonl and
/// ledger.json; writes report.json and foe.csv into each, plus summary.md
/// and summary.json at the top.
EvaluationSummary run_evaluate(const AuditConfig& config);

/// Writes manifest.json, embeddings.json, embeddings.aemb and, when
/// config.plant is set, ledger.json.
void run_gen_synthetic(const AuditConfig& config);

}  // namespace audio_audit
