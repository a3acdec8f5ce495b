#include "audio_audit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "audio_audit/errors.hpp"
#include "audio_audit/rng.hpp"
#include "audio_audit/version.hpp"

namespace audio_audit {

namespace {

nlohmann::json opt_path(const std::optional<fs::path>& p) { return p ? nlohmann::json(p->string()) : nlohmann::json(); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

void require(bool ok, const std::string& message) {
    if (!ok) fail(ErrorKind::Parameter, message);
}

}  // namespace

nlohmann::json AuditConfig::to_json() const {
    nlohmann::json issue_tags = nlohmann::json::array();
    for (auto i : issues) issue_tags.push_back(std::string(to_string(i)));
    return {
        {"command", command},
        {"dataset_dir", dataset_dir.string()},
        {"manifest", manifest.string()},
        {"embeddings_manifest", embeddings_manifest.string()},
        {"embeddings", embeddings.string()},
        {"issues", issue_tags},
        {"alpha", alpha ? nlohmann::json(*alpha) : nlohmann::json()},
        {"seed", seed},
        {"k", k},
        {"max_pairs", max_pairs},
        {"output_dir", output_dir.string()},
        {"bind", bind},
        {"external_pool", opt_path(external_pool)},
        {"ledger", opt_path(ledger)},
        {"model", model},
        {"synthetic",
         {{"classes", classes},
          {"per_class", per_class},
          {"dim", dim},
          {"spread", spread},
          {"plant", plant ? nlohmann::json(std::string(to_string(*plant))) : nlohmann::json()}}},
    };
}

std::string AuditConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

void AuditConfig::validate() const {
    require(!output_dir.empty() || command == "serve", "--out is required");
    if (alpha) require(*alpha > 0.0 && *alpha < 1.0, "--alpha must lie in (0, 1)");
    if (command == "corrupt") {
        require(!dataset_dir.empty(), "--dataset-dir is required");
        require(!manifest.empty(), "--manifest is required");
        require(issues.size() == 1, "corrupt takes exactly one --issue");
        require(alpha.has_value(), "--alpha is required");
        require(fs::is_directory(dataset_dir), "dataset directory " + dataset_dir.string() + " does not exist");
        if (external_pool) require(fs::is_directory(*external_pool), "external pool " + external_pool->string() + " does not exist");
    } else if (command == "rank") {
        require(!manifest.empty(), "--manifest is required");
        require(!embeddings.empty() && !embeddings_manifest.empty(), "--embeddings and --embeddings-manifest are required");
        require(!issues.empty(), "--issues must name at least one issue");
        require(k >= 1, "--k must be positive");
    } else if (command == "gen-embeddings-synthetic") {
        require(classes >= 1 && per_class >= 1 && classes * per_class >= 2, "need classes * per-class >= 2");
        require(dim >= classes, "--dim must be >= --classes");
        require(spread >= 0.0, "--spread must be >= 0");
        if (plant) require(alpha.has_value(), "--plant requires --alpha");
    } else if (command == "evaluate") {
        require(fs::is_directory(output_dir), "audit directory " + output_dir.string() + " does not exist");
    }
}

nlohmann::json provenance(const AuditConfig& config) {
    return {{"config", config.to_json()}, {"config_hash", config.hash()}, {"seed", config.seed}, {"version", kVersion}};
}

std::string alpha_label(std::optional<double> alpha) {
    if (!alpha) return "natural";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", *alpha);
    return buf;
}

fs::path run_dir(const fs::path& out, IssueType issue, std::optional<double> alpha, std::uint64_t seed) {
    return out / std::string(to_string(issue)) / alpha_label(alpha) / std::to_string(seed);
}

// ---- corrupt ---------------------------------------------------------------

InjectionResult run_corrupt(const AuditConfig& config) {
    config.validate();
    const auto manifest = load_dataset_manifest(config.manifest);
    InjectOptions opt;
    opt.dataset_dir = config.dataset_dir;
    opt.output_dir = config.output_dir;
    opt.issue = config.issues.front();
    opt.alpha = *config.alpha;
    opt.seed = config.seed;
    opt.external_pool_dir = config.external_pool;
    opt.provenance = provenance(config);
    return inject(manifest, opt);
}

// ---- rank ------------------------------------------------------------------

std::vector<fs::path> run_rank(const AuditConfig& config) {
    config.validate();
    const auto manifest = load_dataset_manifest(config.manifest);
    const auto segs = load_segment_embeddings(config.embeddings_manifest, config.embeddings, &manifest);
    const auto emb = aggregate_mean_pool(segs);

    std::optional<double> alpha = config.alpha;
    std::uint64_t seed = config.seed;
    std::optional<CorruptionLedger> ledger;
    if (config.ledger) {
        ledger = load_ledger(*config.ledger);
        if (config.alpha && std::abs(*config.alpha - ledger->alpha) > 1e-12) {
            fail(ErrorKind::Parameter, "--alpha disagrees with the ledger's alpha");
        }
        alpha = ledger->alpha;
        seed = ledger->seed;
        const auto idx = manifest.index();
        for (const auto& id : ledger->positives()) {
            if (!idx.contains(id)) fail(ErrorKind::Consistency, "ledger sample '" + id + "' not in dataset manifest");
        }
    }

    const auto index = manifest.index();
    std::vector<int> labels;
    labels.reserve(emb.size());
    for (const auto& id : emb.sample_ids()) labels.push_back(manifest.samples[index.at(id)].label);

    const auto dist = pairwise_distances(emb);
    const auto prov = provenance(config);
    std::vector<fs::path> dirs;
    for (IssueType issue : config.issues) {
        const auto dir = run_dir(config.output_dir, issue, alpha, seed);
        fs::create_directories(dir);
        nlohmann::json meta = {{"provenance", prov}, {"issue_type", std::string(to_string(issue))},
                               {"n_samples", emb.size()}, {"distance", "cosine"}};
        switch (issue) {
            case IssueType::OffTopic: {
                if (emb.size() < 2 || config.k > static_cast<int>(emb.size()) - 1) {
                    fail(ErrorKind::Parameter, "--k must be at most N - 1 = " + std::to_string(emb.size() - 1));
                }
                save_ranking(rank_off_topic(emb, dist, config.k), dir / "ranking.jsonl", dir / "ranking.csv");
                meta["k"] = config.k;
                break;
            }
            case IssueType::NearDuplicate: {
                const auto nd = rank_near_duplicates(emb, dist, config.max_pairs);
                save_ranking(nd.samples, dir / "ranking.jsonl", dir / "ranking.csv");
                save_ranking(nd.pairs, dir / "pairs.jsonl", dir / "pairs.csv");
                meta["max_pairs"] = nd.pairs.size();
                break;
            }
            case IssueType::LabelError: {
                const auto le = rank_label_errors(emb, dist, labels);
                save_ranking(le, dir / "ranking.jsonl", dir / "ranking.csv");
                meta["flagged_singleton_class"] = le.flagged;
                break;
            }
        }
        fs::remove(dir / "report.json");
        fs::remove(dir / "foe.csv");
        if (ledger && ledger->issue == issue) {
            save_ledger(*ledger, dir / "ledger.json", prov);
        } else {
            fs::remove(dir / "ledger.json");
        }
        write_text(dir / "provenance.json", meta.dump(2) + "\n");
        dirs.push_back(dir);
    }
    return dirs;
}

// ---- evaluate --------------------------------------------------------------

namespace {

struct Stats {
    double mean = 0.0;
    double std = 0.0;
};

Stats stats(const std::vector<double>& xs) {
    Stats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double sq = 0.0;
        for (double x : xs) sq += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::string fmt3(const Stats& s, bool with_std) {
    char buf[48];
    if (with_std) {
        std::snprintf(buf, sizeof buf, "%.3f ± %.3f", s.mean, s.std);
    } else {
        std::snprintf(buf, sizeof buf, "%.3f", s.mean);
    }
    return buf;
}

}  // namespace

EvaluationSummary run_evaluate(const AuditConfig& config) {
    config.validate();
    const auto root = config.output_dir;
    const auto recalls = default_recall_grid();
    EvaluationSummary summary;

    std::vector<fs::path> candidates;
    for (IssueType issue : {IssueType::OffTopic, IssueType::NearDuplicate, IssueType::LabelError}) {
        const auto issue_dir = root / std::string(to_string(issue));
        if (!fs::is_directory(issue_dir)) continue;
        for (const auto& alpha_dir : fs::directory_iterator(issue_dir)) {
            if (!alpha_dir.is_directory()) continue;
            for (const auto& seed_dir : fs::directory_iterator(alpha_dir.path())) {
                if (seed_dir.is_directory() && fs::exists(seed_dir.path() / "ranking.jsonl")) candidates.push_back(seed_dir.path());
            }
        }
    }
    std::sort(candidates.begin(), candidates.end());

    const auto prov = provenance(config);
    for (const auto& dir : candidates) {
        if (!fs::exists(dir / "ledger.json")) continue;
        const auto ledger = load_ledger(dir / "ledger.json");
        const auto ranking = load_ranking(dir / "ranking.jsonl", ledger.issue);
        auto report = evaluate_ranking(ranking, ledger.positives(), ledger.alpha, recalls);
        auto j = to_json(report);
        j["seed"] = ledger.seed;
        j["model"] = config.model;
        j["provenance"] = prov;
        write_text(dir / "report.json", j.dump(2) + "\n");
        write_text(dir / "foe.csv", foe_csv(report.foe_curve));
        summary.runs.push_back({dir, dir.parent_path().filename().string(), ledger.seed, std::move(report)});
    }
    if (summary.runs.empty()) {
        fail(ErrorKind::NotFound,
             "no run under " + root.string() +
                 " has a corruption ledger. Natural-data audits have no ground truth to score against; "
                 "review the rankings with `serve --audit-dir " + root.string() + "` instead.");
    }

    // issue -> alpha -> per-seed metrics
    struct Acc {
        std::vector<double> auroc, ap, savings, speedup;
        std::vector<std::uint64_t> seeds;
    };
    std::map<std::string, std::map<double, Acc>> groups;
    for (const auto& run : summary.runs) {
        auto& acc = groups[std::string(to_string(run.report.issue))][run.report.alpha];
        acc.auroc.push_back(run.report.auroc);
        acc.ap.push_back(run.report.ap);
        acc.savings.push_back(run.report.mean_savings);
        acc.speedup.push_back(run.report.speedup);
        acc.seeds.push_back(run.seed);
    }

    std::vector<double> all_alphas;
    for (const auto& [issue, by_alpha] : groups) {
        for (const auto& [alpha, acc] : by_alpha) all_alphas.push_back(alpha);
    }
    std::sort(all_alphas.begin(), all_alphas.end());
    all_alphas.erase(std::unique(all_alphas.begin(), all_alphas.end()), all_alphas.end());

    std::string md = "| Issue | Model |";
    std::string rule = "|---|---|";
    for (double a : all_alphas) {
        md += " α=" + alpha_label(a) + " AUROC | α=" + alpha_label(a) + " AP |";
        rule += "---|---|";
    }
    md += "\n" + rule + "\n";

    nlohmann::json agg = nlohmann::json::array();
    for (const char* issue : {"OT", "ND", "LE"}) {
        const auto it = groups.find(issue);
        if (it == groups.end()) continue;
        md += std::string("| ") + issue + " | " + config.model + " |";
        for (double a : all_alphas) {
            const auto cell = it->second.find(a);
            if (cell == it->second.end()) {
                md += " - | - |";
                continue;
            }
            const auto& acc = cell->second;
            const bool many = acc.seeds.size() > 1;
            const auto au = stats(acc.auroc);
            const auto ap = stats(acc.ap);
            const auto sv = stats(acc.savings);
            const auto sp = stats(acc.speedup);
            md += " " + fmt3(au, many) + " | " + fmt3(ap, many) + " |";
            agg.push_back({{"issue_type", issue},
                           {"alpha", a},
                           {"model", config.model},
                           {"seeds", acc.seeds},
                           {"auroc", {{"mean", au.mean}, {"std", au.std}}},
                           {"ap", {{"mean", ap.mean}, {"std", ap.std}}},
                           {"mean_savings", {{"mean", sv.mean}, {"std", sv.std}}},
                           {"speedup", {{"mean", sp.mean}, {"std", sp.std}}}});
        }
        md += "\n";
    }
    md += "\nRecall grid: 0.05..1.00 step 0.05. FoE baseline: k(N+1)/(P+1). Std over seeds where more than one.\n";

    summary.markdown = md;
    summary.aggregate = {{"rows", agg}, {"provenance", prov}};
    write_text(root / "summary.md", md);
    write_text(root / "summary.json", summary.aggregate.dump(2) + "\n");
    return summary;
}

// ---- synthetic -------------------------------------------------------------

void run_gen_synthetic(const AuditConfig& config) {
    config.validate();
    auto clean = gen_synthetic_embeddings(config.classes, config.per_class, config.dim, config.spread, config.seed);
    fs::create_directories(config.output_dir);
    const auto prov = provenance(config);
    if (config.plant) {
        auto planted = plant_corruption(clean, *config.plant, *config.alpha, config.seed);
        save_dataset_manifest(planted.manifest, config.output_dir / "manifest.json", prov);
        write_segment_embeddings(as_single_segments(planted.embeddings), config.output_dir / "embeddings.json",
                                 config.output_dir / "embeddings.aemb", prov);
        save_ledger(planted.ledger, config.output_dir / "ledger.json", prov);
    } else {
        const auto manifest = synthetic_manifest(clean.embeddings.sample_ids(), clean.labels, config.classes);
        save_dataset_manifest(manifest, config.output_dir / "manifest.json", prov);
        write_segment_embeddings(as_single_segments(clean.embeddings), config.output_dir / "embeddings.json",
                                 config.output_dir / "embeddings.aemb", prov);
    }
}

}  // namespace audio_audit
