// audio-audit: corrupt -> (external embed) -> rank -> evaluate -> serve

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "audio_audit/errors.hpp"
#include "audio_audit/pipeline.hpp"
#include "audio_audit/review_service.hpp"
#include "audio_audit/version.hpp"

namespace aa = audio_audit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

aa::ReviewService* g_service = nullptr;

void on_signal(int) {
    if (g_service != nullptr) g_service->stop();
}

std::vector<aa::IssueType> parse_issue_list(const std::vector<std::string>& tags) {
    std::vector<aa::IssueType> out;
    for (const auto& tag : tags) {
        std::stringstream ss(tag);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.push_back(aa::parse_issue(part));
        }
    }
    return out;
}

std::pair<std::string, int> split_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) aa::fail(aa::ErrorKind::Parameter, "--bind must be host:port");
    try {
        return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
    } catch (const std::exception&) {
        aa::fail(aa::ErrorKind::Parameter, "--bind port is not a number");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audit audio datasets for off-topic samples, near duplicates and label errors"};
    app.set_version_flag("--version", aa::kVersion);
    app.require_subcommand(1);

    aa::AuditConfig cfg;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::vector<std::string> issue_tags;
    std::string plant;
    std::string external_pool;
    std::string ledger;
    std::string ui_dir;
    std::string audit_dir;

    const auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "RNG seed (falls back to $AUDIO_AUDIT_SEED, then 0)");
    };
    const auto add_out = [&](CLI::App* sub, bool required) {
        auto* o = sub->add_option("--out", cfg.output_dir, "output directory");
        if (required) o->required();
    };

    auto* corrupt = app.add_subcommand("corrupt", "write a synthetically corrupted copy of a WAV dataset plus its ledger");
    corrupt->add_option("--dataset-dir", cfg.dataset_dir, "dataset root")->required();
    corrupt->add_option("--manifest", cfg.manifest, "dataset manifest (default <dataset-dir>/manifest.json)");
    corrupt->add_option("--issue", issue_tags, "OT, ND or LE")->required();
    corrupt->add_option("--alpha", alpha, "contamination rate in (0, 1)")->required();
    corrupt->add_option("--external-pool", external_pool, "directory of unrelated WAVs for OT");
    add_seed(corrupt);
    add_out(corrupt, true);

    auto* rank = app.add_subcommand("rank", "rank samples per issue from AEMB embeddings");
    rank->add_option("--manifest", cfg.manifest, "dataset manifest")->required();
    rank->add_option("--embeddings", cfg.embeddings, "AEMB binary")->required();
    rank->add_option("--embeddings-manifest", cfg.embeddings_manifest, "AEMB JSON sidecar")->required();
    rank->add_option("--issues", issue_tags, "comma-separated subset of OT,ND,LE (default all)");
    rank->add_option("--k", cfg.k, "neighbours for the off-topic score");
    rank->add_option("--max-pairs", cfg.max_pairs, "near-duplicate pairs to keep (default N)");
    rank->add_option("--alpha", alpha, "contamination rate for the output layout");
    rank->add_option("--ledger", ledger, "corruption ledger; supplies alpha and seed");
    add_seed(rank);
    add_out(rank, true);

    auto* evaluate = app.add_subcommand("evaluate", "score rankings against corruption ledgers");
    evaluate->add_option("--audit-dir,--out", cfg.output_dir, "rank output directory")->required();
    evaluate->add_option("--model", cfg.model, "representation name for the summary table");

    auto* serve = app.add_subcommand("serve", "HTTP triage service over a rank output directory");
    serve->add_option("--audit-dir", audit_dir, "rank output directory")->required();
    serve->add_option("--dataset-dir", cfg.dataset_dir, "dataset root for audio playback");
    serve->add_option("--manifest", cfg.manifest, "dataset manifest (default <dataset-dir>/manifest.json)");
    serve->add_option("--bind", cfg.bind, "host:port");
    serve->add_option("--ui-dir", ui_dir, "static UI assets served under /ui");

    auto* gen = app.add_subcommand("gen-embeddings-synthetic", "write clustered synthetic embeddings as AEMB");
    gen->add_option("--classes", cfg.classes);
    gen->add_option("--per-class", cfg.per_class);
    gen->add_option("--dim", cfg.dim);
    gen->add_option("--spread", cfg.spread, "per-coordinate Gaussian spread");
    gen->add_option("--plant", plant, "plant OT, ND or LE corruption (requires --alpha)");
    gen->add_option("--alpha", alpha);
    add_seed(gen);
    add_out(gen, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        auto* sub = app.get_subcommands().front();
        cfg.command = sub->get_name();
        if (seed) {
            cfg.seed = *seed;
        } else if (const char* env = std::getenv("AUDIO_AUDIT_SEED")) {
            try {
                cfg.seed = std::stoull(env);
            } catch (const std::exception&) {
                aa::fail(aa::ErrorKind::Parameter, "AUDIO_AUDIT_SEED is not an unsigned integer");
            }
        }
        cfg.alpha = alpha;
        if (!issue_tags.empty()) cfg.issues = parse_issue_list(issue_tags);
        if (!external_pool.empty()) cfg.external_pool = external_pool;
        if (!ledger.empty()) cfg.ledger = ledger;
        if (!plant.empty()) cfg.plant = aa::parse_issue(plant);
        if (cfg.manifest.empty() && !cfg.dataset_dir.empty()) cfg.manifest = cfg.dataset_dir / "manifest.json";

        if (cfg.command == "corrupt") {
            const auto res = aa::run_corrupt(cfg);
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << "corrupted " << res.ledger.entries.size() << " of " << res.ledger.n_original << " samples ("
                      << aa::to_string(res.ledger.issue) << ", alpha " << res.ledger.alpha << ") -> "
                      << cfg.output_dir.string() << '\n';
        } else if (cfg.command == "rank") {
            for (const auto& dir : aa::run_rank(cfg)) std::cout << "wrote " << dir.string() << '\n';
        } else if (cfg.command == "evaluate") {
            const auto summary = aa::run_evaluate(cfg);
            std::cout << summary.markdown;
        } else if (cfg.command == "gen-embeddings-synthetic") {
            aa::run_gen_synthetic(cfg);
            std::cout << "wrote " << cfg.output_dir.string() << '\n';
        } else if (cfg.command == "serve") {
            cfg.output_dir = audit_dir;
            aa::ServiceOptions opt;
            opt.audit_dir = audit_dir;
            opt.dataset_dir = cfg.dataset_dir;
            if (!cfg.manifest.empty()) opt.manifest = cfg.manifest;
            if (!ui_dir.empty()) opt.ui_dir = ui_dir;
            const auto [host, port] = split_bind(cfg.bind);
            aa::ReviewService service(opt);
            const int bound = service.bind(host, port);
            if (bound < 0) aa::fail(aa::ErrorKind::Io, "cannot bind " + cfg.bind);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on http://" << host << ':' << bound << std::endl;
            service.run();
            g_service = nullptr;
        }
    } catch (const aa::AuditError& e) {
        std::cerr << "error: " << aa::to_string(e.kind()) << ": " << e.what() << '\n';
        return e.kind() == aa::ErrorKind::Parameter ? kExitConfig : kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}
