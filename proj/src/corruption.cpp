#include "audio_audit/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "audio_audit/errors.hpp"
#include "audio_audit/version.hpp"

namespace audio_audit {

// ---- ledger ----------------------------------------------------------------

IdSet CorruptionLedger::positives() const {
    IdSet out;
    for (const auto& e : entries) {
        out.insert(e.sample_id);
        if (issue == IssueType::NearDuplicate) out.insert(e.parameters.at("source_id").get<std::string>());
    }
    return out;
}

nlohmann::json to_json(const CorruptionLedger& ledger) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : ledger.entries) {
        entries.push_back({{"sample_id", e.sample_id}, {"family", e.family}, {"parameters", e.parameters}});
    }
    return {{"issue_type", std::string(to_string(ledger.issue))},
            {"alpha", ledger.alpha},
            {"seed", ledger.seed},
            {"generator_version", ledger.generator_version},
            {"n_original", ledger.n_original},
            {"entries", std::move(entries)}};
}

CorruptionLedger ledger_from_json(const nlohmann::json& j) {
    CorruptionLedger ledger;
    try {
        ledger.issue = parse_issue(j.at("issue_type").get<std::string>());
        ledger.alpha = j.at("alpha").get<double>();
        ledger.seed = j.at("seed").get<std::uint64_t>();
        ledger.generator_version = j.value("generator_version", "");
        ledger.n_original = j.value("n_original", std::size_t{0});
        for (const auto& e : j.at("entries")) {
            ledger.entries.push_back(
                {e.at("sample_id").get<std::string>(), e.at("family").get<std::string>(), e.value("parameters", nlohmann::json::object())});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("ledger: ") + e.what());
    }
    return ledger;
}

void save_ledger(const CorruptionLedger& ledger, const fs::path& path, const nlohmann::json& provenance) {
    auto j = to_json(ledger);
    if (!provenance.is_null()) j["provenance"] = provenance;
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

CorruptionLedger load_ledger(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    try {
        return ledger_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

// ---- selection -------------------------------------------------------------

std::vector<std::string> select_targets(std::span<const std::string> ids, double alpha, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::Parameter, "alpha must lie in (0, 1)");
    const auto count = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(ids.size())));
    if (count == 0) {
        fail(ErrorKind::Parameter, "alpha = " + std::to_string(alpha) + " selects no samples out of " + std::to_string(ids.size()));
    }
    std::vector<std::size_t> idx(ids.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_stream(seed, "select-targets"));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    out.reserve(count);
    for (auto i : idx) out.push_back(ids[i]);
    return out;
}

std::vector<std::string> select_targets(const DatasetManifest& manifest, double alpha, std::uint64_t seed) {
    std::vector<std::string> ids;
    ids.reserve(manifest.size());
    for (const auto& s : manifest.samples) ids.push_back(s.id);
    return select_targets(ids, alpha, seed);
}

// ---- audio transforms ------------------------------------------------------

double noise_rms_for_snr(double signal_rms, double snr_db) {
    if (signal_rms < 1e-6) return kSilentNoiseRms;
    return signal_rms / std::pow(10.0, snr_db / 20.0);
}

std::vector<float> white_noise(std::size_t n, double rms, Rng& rng) {
    std::vector<double> g(n);
    double sq = 0.0;
    for (auto& v : g) {
        v = rng.normal();
        sq += v * v;
    }
    std::vector<float> out(n);
    if (n == 0) return out;
    const double scale = sq > 0.0 ? rms / std::sqrt(sq / static_cast<double>(n)) : 0.0;
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(g[i] * scale);
    return out;
}

namespace {

void clip(Waveform& w) {
    for (auto& v : w.samples) v = std::clamp(v, -1.0f, 1.0f);
}

}  // namespace

Waveform add_noise_at_snr(const Waveform& src, double snr_db, Rng& rng, nlohmann::json& params) {
    const double signal_rms = src.rms();
    const double noise_rms = noise_rms_for_snr(signal_rms, snr_db);
    const auto noise = white_noise(src.size(), noise_rms, rng);
    Waveform out{src.sample_rate, std::vector<float>(src.size())};
    for (std::size_t i = 0; i < src.size(); ++i) out.samples[i] = src.samples[i] + noise[i];
    clip(out);
    params["snr_db"] = snr_db;
    params["noise_rms"] = noise_rms;
    if (signal_rms < 1e-6) params["silent_source"] = true;
    return out;
}

Waveform crop(const Waveform& src, double fraction, std::size_t start) {
    const auto len = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(src.size())));
    if (start + len > src.size()) fail(ErrorKind::Parameter, "crop window exceeds source length");
    return {src.sample_rate, std::vector<float>(src.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                                src.samples.begin() + static_cast<std::ptrdiff_t>(start + len))};
}

namespace {

Corruption random_crop(const Waveform& src, Rng& rng, const char* family) {
    const double fraction = rng.uniform(0.5, 0.9);
    const auto len = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(src.size())));
    const auto start = static_cast<std::size_t>(rng.below(src.size() - len + 1));
    return {crop(src, fraction, start), family,
            {{"crop_fraction", fraction}, {"crop_start", start}, {"crop_length", len}}};
}

}  // namespace

Corruption make_near_duplicate(const Waveform& src, Rng& rng) {
    if (src.empty()) fail(ErrorKind::Parameter, "near-duplicate source is empty");
    switch (rng.below(3)) {
        case 0: {
            Corruption c{{}, "ND.additive", nlohmann::json::object()};
            c.audio = add_noise_at_snr(src, rng.uniform(10.0, 20.0), rng, c.parameters);
            return c;
        }
        case 1: return random_crop(src, rng, "ND.crop");
        default: {
            auto c = random_crop(src, rng, "ND.mixed");
            c.audio = add_noise_at_snr(c.audio, rng.uniform(5.0, 15.0), rng, c.parameters);
            return c;
        }
    }
}

namespace {

Corruption pure_noise(const Waveform& src, Rng& rng) {
    const double rms = src.rms() < 1e-6 ? kSilentNoiseRms : src.rms();
    Waveform out{src.sample_rate, white_noise(src.size(), rms, rng)};
    clip(out);
    return {std::move(out), "OT.pure_noise", {{"noise_rms", rms}}};
}

}  // namespace

Corruption make_off_topic(const Waveform& src, std::span<const PoolClip> pool, Rng& rng) {
    switch (rng.below(3)) {
        case 0: return pure_noise(src, rng);
        case 1: {
            if (pool.empty()) {
                auto c = pure_noise(src, rng);
                c.parameters["fallback"] = "empty external pool";
                return c;
            }
            const auto& clip_src = pool[rng.below(pool.size())];
            const auto& ext = clip_src.audio.samples;
            const std::size_t n = src.size();
            Waveform out{src.sample_rate, std::vector<float>(n)};
            nlohmann::json params{{"pool_clip", clip_src.name}};
            if (ext.empty()) {
                auto c = pure_noise(src, rng);
                c.parameters["fallback"] = "empty external clip " + clip_src.name;
                return c;
            }
            if (ext.size() >= n) {
                const auto start = static_cast<std::size_t>(rng.below(ext.size() - n + 1));
                std::copy_n(ext.begin() + static_cast<std::ptrdiff_t>(start), n, out.samples.begin());
                params["start"] = start;
                params["mode"] = "crop";
            } else {
                for (std::size_t i = 0; i < n; ++i) out.samples[i] = ext[i % ext.size()];
                params["mode"] = "tile";
            }
            clip(out);
            return {std::move(out), "OT.external", std::move(params)};
        }
        default: {
            Corruption c{{}, "OT.heavy_noise", nlohmann::json::object()};
            c.audio = add_noise_at_snr(src, rng.uniform(-10.0, 0.0), rng, c.parameters);
            return c;
        }
    }
}

int flip_label(int label, int num_classes, Rng& rng) {
    if (num_classes < 2) fail(ErrorKind::Parameter, "label flipping needs at least 2 classes");
    if (label < 0 || label >= num_classes) fail(ErrorKind::Parameter, "label outside [0, num_classes)");
    const auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_classes - 1)));
    return pick >= label ? pick + 1 : pick;
}

std::vector<PoolClip> load_pool(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorKind::Io, "external pool " + dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<PoolClip> pool;
    for (const auto& f : files) pool.push_back({fs::relative(f, dir).generic_string(), read_wav(f)});
    return pool;
}

// ---- dataset injection -----------------------------------------------------

namespace {

bool is_within(const fs::path& child, const fs::path& root) {
    const auto c = fs::weakly_canonical(child);
    const auto r = fs::weakly_canonical(root);
    auto ci = c.begin();
    for (auto ri = r.begin(); ri != r.end(); ++ri, ++ci) {
        if (ri->empty()) continue;  // trailing separator
        if (ci == c.end() || *ci != *ri) return false;
    }
    return true;
}

std::string stream_key(IssueType issue, const std::string& id) {
    return std::string(to_string(issue)) + ":" + id;
}

}  // namespace

InjectionResult inject(const DatasetManifest& manifest, const InjectOptions& opt) {
    manifest.validate();
    if (is_within(opt.output_dir, opt.dataset_dir)) {
        fail(ErrorKind::Parameter, "output directory must lie outside the dataset directory");
    }
    if (fs::exists(opt.output_dir) && !fs::is_empty(opt.output_dir)) {
        fail(ErrorKind::Parameter, "output directory " + opt.output_dir.string() + " is not empty");
    }
    if (opt.issue == IssueType::LabelError && manifest.num_classes() < 2) {
        fail(ErrorKind::Parameter, "label flipping needs at least 2 classes");
    }

    InjectionResult res;
    std::vector<PoolClip> pool;
    if (opt.issue == IssueType::OffTopic) {
        if (opt.external_pool_dir) {
            pool = load_pool(*opt.external_pool_dir);
            if (pool.empty()) res.warnings.push_back("external pool has no WAV files; external family falls back to pure noise");
        } else {
            res.warnings.push_back("no external pool given; external family falls back to pure noise");
        }
    }

    const auto targets = select_targets(manifest, opt.alpha, opt.seed);
    fs::create_directories(opt.output_dir);

    for (const auto& s : manifest.samples) {
        const auto src = opt.dataset_dir / s.path;
        const auto dst = opt.output_dir / s.path;
        fs::create_directories(dst.parent_path());
        std::error_code ec;
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
        if (ec) fail(ErrorKind::Ingestion, src.string() + ": " + ec.message());
    }

    res.manifest = manifest;
    res.ledger.issue = opt.issue;
    res.ledger.alpha = opt.alpha;
    res.ledger.seed = opt.seed;
    res.ledger.generator_version = kGeneratorVersion;
    res.ledger.n_original = manifest.size();

    const auto index = manifest.index();
    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> paths;
    for (const auto& s : manifest.samples) {
        ids.insert(s.id);
        paths.insert(s.path);
    }

    for (const auto& id : targets) {
        auto& rec = res.manifest.samples[index.at(id)];
        Rng rng(derive_stream(opt.seed, stream_key(opt.issue, id)));
        switch (opt.issue) {
            case IssueType::NearDuplicate: {
                const auto src = read_wav(opt.dataset_dir / rec.path);
                auto c = make_near_duplicate(src, rng);
                std::string dup_id = id + "__nd";
                for (int n = 2; ids.contains(dup_id); ++n) dup_id = id + "__nd" + std::to_string(n);
                const fs::path rel(rec.path);
                std::string dup_path = (rel.parent_path() / (rel.stem().string() + "__nd.wav")).generic_string();
                for (int n = 2; paths.contains(dup_path); ++n) {
                    dup_path = (rel.parent_path() / (rel.stem().string() + "__nd" + std::to_string(n) + ".wav")).generic_string();
                }
                ids.insert(dup_id);
                paths.insert(dup_path);
                write_wav_pcm16(c.audio, opt.output_dir / dup_path);
                c.parameters["source_id"] = id;
                const SampleRecord dup{dup_id, dup_path, rec.label, c.audio.duration_s()};
                res.manifest.samples.push_back(dup);
                res.ledger.entries.push_back({dup_id, c.family, std::move(c.parameters)});
                break;
            }
            case IssueType::OffTopic: {
                const auto src = read_wav(opt.dataset_dir / rec.path);
                auto c = make_off_topic(src, pool, rng);
                write_wav_pcm16(c.audio, opt.output_dir / rec.path);
                rec.duration_s = c.audio.duration_s();
                c.parameters["label"] = rec.label;
                res.ledger.entries.push_back({id, c.family, std::move(c.parameters)});
                break;
            }
            case IssueType::LabelError: {
                const int old_label = rec.label;
                rec.label = flip_label(old_label, static_cast<int>(manifest.num_classes()), rng);
                res.ledger.entries.push_back({id, "LE.flip", {{"old_label", old_label}, {"new_label", rec.label}}});
                break;
            }
        }
    }

    save_dataset_manifest(res.manifest, opt.output_dir / "manifest.json", opt.provenance);
    save_ledger(res.ledger, opt.output_dir / "ledger.json", opt.provenance);
    return res;
}

// ---- embedding-space planting ---------------------------------------------

DatasetManifest synthetic_manifest(const std::vector<std::string>& ids, std::span<const int> labels, int num_classes,
                                   const std::string& name) {
    DatasetManifest m;
    m.name = name;
    char buf[32];
    for (int c = 0; c < num_classes; ++c) {
        std::snprintf(buf, sizeof buf, "class_%02d", c);
        m.classes.emplace_back(buf);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) m.samples.push_back({ids[i], "audio/" + ids[i] + ".wav", labels[i], 0.0});
    return m;
}

PlantedEmbeddings plant_corruption(const SyntheticEmbeddings& clean, IssueType issue, double alpha, std::uint64_t seed,
                                   double nd_max_norm) {
    const auto& emb = clean.embeddings;
    const std::size_t dim = emb.dim();
    const auto& centroids = clean.centroids;
    const int num_classes = static_cast<int>(centroids.size());

    std::vector<std::string> ids = emb.sample_ids();
    std::vector<float> vectors = emb.data();
    std::vector<int> labels = clean.labels;
    const auto targets = select_targets(emb.sample_ids(), alpha, seed);

    CorruptionLedger ledger;
    ledger.issue = issue;
    ledger.alpha = alpha;
    ledger.seed = seed;
    ledger.generator_version = kGeneratorVersion;
    ledger.n_original = emb.size();

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);

    std::vector<double> v(dim);
    const auto gaussian_unit = [&](Rng& rng) {
        double sq = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            sq += x * x;
        }
        const double norm = std::sqrt(sq);
        for (auto& x : v) x /= norm;
    };
    const auto store_normalized = [&](std::vector<float>& out, std::size_t offset) {
        double sq = 0.0;
        for (double x : v) sq += x * x;
        const double norm = std::sqrt(sq);
        for (std::size_t c = 0; c < dim; ++c) out[offset + c] = static_cast<float>(v[c] / norm);
    };

    for (const auto& id : targets) {
        const std::size_t i = index.at(id);
        Rng rng(derive_stream(seed, stream_key(issue, id)));
        switch (issue) {
            case IssueType::NearDuplicate: {
                gaussian_unit(rng);
                const double norm = rng.uniform(0.0, nd_max_norm);
                for (std::size_t c = 0; c < dim; ++c) v[c] = vectors[i * dim + c] + norm * v[c];
                const std::size_t offset = vectors.size();
                vectors.resize(offset + dim);
                store_normalized(vectors, offset);
                const std::string dup_id = id + "__nd";
                ids.push_back(dup_id);
                labels.push_back(labels[i]);
                ledger.entries.push_back({dup_id, "ND.embedding_perturbation", {{"source_id", id}, {"perturbation_norm", norm}}});
                break;
            }
            case IssueType::OffTopic: {
                gaussian_unit(rng);
                for (const auto& cen : centroids) {
                    double proj = 0.0;
                    for (std::size_t c = 0; c < dim; ++c) proj += v[c] * cen[c];
                    for (std::size_t c = 0; c < dim; ++c) v[c] -= proj * cen[c];
                }
                store_normalized(vectors, i * dim);
                ledger.entries.push_back({id, "OT.orthogonal_vector", {{"label", labels[i]}}});
                break;
            }
            case IssueType::LabelError: {
                const int old_label = labels[i];
                labels[i] = flip_label(old_label, num_classes, rng);
                ledger.entries.push_back({id, "LE.flip", {{"old_label", old_label}, {"new_label", labels[i]}}});
                break;
            }
        }
    }

    auto manifest = synthetic_manifest(ids, labels, num_classes);
    return {EmbeddingSet(std::move(ids), dim, std::move(vectors)), std::move(labels), std::move(manifest), std::move(ledger)};
}

}  // namespace audio_audit
