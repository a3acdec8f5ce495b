#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "audio_audit/embedding_store.hpp"
#include "audio_audit/pipeline.hpp"
#include "audio_audit/rng.hpp"
#include "audio_audit/wav.hpp"

namespace audio_audit::testing {

inline Waveform sine(double freq, double amplitude, std::size_t n, int rate = kTargetSampleRate) {
    Waveform w{rate, std::vector<float>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        w.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate));
    }
    return w;
}

/// n_classes * per_class tonal clips (length samples at 16 kHz, peak in
/// [amplitude, 1.5 amplitude]) under root/audio,
/// plus root/manifest.json.
inline DatasetManifest make_wav_dataset(const std::filesystem::path& root, int n_classes, int per_class,
                                        std::size_t length = 4000, double amplitude = 0.2) {
    DatasetManifest m;
    m.name = "fixture";
    char buf[64];
    for (int c = 0; c < n_classes; ++c) {
        std::snprintf(buf, sizeof buf, "tone_%d", c);
        m.classes.emplace_back(buf);
    }
    std::filesystem::create_directories(root / "audio");
    Rng rng(42);
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            std::snprintf(buf, sizeof buf, "c%d_%03d", c, i);
            const std::string id = buf;
            auto w = sine(220.0 * (c + 1) + 3.0 * i, amplitude * (1.0 + 0.5 * rng.uniform()), length);
            write_wav_pcm16(w, root / "audio" / (id + ".wav"));
            m.samples.push_back({id, "audio/" + id + ".wav", c, w.duration_s()});
        }
    }
    save_dataset_manifest(m, root / "manifest.json");
    return m;
}

struct ReviewFixture {
    std::filesystem::path dataset_dir;
    std::filesystem::path audit_dir;
    DatasetManifest manifest;
};

/// WAV dataset under root/data and rankings for audit "0.05_1" under
/// root/audit. Samples c0_000 and c0_001 share an embedding and form the
/// top ND pair.
inline ReviewFixture make_review_fixture(const std::filesystem::path& root, int n_classes = 3, int per_class = 4) {
    ReviewFixture f{root / "data", root / "audit", make_wav_dataset(root / "data", n_classes, per_class, 800)};
    const auto syn = gen_synthetic_embeddings(n_classes, per_class, 8, 0.1, 5);
    std::vector<std::string> ids;
    for (const auto& s : f.manifest.samples) ids.push_back(s.id);
    auto data = syn.embeddings.data();
    std::copy_n(data.begin(), 8, data.begin() + 8);
    std::filesystem::create_directories(root / "emb");
    write_segment_embeddings(as_single_segments(EmbeddingSet(ids, 8, data)), root / "emb" / "embeddings.json",
                             root / "emb" / "embeddings.aemb");
    AuditConfig cfg;
    cfg.command = "rank";
    cfg.manifest = root / "data" / "manifest.json";
    cfg.embeddings = root / "emb" / "embeddings.aemb";
    cfg.embeddings_manifest = root / "emb" / "embeddings.json";
    cfg.k = 2;
    cfg.alpha = 0.05;
    cfg.seed = 1;
    cfg.output_dir = f.audit_dir;
    run_rank(cfg);
    return f;
}

}  // namespace audio_audit::testing
