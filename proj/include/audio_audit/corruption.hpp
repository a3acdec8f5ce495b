#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audio_audit/embedding_store.hpp"
#include "audio_audit/indicators.hpp"
#include "audio_audit/metrics.hpp"
#include "audio_audit/rng.hpp"
#include "audio_audit/wav.hpp"

namespace audio_audit {

struct LedgerEntry {
    std::string sample_id;  // ND: id of the added duplicate
    std::string family;     // e.g. "ND.crop", "OT.external", "LE.flip"
    nlohmann::json parameters;
};

/// Ground truth for one corruption run.
struct CorruptionLedger {
    IssueType issue = IssueType::OffTopic;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::string generator_version;
    std::size_t n_original = 0;
    std::vector<LedgerEntry> entries;

    /// Samples that carry the issue. For ND both the duplicate and its
    /// source are positives.
    IdSet positives() const;
};

nlohmann::json to_json(const CorruptionLedger& ledger);
CorruptionLedger ledger_from_json(const nlohmann::json& j);
void save_ledger(const CorruptionLedger& ledger, const fs::path& path, const nlohmann::json& provenance = nullptr);
CorruptionLedger load_ledger(const fs::path& path);

/// round(alpha * N) ids drawn without replacement, returned in input order.
/// Throws AuditError(Parameter) when alpha is outside (0, 1) or the count
/// rounds to zero.
std::vector<std::string> select_targets(std::span<const std::string> ids, double alpha, std::uint64_t seed);
std::vector<std::string> select_targets(const DatasetManifest& manifest, double alpha, std::uint64_t seed);

/// Result of one audio transform.
struct Corruption {
    Waveform audio;
    std::string family;
    nlohmann::json parameters;
};

/// Absolute RMS used when the source is effectively silent (RMS < 1e-6),
/// where an SNR is undefined.
inline constexpr double kSilentNoiseRms = 0.05;

/// Noise RMS giving `snr_db` against a signal of `signal_rms`.
double noise_rms_for_snr(double signal_rms, double snr_db);

/// White Gaussian noise rescaled to exactly `rms`.
std::vector<float> white_noise(std::size_t n, double rms, Rng& rng);

/// src + white noise at `snr_db`, clipped to [-1, 1]. Records snr_db and
/// noise_rms into `params`.
Waveform add_noise_at_snr(const Waveform& src, double snr_db, Rng& rng, nlohmann::json& params);

/// Contiguous crop of round(fraction * len) samples starting at `start`.
Waveform crop(const Waveform& src, double fraction, std::size_t start);

/// Uniformly one of additive noise (SNR U[10, 20] dB), contiguous crop
/// (fraction U[0.5, 0.9]) or crop followed by noise (SNR U[5, 15] dB).
Corruption make_near_duplicate(const Waveform& src, Rng& rng);

struct PoolClip {
    std::string name;
    Waveform audio;
};

/// Uniformly one of RMS-matched white noise, a length-matched external
/// clip, or heavy noise (SNR U[-10, 0] dB). An empty pool falls back to
/// noise and records "fallback" in the parameters.
Corruption make_off_topic(const Waveform& src, std::span<const PoolClip> pool, Rng& rng);

/// Uniform over the other num_classes - 1 classes.
int flip_label(int label, int num_classes, Rng& rng);

/// Loads every *.wav under `dir` in filename order.
std::vector<PoolClip> load_pool(const fs::path& dir);

struct InjectOptions {
    fs::path dataset_dir;
    fs::path output_dir;
    IssueType issue = IssueType::LabelError;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::optional<fs::path> external_pool_dir;
    nlohmann::json provenance;  // embedded into manifest and ledger when set
};

struct InjectionResult {
    DatasetManifest manifest;
    CorruptionLedger ledger;
    std::vector<std::string> warnings;
};

/// Writes a corrupted copy of the dataset to options.output_dir (which must
/// not exist or be empty, and must lie outside the dataset root):
/// manifest.json, ledger.json and the audio tree. ND appends duplicates as
/// new samples, OT replaces audio in place keeping labels, LE rewrites
/// labels only. Per-file randomness is keyed on (seed, sample id).
InjectionResult inject(const DatasetManifest& manifest, const InjectOptions& options);

/// Embedding-space analogue of inject() used without an encoder.
struct PlantedEmbeddings {
    EmbeddingSet embeddings;
    std::vector<int> labels;
    DatasetManifest manifest;
    CorruptionLedger ledger;
};

/// ND: duplicates = normalize(source + isotropic perturbation with norm
/// U[0, nd_max_norm]); OT: replacement unit vectors orthogonal to every
/// centroid; LE: uniform label flips.
PlantedEmbeddings plant_corruption(const SyntheticEmbeddings& clean, IssueType issue, double alpha,
                                   std::uint64_t seed, double nd_max_norm = 0.1);

/// Manifest naming classes "class_00".. and paths "audio/<id>.wav".
DatasetManifest synthetic_manifest(const std::vector<std::string>& ids, std::span<const int> labels,
                                   int num_classes, const std::string& name = "synthetic");

}  // namespace audio_audit
