#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace audio_audit {

namespace fs = std::filesystem;

struct SampleRecord {
    std::string id;
    std::string path;  // relative to the dataset root
    int label = 0;
    double duration_s = 0.0;
};

/// The dataset under audit.
struct DatasetManifest {
    std::string name;
    std::vector<std::string> classes;
    std::vector<SampleRecord> samples;

    std::size_t num_classes() const { return classes.size(); }
    std::size_t size() const { return samples.size(); }

    /// Throws AuditError(Data) on out-of-range labels, duplicate ids or paths.
    void validate() const;

    /// Position of each id in `samples`.
    std::unordered_map<std::string, std::size_t> index() const;
};

DatasetManifest dataset_manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest load_dataset_manifest(const fs::path& path);
/// Writes the manifest; a non-null provenance object is embedded under
/// "provenance".
void save_dataset_manifest(const DatasetManifest& manifest, const fs::path& path,
                           const nlohmann::json& provenance = nullptr);

/// File-level, L2-normalized embeddings. Immutable after construction.
class EmbeddingSet {
public:
    /// Validates unit norms (1e-4), unique ids, finite entries.
    EmbeddingSet(std::vector<std::string> sample_ids, std::size_t dim,
                 std::vector<float> vectors);

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& sample_ids() const { return ids_; }
    const std::vector<float>& data() const { return vectors_; }

    std::span<const float> row(std::size_t i) const {
        return {vectors_.data() + i * dim_, dim_};
    }

private:
    std::vector<std::string> ids_;
    std::size_t dim_;
    std::vector<float> vectors_;
};

/// Raw per-segment encoder output, segments of sample 0 first.
class SegmentEmbeddings {
public:
    SegmentEmbeddings(std::vector<std::string> sample_ids, std::size_t dim,
                      std::vector<std::uint32_t> segment_counts,
                      std::vector<float> rows);

    std::size_t num_samples() const { return ids_.size(); }
    std::size_t num_rows() const { return rows_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& sample_ids() const { return ids_; }
    const std::vector<std::uint32_t>& segment_counts() const { return counts_; }
    const std::vector<float>& data() const { return rows_; }

    /// All segment rows of sample i, contiguous.
    std::span<const float> segments(std::size_t i) const {
        return {rows_.data() + offsets_[i] * dim_, counts_[i] * dim_};
    }

private:
    std::vector<std::string> ids_;
    std::size_t dim_;
    std::vector<std::uint32_t> counts_;
    std::vector<std::size_t> offsets_;
    std::vector<float> rows_;
};

inline constexpr char kAembMagic[4] = {'A', 'E', 'M', 'B'};
inline constexpr std::uint32_t kAembVersion = 1;
inline constexpr std::size_t kAembHeaderBytes = 24;

/// Reads an AEMB binary plus its JSON sidecar. When `dataset` is given the
/// id sets must match exactly (order may differ).
SegmentEmbeddings load_segment_embeddings(const fs::path& manifest_path,
                                          const fs::path& binary_path,
                                          const DatasetManifest* dataset = nullptr);

/// Parses an in-memory AEMB binary against already-parsed sidecar JSON.
SegmentEmbeddings parse_segment_embeddings(const nlohmann::json& manifest,
                                           std::span<const std::uint8_t> binary);

std::vector<std::uint8_t> encode_aemb(const SegmentEmbeddings& segs);
nlohmann::json aemb_manifest_json(const SegmentEmbeddings& segs);
void write_segment_embeddings(const SegmentEmbeddings& segs, const fs::path& manifest_path,
                              const fs::path& binary_path,
                              const nlohmann::json& provenance = nullptr);

/// Mean of each sample's segment rows, then L2 normalization.
/// A zero pooled vector is an AuditError(Degenerate) naming the sample.
EmbeddingSet aggregate_mean_pool(const SegmentEmbeddings& segs);

/// One segment per sample; convenience for file-level vectors.
SegmentEmbeddings as_single_segments(const EmbeddingSet& emb);

struct SyntheticEmbeddings {
    EmbeddingSet embeddings;
    std::vector<int> labels;
    /// num_classes x dim, orthonormal rows.
    std::vector<std::vector<double>> centroids;
};

/// Seeded class-clustered unit vectors: orthonormal centroids from a QR of a
/// Gaussian matrix, samples = normalize(centroid + N(0, spread^2 I)).
/// Ids are "s00000", "s00001", ... in class-major order.
SyntheticEmbeddings gen_synthetic_embeddings(int num_classes, int per_class, int dim,
                                             double intra_spread, std::uint64_t seed);

}  // namespace audio_audit
