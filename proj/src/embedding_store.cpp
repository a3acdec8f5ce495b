#include "audio_audit/embedding_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include <Eigen/Dense>

#include "audio_audit/errors.hpp"
#include "audio_audit/rng.hpp"

namespace audio_audit {

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

template <typename T>
T read_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<T>(p[b]) << (8 * b);
    return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void check_unique(const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) fail(ErrorKind::Data, std::string("duplicate ") + what + " '" + id + "'");
    }
}

}  // namespace

// ---- DatasetManifest -------------------------------------------------------

void DatasetManifest::validate() const {
    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> paths;
    for (const auto& s : samples) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes.size()) {
            fail(ErrorKind::Data, "sample '" + s.id + "' has label " + std::to_string(s.label) +
                                      " outside [0, " + std::to_string(classes.size()) + ")");
        }
        if (!ids.insert(s.id).second) fail(ErrorKind::Data, "duplicate sample id '" + s.id + "'");
        if (!paths.insert(s.path).second) fail(ErrorKind::Data, "duplicate sample path '" + s.path + "'");
    }
}

std::unordered_map<std::string, std::size_t> DatasetManifest::index() const {
    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) idx.emplace(samples[i].id, i);
    return idx;
}

DatasetManifest dataset_manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.classes = j.at("classes").get<std::vector<std::string>>();
        for (const auto& s : j.at("samples")) {
            m.samples.push_back({s.at("id").get<std::string>(), s.at("path").get<std::string>(),
                                 s.at("label").get<int>(), s.value("duration_s", 0.0)});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("dataset manifest: ") + e.what());
    }
    m.validate();
    return m;
}

nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : m.samples) {
        samples.push_back({{"id", s.id}, {"path", s.path}, {"label", s.label}, {"duration_s", s.duration_s}});
    }
    return {{"name", m.name}, {"classes", m.classes}, {"samples", std::move(samples)}};
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
    return dataset_manifest_from_json(read_json(path));
}

void save_dataset_manifest(const DatasetManifest& m, const fs::path& path,
                           const nlohmann::json& provenance) {
    auto j = to_json(m);
    if (!provenance.is_null()) j["provenance"] = provenance;
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// ---- EmbeddingSet / SegmentEmbeddings --------------------------------------

EmbeddingSet::EmbeddingSet(std::vector<std::string> sample_ids, std::size_t dim,
                           std::vector<float> vectors)
    : ids_(std::move(sample_ids)), dim_(dim), vectors_(std::move(vectors)) {
    if (dim_ == 0) fail(ErrorKind::Data, "embedding dim must be positive");
    if (vectors_.size() != ids_.size() * dim_) {
        fail(ErrorKind::Data, "embedding matrix has " + std::to_string(vectors_.size()) +
                                  " values, expected " + std::to_string(ids_.size() * dim_));
    }
    check_unique(ids_, "sample id");
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        double sq = 0.0;
        for (float v : row(i)) {
            if (!std::isfinite(v)) fail(ErrorKind::Data, "non-finite value in sample '" + ids_[i] + "'");
            sq += static_cast<double>(v) * v;
        }
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
            fail(ErrorKind::Data, "sample '" + ids_[i] + "' is not unit norm (" +
                                      std::to_string(std::sqrt(sq)) + ")");
        }
    }
}

SegmentEmbeddings::SegmentEmbeddings(std::vector<std::string> sample_ids, std::size_t dim,
                                     std::vector<std::uint32_t> segment_counts,
                                     std::vector<float> rows)
    : ids_(std::move(sample_ids)), dim_(dim), counts_(std::move(segment_counts)), rows_(std::move(rows)) {
    if (dim_ == 0) fail(ErrorKind::Format, "embedding dim must be positive");
    if (counts_.size() != ids_.size()) fail(ErrorKind::Format, "segment counts do not match sample count");
    check_unique(ids_, "sample id");
    offsets_.reserve(counts_.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        if (counts_[i] == 0) fail(ErrorKind::Format, "sample '" + ids_[i] + "' has zero segments");
        offsets_.push_back(total);
        total += counts_[i];
    }
    if (rows_.size() != total * dim_) {
        fail(ErrorKind::Format, "segment rows hold " + std::to_string(rows_.size()) + " values, expected " +
                                    std::to_string(total * dim_));
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        for (float v : segments(i)) {
            if (!std::isfinite(v)) fail(ErrorKind::Data, "non-finite value in sample '" + ids_[i] + "'");
        }
    }
}

// ---- AEMB ------------------------------------------------------------------

SegmentEmbeddings parse_segment_embeddings(const nlohmann::json& manifest,
                                           std::span<const std::uint8_t> binary) {
    std::vector<std::string> ids;
    std::vector<std::uint32_t> counts;
    std::uint64_t dim = 0;
    try {
        dim = manifest.at("dim").get<std::uint64_t>();
        for (const auto& s : manifest.at("samples")) {
            ids.push_back(s.at("id").get<std::string>());
            const auto n = s.at("segments").get<std::int64_t>();
            if (n < 1) fail(ErrorKind::Format, "sample '" + ids.back() + "' declares " + std::to_string(n) + " segments");
            counts.push_back(static_cast<std::uint32_t>(n));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("embedding manifest: ") + e.what());
    }

    if (binary.size() < kAembHeaderBytes) fail(ErrorKind::Format, "AEMB file shorter than its header");
    if (std::memcmp(binary.data(), kAembMagic, 4) != 0) fail(ErrorKind::Format, "bad AEMB magic");
    const auto version = read_le<std::uint32_t>(binary.data() + 4);
    if (version != kAembVersion) fail(ErrorKind::Format, "unsupported AEMB version " + std::to_string(version));
    const auto n_rows = read_le<std::uint64_t>(binary.data() + 8);
    const auto d = read_le<std::uint64_t>(binary.data() + 16);
    if (d != dim) fail(ErrorKind::Format, "AEMB header dim " + std::to_string(d) + " != manifest dim " + std::to_string(dim));

    std::uint64_t declared = 0;
    for (auto c : counts) declared += c;
    if (declared != n_rows) {
        fail(ErrorKind::Format, "manifest declares " + std::to_string(declared) + " segment rows, header " +
                                    std::to_string(n_rows));
    }
    const std::uint64_t payload = binary.size() - kAembHeaderBytes;
    if (n_rows * d * 4 > payload) {
        fail(ErrorKind::Format, "AEMB payload holds " + std::to_string(payload) + " bytes, header requires " +
                                    std::to_string(n_rows * d * 4));
    }
    if (n_rows * d * 4 != payload) fail(ErrorKind::Format, "trailing bytes after AEMB payload");

    std::vector<float> rows(n_rows * d);
    const std::uint8_t* p = binary.data() + kAembHeaderBytes;
    for (std::size_t i = 0; i < rows.size(); ++i, p += 4) {
        const auto bits = read_le<std::uint32_t>(p);
        std::memcpy(&rows[i], &bits, 4);
    }
    return SegmentEmbeddings(std::move(ids), d, std::move(counts), std::move(rows));
}

SegmentEmbeddings load_segment_embeddings(const fs::path& manifest_path, const fs::path& binary_path,
                                          const DatasetManifest* dataset) {
    const auto bytes = read_bytes(binary_path);
    auto segs = parse_segment_embeddings(read_json(manifest_path), bytes);
    if (dataset != nullptr) {
        const auto idx = dataset->index();
        for (const auto& id : segs.sample_ids()) {
            if (!idx.contains(id)) fail(ErrorKind::Consistency, "embedding id '" + id + "' not in dataset manifest");
        }
        if (segs.num_samples() != dataset->size()) {
            std::unordered_set<std::string> have(segs.sample_ids().begin(), segs.sample_ids().end());
            for (const auto& s : dataset->samples) {
                if (!have.contains(s.id)) fail(ErrorKind::Consistency, "dataset sample '" + s.id + "' has no embedding");
            }
        }
    }
    return segs;
}

std::vector<std::uint8_t> encode_aemb(const SegmentEmbeddings& segs) {
    std::vector<std::uint8_t> out;
    out.reserve(kAembHeaderBytes + segs.data().size() * 4);
    out.insert(out.end(), kAembMagic, kAembMagic + 4);
    append_le<std::uint32_t>(out, kAembVersion);
    append_le<std::uint64_t>(out, segs.num_rows());
    append_le<std::uint64_t>(out, segs.dim());
    for (float v : segs.data()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        append_le(out, bits);
    }
    return out;
}

nlohmann::json aemb_manifest_json(const SegmentEmbeddings& segs) {
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < segs.num_samples(); ++i) {
        samples.push_back({{"id", segs.sample_ids()[i]}, {"segments", segs.segment_counts()[i]}});
    }
    return {{"dim", segs.dim()}, {"samples", std::move(samples)}};
}

void write_segment_embeddings(const SegmentEmbeddings& segs, const fs::path& manifest_path,
                              const fs::path& binary_path, const nlohmann::json& provenance) {
    auto j = aemb_manifest_json(segs);
    if (!provenance.is_null()) j["provenance"] = provenance;
    {
        std::ofstream out(manifest_path);
        if (!out) fail(ErrorKind::Io, "cannot write " + manifest_path.string());
        out << j.dump(2) << '\n';
    }
    const auto bytes = encode_aemb(segs);
    std::ofstream out(binary_path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + binary_path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---- pooling ---------------------------------------------------------------

EmbeddingSet aggregate_mean_pool(const SegmentEmbeddings& segs) {
    const std::size_t dim = segs.dim();
    std::vector<float> out(segs.num_samples() * dim);
    std::vector<double> acc(dim);
    for (std::size_t i = 0; i < segs.num_samples(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const auto rows = segs.segments(i);
        const std::size_t n = segs.segment_counts()[i];
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t c = 0; c < dim; ++c) acc[c] += rows[s * dim + c];
        }
        double sq = 0.0;
        for (auto& v : acc) {
            v /= static_cast<double>(n);
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0)) fail(ErrorKind::Degenerate, "sample '" + segs.sample_ids()[i] + "' pools to a zero vector");
        for (std::size_t c = 0; c < dim; ++c) out[i * dim + c] = static_cast<float>(acc[c] / norm);
    }
    return EmbeddingSet(segs.sample_ids(), dim, std::move(out));
}

SegmentEmbeddings as_single_segments(const EmbeddingSet& emb) {
    return SegmentEmbeddings(emb.sample_ids(), emb.dim(), std::vector<std::uint32_t>(emb.size(), 1), emb.data());
}

// ---- synthetic -------------------------------------------------------------

SyntheticEmbeddings gen_synthetic_embeddings(int num_classes, int per_class, int dim,
                                             double intra_spread, std::uint64_t seed) {
    if (num_classes < 1 || per_class < 1 || num_classes * per_class < 2) {
        fail(ErrorKind::Parameter, "need num_classes * per_class >= 2");
    }
    if (dim < num_classes) fail(ErrorKind::Parameter, "dim must be >= num_classes");
    if (!(intra_spread >= 0.0)) fail(ErrorKind::Parameter, "intra_spread must be >= 0");

    Rng rng(derive_stream(seed, "synthetic-embeddings"));
    Eigen::MatrixXd gauss(dim, num_classes);
    for (int c = 0; c < num_classes; ++c) {
        for (int r = 0; r < dim; ++r) gauss(r, c) = rng.normal();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ() *
                              Eigen::MatrixXd::Identity(dim, num_classes);

    std::vector<std::vector<double>> centroids(num_classes, std::vector<double>(dim));
    for (int c = 0; c < num_classes; ++c) {
        for (int r = 0; r < dim; ++r) centroids[c][r] = q(r, c);
    }

    const std::size_t n = static_cast<std::size_t>(num_classes) * per_class;
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<float> vectors(n * dim);
    std::vector<double> v(dim);
    char buf[16];
    for (int c = 0; c < num_classes; ++c) {
        for (int k = 0; k < per_class; ++k) {
            const std::size_t i = ids.size();
            std::snprintf(buf, sizeof buf, "s%05zu", i);
            ids.emplace_back(buf);
            labels.push_back(c);
            double sq = 0.0;
            for (int r = 0; r < dim; ++r) {
                v[r] = centroids[c][r] + intra_spread * rng.normal();
                sq += v[r] * v[r];
            }
            const double norm = std::sqrt(sq);
            for (int r = 0; r < dim; ++r) vectors[i * dim + r] = static_cast<float>(v[r] / norm);
        }
    }
    return {EmbeddingSet(std::move(ids), static_cast<std::size_t>(dim), std::move(vectors)), std::move(labels),
            std::move(centroids)};
}

}  // namespace audio_audit
