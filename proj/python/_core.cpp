#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "audio_audit/corruption.hpp"
#include "audio_audit/embedding_store.hpp"
#include "audio_audit/errors.hpp"
#include "audio_audit/indicators.hpp"
#include "audio_audit/metrics.hpp"
#include "audio_audit/version.hpp"

namespace py = pybind11;
using namespace audio_audit;

namespace {

using FloatMatrix = py::array_t<float, py::array::c_style | py::array::forcecast>;

EmbeddingSet to_set(std::vector<std::string> ids, const FloatMatrix& vectors) {
    if (vectors.ndim() != 2) throw py::value_error("vectors must be a 2-D array");
    if (static_cast<std::size_t>(vectors.shape(0)) != ids.size()) throw py::value_error("one row per id expected");
    const auto* p = vectors.data();
    return EmbeddingSet(std::move(ids), static_cast<std::size_t>(vectors.shape(1)),
                        std::vector<float>(p, p + vectors.size()));
}

py::array_t<float> to_array(const EmbeddingSet& e) {
    py::array_t<float> out({e.size(), e.dim()});
    std::copy(e.data().begin(), e.data().end(), out.mutable_data());
    return out;
}

py::list entries(const RankedList& l) {
    py::list out;
    for (const auto& e : l.entries) {
        if (e.subject.is_pair()) {
            out.append(py::make_tuple(e.subject.first, e.subject.second, e.score));
        } else {
            out.append(py::make_tuple(e.subject.first, e.score));
        }
    }
    return out;
}

RankedList from_ids(const std::vector<std::string>& ranked_ids) {
    RankedList l{IssueType::OffTopic, {}, {}};
    const auto n = ranked_ids.size();
    for (std::size_t i = 0; i < n; ++i) l.entries.push_back({Subject::sample(ranked_ids[i]), static_cast<double>(n - i)});
    return l;
}

std::vector<bool> as_bools(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Embedding-based dataset auditing: rankers, metrics and corruption helpers.";
    m.attr("__version__") = kVersion;

    static py::exception<AuditError> audit_error(m, "AuditError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const AuditError& e) {
            py::object err = audit_error;
            PyErr_SetObject(err.ptr(), py::make_tuple(e.what(), std::string(to_string(e.kind()))).ptr());
        }
    });

    m.def(
        "gen_synthetic_embeddings",
        [](int classes, int per_class, int dim, double spread, std::uint64_t seed) {
            const auto s = gen_synthetic_embeddings(classes, per_class, dim, spread, seed);
            py::dict d;
            d["ids"] = s.embeddings.sample_ids();
            d["vectors"] = to_array(s.embeddings);
            d["labels"] = s.labels;
            d["centroids"] = s.centroids;
            return d;
        },
        py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("spread"), py::arg("seed") = 0);

    m.def(
        "rank_off_topic",
        [](std::vector<std::string> ids, const FloatMatrix& v, int k) { return entries(rank_off_topic(to_set(std::move(ids), v), k)); },
        py::arg("ids"), py::arg("vectors"), py::arg("k") = kDefaultOffTopicK,
        "[(id, score)] by mean distance to the k nearest neighbours, highest first.");
    m.def(
        "rank_near_duplicates",
        [](std::vector<std::string> ids, const FloatMatrix& v, std::size_t max_pairs) {
            const auto r = rank_near_duplicates(to_set(std::move(ids), v), max_pairs);
            py::dict d;
            d["pairs"] = entries(r.pairs);
            d["samples"] = entries(r.samples);
            return d;
        },
        py::arg("ids"), py::arg("vectors"), py::arg("max_pairs") = 0,
        "{'pairs': [(a, b, score)], 'samples': [(id, score)]}; max_pairs=0 keeps N pairs.");
    m.def(
        "rank_label_errors",
        [](std::vector<std::string> ids, const FloatMatrix& v, const std::vector<int>& labels) {
            const auto r = rank_label_errors(to_set(std::move(ids), v), labels);
            return py::make_tuple(entries(r), r.flagged);
        },
        py::arg("ids"), py::arg("vectors"), py::arg("labels"),
        "([(id, score)], flagged ids) with score d_intra / (d_intra + d_extra).");

    m.def(
        "auroc", [](const std::vector<double>& s, const std::vector<int>& p) { return auroc(s, as_bools(p)); },
        py::arg("scores"), py::arg("positives"));
    m.def(
        "average_precision",
        [](const std::vector<double>& s, const std::vector<int>& p) { return average_precision(s, as_bools(p)); },
        py::arg("scores"), py::arg("positives"));
    m.def(
        "foe_curve",
        [](const std::vector<std::string>& ranked_ids, const std::vector<std::string>& positives,
           std::optional<std::vector<double>> recalls) {
            const auto grid = recalls ? *recalls : default_recall_grid();
            const IdSet pos(positives.begin(), positives.end());
            std::vector<std::pair<double, double>> out;
            for (const auto& p : foe_curve(from_ids(ranked_ids), pos, grid)) out.emplace_back(p.recall, p.foe);
            return out;
        },
        py::arg("ranked_ids"), py::arg("positives"), py::arg("recalls") = py::none(),
        "[(recall, foe)] for a review order given as ids, best first.");
    m.def(
        "effort_summary",
        [](const std::vector<double>& foe) {
            std::vector<FoePoint> c(foe.size());
            for (std::size_t i = 0; i < foe.size(); ++i) c[i].foe = foe[i];
            const auto s = effort_summary(c);
            return py::make_tuple(s.mean_savings, s.speedup);
        },
        py::arg("foe_values"), "(mean_savings, speedup).");
    m.def("default_recall_grid", &default_recall_grid);

    m.def(
        "select_targets",
        [](const std::vector<std::string>& ids, double alpha, std::uint64_t seed) { return select_targets(ids, alpha, seed); },
        py::arg("ids"), py::arg("alpha"), py::arg("seed"));
    m.def(
        "flip_label",
        [](int label, int num_classes, std::uint64_t seed) {
            Rng rng(seed);
            return flip_label(label, num_classes, rng);
        },
        py::arg("label"), py::arg("num_classes"), py::arg("seed"));

    m.def(
        "load_embeddings",
        [](const fs::path& manifest, const fs::path& binary) {
            const auto pooled = aggregate_mean_pool(load_segment_embeddings(manifest, binary));
            return py::make_tuple(pooled.sample_ids(), to_array(pooled));
        },
        py::arg("manifest"), py::arg("binary"), "Reads AEMB + sidecar and mean-pools: (ids, vectors).");
    m.def(
        "write_embeddings",
        [](std::vector<std::string> ids, const FloatMatrix& v, const fs::path& manifest, const fs::path& binary) {
            write_segment_embeddings(as_single_segments(to_set(std::move(ids), v)), manifest, binary);
        },
        py::arg("ids"), py::arg("vectors"), py::arg("manifest"), py::arg("binary"),
        "Writes one segment per sample as AEMB + sidecar.");
}
