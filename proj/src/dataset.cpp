#include "codelabel/dataset.hpp"

#include <cmath>

#include "codelabel/error.hpp"

namespace codelabel {

using records::json;

std::string to_string(DomainRole role) { return role == DomainRole::Source ? "source" : "target"; }

DomainRole parse_role(const std::string& text) {
    if (text == "source") return DomainRole::Source;
    if (text == "target") return DomainRole::Target;
    fail_data("unknown domain role '" + text + "'");
}

void DomainDataset::validate() const {
    for (const auto& inst : instances) {
        if (inst.n_channels() != n_channels || inst.length() != length)
            fail_data("dimension mismatch in instance '" + inst.id + "': expected " + std::to_string(n_channels) +
                      "x" + std::to_string(length) + ", got " + std::to_string(inst.n_channels()) + "x" +
                      std::to_string(inst.length()));
        for (double v : inst.values.data())
            if (!std::isfinite(v)) fail_data("non-finite value in instance '" + inst.id + "'");
        if (inst.label && *inst.label >= n_classes)
            fail_data("label " + std::to_string(*inst.label) + " out of range in instance '" + inst.id + "'");
        if (role == DomainRole::Source && !inst.label) fail_data("missing label for source instance '" + inst.id + "'");
    }
}

PatchGrid patchify(const TimeSeriesInstance& instance, std::size_t patch_length) {
    if (patch_length < 2) fail_usage("patch length must be >= 2");
    const std::size_t T = instance.length();
    if (patch_length > T)
        fail_data("patch length " + std::to_string(patch_length) + " exceeds series length " + std::to_string(T) +
                  " (empty patch grid)");
    const std::size_t N = T / patch_length;
    PatchGrid grid(instance.n_channels(), N, patch_length);
    for (std::size_t d = 0; d < instance.n_channels(); ++d) {
        auto src = instance.values.row(d);
        for (std::size_t t = 0; t < N; ++t) {
            auto dst = grid.patch(d, t);
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(t * patch_length), patch_length, dst.begin());
        }
    }
    return grid;
}

Matrix unpatchify(const PatchGrid& grid) {
    const std::size_t m = grid.patch_length();
    Matrix out(grid.n_channels(), grid.n_patches() * m);
    for (std::size_t d = 0; d < grid.n_channels(); ++d)
        for (std::size_t t = 0; t < grid.n_patches(); ++t) {
            auto p = grid.patch(d, t);
            std::copy(p.begin(), p.end(), out.row(d).begin() + static_cast<std::ptrdiff_t>(t * m));
        }
    return out;
}

namespace {

TimeSeriesInstance instance_from_record(const records::Record& rec, const std::string& origin) {
    const std::string at = origin.empty() ? "line " + std::to_string(rec.line) : origin + ":" + std::to_string(rec.line);
    TimeSeriesInstance inst;
    try {
        inst.id = records::require(rec, "id").get<std::string>();
        const json& label = records::require(rec, "label");
        if (!label.is_null()) {
            if (!label.is_number_integer() || label.get<long long>() < 0)
                fail_data(at + ": label must be a non-negative integer or null");
            inst.label = label.get<std::size_t>();
        }
        const json& channels = records::require(rec, "channels");
        if (!channels.is_array() || channels.empty()) fail_data(at + ": \"channels\" must be a non-empty array");
        const std::size_t D = channels.size();
        const std::size_t T = channels[0].size();
        for (std::size_t d = 0; d < D; ++d) {
            if (!channels[d].is_array()) fail_data(at + ": channel " + std::to_string(d) + " is not an array");
            if (channels[d].size() != T)
                fail_data(at + ": dimension mismatch in instance '" + inst.id + "': channel 0 has length " +
                          std::to_string(T) + ", channel " + std::to_string(d) + " has length " +
                          std::to_string(channels[d].size()));
        }
        inst.values = Matrix(D, T);
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t t = 0; t < T; ++t) {
                const json& v = channels[d][t];
                if (!v.is_number()) fail_data(at + ": non-numeric value in instance '" + inst.id + "'");
                inst.values(d, t) = v.get<double>();
            }
    } catch (const json::exception& e) {
        fail_data(at + ": " + e.what());
    }
    return inst;
}

}  // namespace

DomainDataset corpus_from_document(const records::Document& doc, const std::filesystem::path& origin) {
    const std::string where = origin.string();
    DomainDataset ds;
    try {
        ds.role = parse_role(doc.meta.value("role", std::string{"target"}));
    } catch (const json::exception& e) {
        fail_data(where + ": bad corpus header: " + e.what());
    }
    ds.instances.reserve(doc.records.size());
    for (const auto& rec : doc.records) ds.instances.push_back(instance_from_record(rec, where));

    if (!ds.instances.empty()) {
        ds.n_channels = ds.instances.front().n_channels();
        ds.length = ds.instances.front().length();
    } else {
        ds.n_channels = doc.meta.value("n_channels", std::size_t{0});
        ds.length = doc.meta.value("length", std::size_t{0});
    }
    std::size_t max_label = 0;
    bool any_label = false;
    for (const auto& inst : ds.instances)
        if (inst.label) {
            max_label = std::max(max_label, *inst.label);
            any_label = true;
        }
    ds.n_classes = doc.meta.value("n_classes", any_label ? max_label + 1 : std::size_t{0});
    ds.validate();
    return ds;
}

records::Document corpus_to_document(const DomainDataset& dataset, const json& extra_meta) {
    records::Document doc;
    doc.kind = "corpus";
    doc.meta = extra_meta.is_object() ? extra_meta : json::object();
    doc.meta["role"] = to_string(dataset.role);
    doc.meta["n_channels"] = dataset.n_channels;
    doc.meta["length"] = dataset.length;
    doc.meta["n_classes"] = dataset.n_classes;
    doc.records.reserve(dataset.size());
    for (const auto& inst : dataset.instances) {
        json channels = json::array();
        for (std::size_t d = 0; d < inst.n_channels(); ++d) {
            auto row = inst.values.row(d);
            channels.push_back(std::vector<double>(row.begin(), row.end()));
        }
        json rec = {{"id", inst.id}, {"channels", std::move(channels)}};
        rec["label"] = inst.label ? json(*inst.label) : json(nullptr);
        doc.records.push_back({0, std::move(rec)});
    }
    return doc;
}

DomainDataset load_corpus(const std::filesystem::path& path) {
    return corpus_from_document(records::read_file(path, "corpus"), path);
}

void save_corpus(const std::filesystem::path& path, const DomainDataset& dataset, const json& extra_meta) {
    records::write_file(path, corpus_to_document(dataset, extra_meta));
}

}  // namespace codelabel
