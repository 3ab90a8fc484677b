#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "codelabel/matrix.hpp"
#include "codelabel/records.hpp"

namespace codelabel {

enum class DomainRole { Source, Target };

std::string to_string(DomainRole role);
DomainRole parse_role(const std::string& text);

// One multivariate window: values is D channels x T steps.
struct TimeSeriesInstance {
    std::string id;
    Matrix values;
    std::optional<std::size_t> label;

    std::size_t n_channels() const noexcept { return values.rows(); }
    std::size_t length() const noexcept { return values.cols(); }
};

struct DomainDataset {
    std::vector<TimeSeriesInstance> instances;
    std::size_t n_channels = 0;
    std::size_t length = 0;
    std::size_t n_classes = 0;
    DomainRole role = DomainRole::Source;

    std::size_t size() const noexcept { return instances.size(); }

    // Throws Error(Data) naming the offending instance if any invariant is
    // broken: shape mismatch, non-finite value, label >= K, or an unlabeled
    // source instance.
    void validate() const;
};

// D x N x m non-overlapping patches, N = floor(T / m).
class PatchGrid {
public:
    PatchGrid() = default;
    PatchGrid(std::size_t n_channels, std::size_t n_patches, std::size_t patch_length)
        : n_channels_(n_channels), n_patches_(n_patches), patch_length_(patch_length),
          data_(n_channels * n_patches * patch_length, 0.0) {}

    std::size_t n_channels() const noexcept { return n_channels_; }
    std::size_t n_patches() const noexcept { return n_patches_; }
    std::size_t patch_length() const noexcept { return patch_length_; }

    std::span<double> patch(std::size_t d, std::size_t t) {
        return {data_.data() + (d * n_patches_ + t) * patch_length_, patch_length_};
    }
    std::span<const double> patch(std::size_t d, std::size_t t) const {
        return {data_.data() + (d * n_patches_ + t) * patch_length_, patch_length_};
    }

private:
    std::size_t n_channels_ = 0;
    std::size_t n_patches_ = 0;
    std::size_t patch_length_ = 0;
    std::vector<double> data_;
};

PatchGrid patchify(const TimeSeriesInstance& instance, std::size_t patch_length);

// Concatenates each channel's patches back into a D x (N*m) matrix.
Matrix unpatchify(const PatchGrid& grid);

// Corpus files: header meta {role, n_channels, length, n_classes, ...}
// followed by one {"id", "label", "channels"} record per instance.
DomainDataset corpus_from_document(const records::Document& doc, const std::filesystem::path& origin = {});
records::Document corpus_to_document(const DomainDataset& dataset, const records::json& extra_meta = records::json::object());

DomainDataset load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const DomainDataset& dataset,
                 const records::json& extra_meta = records::json::object());

}  // namespace codelabel
