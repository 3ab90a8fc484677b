#pragma once

// Residual coarse/fine vector quantization of latent patches.
//
// Assignment follows the cosine rules
//   coarse = argmin_c || l2(z) - l2(e_c) ||^2
//   fine   = argmin_f || l2(z) - l2(e_coarse) - l2(e_f) ||^2
// with l2(v) = v / ||v|| and l2(0) = 0; ties go to the lowest index.
// Codebooks are fitted by spherical Lloyd iterations instead of gradient
// training. Coarse vectors are stored unit-norm; fine vectors are stored as the
// raw mean residual of their cluster, so reconstruction e_c + e_f is the
// least-squares fit of l2(z) given the assignments.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codelabel/dataset.hpp"
#include "codelabel/matrix.hpp"
#include "codelabel/records.hpp"

namespace codelabel {

using CodeIndex = std::uint32_t;

// D x N x dim latent tensor.
class LatentGrid {
public:
    LatentGrid() = default;
    LatentGrid(std::size_t n_channels, std::size_t n_patches, std::size_t dim)
        : n_channels_(n_channels), n_patches_(n_patches), dim_(dim), data_(n_channels * n_patches * dim, 0.0) {}

    std::size_t n_channels() const noexcept { return n_channels_; }
    std::size_t n_patches() const noexcept { return n_patches_; }
    std::size_t dim() const noexcept { return dim_; }

    std::span<double> at(std::size_t d, std::size_t t) { return {data_.data() + (d * n_patches_ + t) * dim_, dim_}; }
    std::span<const double> at(std::size_t d, std::size_t t) const {
        return {data_.data() + (d * n_patches_ + t) * dim_, dim_};
    }

    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const LatentGrid&, const LatentGrid&) = default;

private:
    std::size_t n_channels_ = 0;
    std::size_t n_patches_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

enum class EmbedMode {
    ZNorm,       // (patch - mean) / (std + 1e-8), dim = m
    Raw,         // patch values as-is, dim = m
    Projection,  // z-normalized patch times a seeded orthonormal d_dim x m matrix
};

std::string to_string(EmbedMode mode);
EmbedMode parse_embed_mode(const std::string& text);

struct EmbedSpec {
    EmbedMode mode = EmbedMode::ZNorm;
    std::size_t d_dim = 0;  // only used by Projection; 0 means m
    std::uint64_t seed = 0;

    friend bool operator==(const EmbedSpec&, const EmbedSpec&) = default;
};

inline constexpr double kZNormStabilizer = 1e-8;

class Embedder {
public:
    Embedder(std::size_t patch_length, EmbedSpec spec);

    std::size_t patch_length() const noexcept { return patch_length_; }
    std::size_t latent_dim() const noexcept { return latent_dim_; }
    const EmbedSpec& spec() const noexcept { return spec_; }

    void embed_patch(std::span<const double> patch, std::span<double> out) const;
    LatentGrid embed(const PatchGrid& grid) const;

private:
    std::size_t patch_length_;
    std::size_t latent_dim_;
    EmbedSpec spec_;
    Matrix projection_;  // latent_dim x patch_length, Projection mode only
};

// Default z-normalized embedding of a patch grid.
LatentGrid embed(const PatchGrid& grid, EmbedMode mode = EmbedMode::ZNorm);

// out = v / ||v||, or 0 when v is the zero vector.
void l2_normalize(std::span<const double> v, std::span<double> out);

struct Codebook {
    Matrix vectors;  // n x dim

    std::size_t size() const noexcept { return vectors.rows(); }
    std::size_t dim() const noexcept { return vectors.cols(); }

    // Throws Error(Invariant) when n < 2, an entry is non-finite, or two rows
    // are identical.
    void validate(const char* name) const;
};

struct CodeGrid {
    std::size_t n_channels = 0;
    std::size_t n_patches = 0;
    std::vector<CodeIndex> coarse;  // D x N row-major
    std::vector<CodeIndex> fine;

    CodeGrid() = default;
    CodeGrid(std::size_t d, std::size_t n) : n_channels(d), n_patches(n), coarse(d * n, 0), fine(d * n, 0) {}

    CodeIndex coarse_at(std::size_t d, std::size_t t) const { return coarse[d * n_patches + t]; }
    CodeIndex fine_at(std::size_t d, std::size_t t) const { return fine[d * n_patches + t]; }
    std::span<const CodeIndex> coarse_channel(std::size_t d) const {
        return {coarse.data() + d * n_patches, n_patches};
    }

    friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

enum class ReconstructMode { CoarseAndFine, CoarseOnly, FineOnly };

class ResidualQuantizer {
public:
    ResidualQuantizer(Codebook coarse, Codebook fine, std::size_t patch_length, EmbedSpec embed_spec);

    const Codebook& coarse() const noexcept { return coarse_; }
    const Codebook& fine() const noexcept { return fine_; }
    std::size_t n_coarse() const noexcept { return coarse_.size(); }
    std::size_t n_fine() const noexcept { return fine_.size(); }
    std::size_t dim() const noexcept { return coarse_.dim(); }
    std::size_t patch_length() const noexcept { return embedder_.patch_length(); }
    const Embedder& embedder() const noexcept { return embedder_; }

    CodeIndex assign_coarse(std::span<const double> unit_z) const;
    CodeIndex assign_fine(std::span<const double> residual) const;

    // Coarse and fine indices of a single latent vector.
    std::pair<CodeIndex, CodeIndex> encode_vector(std::span<const double> z) const;
    CodeGrid encode(const LatentGrid& latents) const;
    // patchify -> embed -> encode.
    CodeGrid encode_instance(const TimeSeriesInstance& instance) const;

    LatentGrid reconstruct(const CodeGrid& codes, ReconstructMode mode = ReconstructMode::CoarseAndFine) const;

    // Writes l2(z) - l2(e_c) into out.
    void residual(std::span<const double> z, CodeIndex coarse_index, std::span<double> out) const;

private:
    Codebook coarse_;
    Codebook fine_;
    Matrix coarse_unit_;
    Matrix fine_unit_;
    Embedder embedder_;
};

struct FitOptions {
    std::size_t n_coarse = 8;
    std::size_t n_fine = 64;
    std::size_t max_iters = 300;
    std::uint64_t seed = 0;
    double beta = 0.25;  // commitment weight of the reported code loss
};

struct FitTrace {
    std::vector<double> coarse_objective;  // sum ||l2(z) - l2(e_c)||^2 per iteration
    std::vector<double> fine_objective;    // sum ||r - l2(e_f)||^2 per iteration
    std::vector<double> code_loss;         // (1 + beta) * (coarse + fine) over the fine phase
    bool coarse_converged = false;
    bool fine_converged = false;
};

struct FitResult {
    ResidualQuantizer quantizer;
    FitTrace trace;
};

// Fits both codebooks on the pooled latent vectors. Throws Error(Data) when the
// pool is too small or lacks enough distinct directions.
FitResult fit(std::span<const LatentGrid> latents, const FitOptions& options, std::size_t patch_length,
              const EmbedSpec& embed_spec = {});

// Code loss diagnostic with stop-gradients read as plain values, evaluated in
// the normalized assignment space: (1 + beta) * (||u - c||^2 + ||u - c - f||^2)
// summed over all vectors, u = l2(z), c = l2(e_coarse), f = l2(e_fine).
double code_loss(const ResidualQuantizer& q, std::span<const LatentGrid> latents, double beta = 0.25);

struct CodeUsage {
    std::vector<std::size_t> coarse_counts;
    std::vector<std::size_t> fine_counts;
    double coarse_dead_pct = 0.0;
    double fine_dead_pct = 0.0;
    std::size_t total = 0;
    // Per-element squared error against l2(z); present when latents are given.
    std::optional<double> recon_mse;
    std::optional<double> coarse_only_mse;
};

CodeUsage code_stats(std::span<const CodeGrid> codes, const ResidualQuantizer& q,
                     std::span<const LatentGrid> latents = {});

records::Document quantizer_to_document(const ResidualQuantizer& q,
                                        const records::json& extra_meta = records::json::object());
ResidualQuantizer quantizer_from_document(const records::Document& doc);

}  // namespace codelabel
