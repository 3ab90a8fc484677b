#include "codelabel/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "codelabel/error.hpp"

namespace codelabel {

using records::json;

std::string to_string(EmbedMode mode) {
    switch (mode) {
        case EmbedMode::ZNorm: return "znorm";
        case EmbedMode::Raw: return "raw";
        case EmbedMode::Projection: return "projection";
    }
    return "znorm";
}

EmbedMode parse_embed_mode(const std::string& text) {
    if (text == "znorm") return EmbedMode::ZNorm;
    if (text == "raw") return EmbedMode::Raw;
    if (text == "projection") return EmbedMode::Projection;
    fail_usage("unknown embed mode '" + text + "' (expected znorm, raw or projection)");
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

// Nearest row of `unit` (ties to lowest index).
CodeIndex nearest(const Matrix& unit, std::span<const double> x, double* best_out = nullptr) {
    double best = std::numeric_limits<double>::infinity();
    CodeIndex best_idx = 0;
    for (std::size_t c = 0; c < unit.rows(); ++c) {
        const double dist = squared_distance(x, unit.row(c));
        if (dist < best) {
            best = dist;
            best_idx = static_cast<CodeIndex>(c);
        }
    }
    if (best_out) *best_out = best;
    return best_idx;
}

Matrix normalized_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) l2_normalize(m.row(r), out.row(r));
    return out;
}

// Gram-Schmidt on the rows of a count x len Gaussian matrix (count <= len).
Matrix orthonormal_rows(std::size_t count, std::size_t len, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix q(count, len);
    for (std::size_t r = 0; r < count; ++r) {
        for (;;) {
            auto row = q.row(r);
            for (auto& v : row) v = gauss(rng);
            for (std::size_t p = 0; p < r; ++p) {
                auto prev = q.row(p);
                const double dot = std::inner_product(row.begin(), row.end(), prev.begin(), 0.0);
                for (std::size_t i = 0; i < len; ++i) row[i] -= dot * prev[i];
            }
            const double norm = std::sqrt(squared_norm(row));
            if (norm > 1e-6) {
                for (auto& v : row) v /= norm;
                break;
            }
        }
    }
    return q;
}

}  // namespace

void l2_normalize(std::span<const double> v, std::span<double> out) {
    const double norm = std::sqrt(squared_norm(v));
    if (norm == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
}

// ---------------------------------------------------------------------------
// Embedding

Embedder::Embedder(std::size_t patch_length, EmbedSpec spec) : patch_length_(patch_length), spec_(spec) {
    if (patch_length < 2) fail_usage("patch length must be >= 2");
    latent_dim_ = patch_length;
    if (spec_.mode == EmbedMode::Projection) {
        latent_dim_ = spec_.d_dim == 0 ? patch_length : spec_.d_dim;
        if (latent_dim_ <= patch_length) {
            projection_ = orthonormal_rows(latent_dim_, patch_length, spec_.seed);
        } else {
            // Orthonormal columns: transpose of m orthonormal rows of length d_dim.
            Matrix rows = orthonormal_rows(patch_length, latent_dim_, spec_.seed);
            projection_ = Matrix(latent_dim_, patch_length);
            for (std::size_t r = 0; r < latent_dim_; ++r)
                for (std::size_t c = 0; c < patch_length; ++c) projection_(r, c) = rows(c, r);
        }
    }
}

void Embedder::embed_patch(std::span<const double> patch, std::span<double> out) const {
    const std::size_t m = patch.size();
    if (spec_.mode == EmbedMode::Raw) {
        std::copy(patch.begin(), patch.end(), out.begin());
        return;
    }
    const double mean = std::accumulate(patch.begin(), patch.end(), 0.0) / static_cast<double>(m);
    double var = 0.0;
    for (double v : patch) var += (v - mean) * (v - mean);
    const double denom = std::sqrt(var / static_cast<double>(m)) + kZNormStabilizer;
    if (spec_.mode == EmbedMode::ZNorm) {
        for (std::size_t i = 0; i < m; ++i) out[i] = (patch[i] - mean) / denom;
        return;
    }
    std::vector<double> z(m);
    for (std::size_t i = 0; i < m; ++i) z[i] = (patch[i] - mean) / denom;
    for (std::size_t r = 0; r < latent_dim_; ++r) {
        auto prow = projection_.row(r);
        out[r] = std::inner_product(prow.begin(), prow.end(), z.begin(), 0.0);
    }
}

LatentGrid Embedder::embed(const PatchGrid& grid) const {
    if (grid.patch_length() != patch_length_)
        fail_data("patch length " + std::to_string(grid.patch_length()) + " does not match embedder patch length " +
                  std::to_string(patch_length_));
    LatentGrid out(grid.n_channels(), grid.n_patches(), latent_dim_);
    for (std::size_t d = 0; d < grid.n_channels(); ++d)
        for (std::size_t t = 0; t < grid.n_patches(); ++t) embed_patch(grid.patch(d, t), out.at(d, t));
    return out;
}

LatentGrid embed(const PatchGrid& grid, EmbedMode mode) {
    return Embedder(grid.patch_length(), EmbedSpec{mode, 0, 0}).embed(grid);
}

// ---------------------------------------------------------------------------
// Codebooks and the quantizer

void Codebook::validate(const char* name) const {
    if (size() < 2) fail_invariant(std::string(name) + " codebook needs at least 2 vectors");
    for (double v : vectors.data())
        if (!std::isfinite(v)) fail_invariant(std::string(name) + " codebook has a non-finite entry");
    for (std::size_t a = 0; a < size(); ++a)
        for (std::size_t b = a + 1; b < size(); ++b)
            if (std::equal(vectors.row(a).begin(), vectors.row(a).end(), vectors.row(b).begin()))
                fail_invariant(std::string(name) + " codebook has identical vectors " + std::to_string(a) + " and " +
                               std::to_string(b));
}

ResidualQuantizer::ResidualQuantizer(Codebook coarse, Codebook fine, std::size_t patch_length, EmbedSpec embed_spec)
    : coarse_(std::move(coarse)), fine_(std::move(fine)), embedder_(patch_length, embed_spec) {
    coarse_.validate("coarse");
    fine_.validate("fine");
    if (coarse_.dim() != fine_.dim()) fail_invariant("coarse and fine codebooks differ in dimension");
    if (coarse_.dim() != embedder_.latent_dim())
        fail_invariant("codebook dimension " + std::to_string(coarse_.dim()) + " does not match latent dimension " +
                       std::to_string(embedder_.latent_dim()));
    coarse_unit_ = normalized_rows(coarse_.vectors);
    fine_unit_ = normalized_rows(fine_.vectors);
}

CodeIndex ResidualQuantizer::assign_coarse(std::span<const double> unit_z) const {
    return nearest(coarse_unit_, unit_z);
}

CodeIndex ResidualQuantizer::assign_fine(std::span<const double> residual) const {
    return nearest(fine_unit_, residual);
}

void ResidualQuantizer::residual(std::span<const double> z, CodeIndex coarse_index, std::span<double> out) const {
    l2_normalize(z, out);
    auto c = coarse_unit_.row(coarse_index);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c[i];
}

std::pair<CodeIndex, CodeIndex> ResidualQuantizer::encode_vector(std::span<const double> z) const {
    if (z.size() != dim()) fail_data("latent dimension mismatch");
    std::vector<double> buf(z.size());
    l2_normalize(z, buf);
    const CodeIndex c = nearest(coarse_unit_, buf);
    auto cu = coarse_unit_.row(c);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] -= cu[i];
    return {c, nearest(fine_unit_, buf)};
}

CodeGrid ResidualQuantizer::encode(const LatentGrid& latents) const {
    if (latents.dim() != dim())
        fail_data("latent dimension " + std::to_string(latents.dim()) + " does not match quantizer dimension " +
                  std::to_string(dim()));
    CodeGrid codes(latents.n_channels(), latents.n_patches());
    for (std::size_t d = 0; d < latents.n_channels(); ++d)
        for (std::size_t t = 0; t < latents.n_patches(); ++t) {
            auto [c, f] = encode_vector(latents.at(d, t));
            codes.coarse[d * codes.n_patches + t] = c;
            codes.fine[d * codes.n_patches + t] = f;
        }
    return codes;
}

CodeGrid ResidualQuantizer::encode_instance(const TimeSeriesInstance& instance) const {
    return encode(embedder_.embed(patchify(instance, patch_length())));
}

LatentGrid ResidualQuantizer::reconstruct(const CodeGrid& codes, ReconstructMode mode) const {
    LatentGrid out(codes.n_channels, codes.n_patches, dim());
    for (std::size_t d = 0; d < codes.n_channels; ++d)
        for (std::size_t t = 0; t < codes.n_patches; ++t) {
            const CodeIndex c = codes.coarse_at(d, t);
            const CodeIndex f = codes.fine_at(d, t);
            if (c >= n_coarse() || f >= n_fine()) fail_data("code index out of range");
            auto dst = out.at(d, t);
            auto ec = coarse_.vectors.row(c);
            auto ef = fine_.vectors.row(f);
            for (std::size_t i = 0; i < dim(); ++i) {
                switch (mode) {
                    case ReconstructMode::CoarseAndFine: dst[i] = ec[i] + ef[i]; break;
                    case ReconstructMode::CoarseOnly: dst[i] = ec[i]; break;
                    case ReconstructMode::FineOnly: dst[i] = ef[i]; break;
                }
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct LloydResult {
    Matrix centroids;  // raw cluster means (or reseed points)
    std::vector<CodeIndex> assign;
    std::vector<double> objective;
    bool converged = false;
};

// k-means++ seeding over the non-zero points.
Matrix seed_centroids(const Matrix& points, std::size_t k, std::mt19937_64& rng, const char* name) {
    const std::size_t n = points.rows();
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i)
        if (squared_norm(points.row(i)) > 0.0) candidates.push_back(i);
    if (candidates.size() < k)
        fail_data(std::string("insufficient data for the ") + name + " codebook: " + std::to_string(candidates.size()) +
                  " non-degenerate vectors for " + std::to_string(k) + " codes");

    Matrix centroids(k, points.cols());
    Matrix unit(k, points.cols());
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    std::size_t first = candidates[pick(rng)];
    std::copy_n(points.row(first).begin(), points.cols(), centroids.row(0).begin());
    l2_normalize(centroids.row(0), unit.row(0));

    std::vector<double> d2(candidates.size(), std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            d2[j] = std::min(d2[j], squared_distance(points.row(candidates[j]), unit.row(c - 1)));
            total += d2[j];
        }
        if (!(total > 0.0))
            fail_data(std::string("insufficient distinct data for the ") + name + " codebook: only " +
                      std::to_string(c) + " distinct directions for " + std::to_string(k) + " codes");
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        std::size_t chosen = candidates.size();
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (d2[j] <= 0.0) continue;
            chosen = j;
            target -= d2[j];
            if (target <= 0.0) break;
        }
        std::copy_n(points.row(candidates[chosen]).begin(), points.cols(), centroids.row(c).begin());
        l2_normalize(centroids.row(c), unit.row(c));
    }
    return centroids;
}

// Lloyd iterations where points are compared with l2(centroid). Each update
// sets the centroid to the mean of its members, whose direction minimises the
// cluster's objective, so the recorded objective never increases. Empty or
// zero-mean clusters are re-seeded from the points with the largest error.
LloydResult spherical_lloyd(const Matrix& points, std::size_t k, std::size_t max_iters, std::mt19937_64& rng,
                            const char* name) {
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();
    LloydResult res;
    res.centroids = seed_centroids(points, k, rng, name);
    res.assign.assign(n, std::numeric_limits<CodeIndex>::max());

    std::vector<CodeIndex> next(n);
    std::vector<double> err(n);
    Matrix unit(k, dim);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t c = 0; c < k; ++c) l2_normalize(res.centroids.row(c), unit.row(c));
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = nearest(unit, points.row(i), &err[i]);
            total += err[i];
        }
        res.objective.push_back(total);
        if (next == res.assign) {
            res.converged = true;
            break;
        }
        res.assign = next;

        Matrix sums(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto s = sums.row(res.assign[i]);
            auto p = points.row(i);
            for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
            ++counts[res.assign[i]];
        }
        std::vector<std::size_t> order;  // reseed candidates, worst first
        std::size_t next_reseed = 0;
        for (std::size_t c = 0; c < k; ++c) {
            auto s = sums.row(c);
            if (counts[c] > 0 && squared_norm(s) > 0.0) {
                auto dst = res.centroids.row(c);
                for (std::size_t j = 0; j < dim; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
                continue;
            }
            if (order.empty()) {
                order.resize(n);
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::stable_sort(order.begin(), order.end(),
                                 [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
            }
            if (next_reseed >= n || !(err[order[next_reseed]] > 0.0))
                fail_data(std::string("insufficient distinct data for the ") + name + " codebook: cannot re-seed code " +
                          std::to_string(c));
            auto p = points.row(order[next_reseed++]);
            std::copy(p.begin(), p.end(), res.centroids.row(c).begin());
        }
    }
    return res;
}

}  // namespace

FitResult fit(std::span<const LatentGrid> latents, const FitOptions& options, std::size_t patch_length,
              const EmbedSpec& embed_spec) {
    if (options.n_coarse < 2 || options.n_fine < 2) fail_usage("codebooks need at least 2 codes");
    if (latents.empty()) fail_data("insufficient data: no latent grids to fit");
    const std::size_t dim = latents.front().dim();
    std::size_t pooled = 0;
    for (const auto& g : latents) {
        if (g.dim() != dim) fail_data("latent grids disagree on dimension");
        pooled += g.n_channels() * g.n_patches();
    }
    if (options.n_coarse >= pooled)
        fail_data("n_c = " + std::to_string(options.n_coarse) + " must be smaller than the pooled patch count " +
                  std::to_string(pooled));
    if (options.n_fine > pooled)
        fail_data("insufficient data: " + std::to_string(pooled) + " residuals for " + std::to_string(options.n_fine) +
                  " fine codes");

    Matrix unit_points(pooled, dim);
    std::size_t row = 0;
    for (const auto& g : latents)
        for (std::size_t d = 0; d < g.n_channels(); ++d)
            for (std::size_t t = 0; t < g.n_patches(); ++t) l2_normalize(g.at(d, t), unit_points.row(row++));

    std::mt19937_64 rng(options.seed);
    FitTrace trace;

    LloydResult coarse_fit = spherical_lloyd(unit_points, options.n_coarse, options.max_iters, rng, "coarse");
    trace.coarse_objective = coarse_fit.objective;
    trace.coarse_converged = coarse_fit.converged;
    Codebook coarse{normalized_rows(coarse_fit.centroids)};
    const Matrix coarse_unit = normalized_rows(coarse.vectors);

    // Residuals computed exactly as encode() does.
    Matrix residuals(pooled, dim);
    double coarse_term = 0.0;
    for (std::size_t i = 0; i < pooled; ++i) {
        double dist = 0.0;
        const CodeIndex c = nearest(coarse_unit, unit_points.row(i), &dist);
        coarse_term += dist;
        auto r = residuals.row(i);
        auto cu = coarse_unit.row(c);
        for (std::size_t j = 0; j < dim; ++j) r[j] = unit_points(i, j) - cu[j];
    }

    LloydResult fine_fit = spherical_lloyd(residuals, options.n_fine, options.max_iters, rng, "fine");
    trace.fine_objective = fine_fit.objective;
    trace.fine_converged = fine_fit.converged;
    for (double f : fine_fit.objective) trace.code_loss.push_back((1.0 + options.beta) * (coarse_term + f));

    Codebook fine{std::move(fine_fit.centroids)};
    return FitResult{ResidualQuantizer(std::move(coarse), std::move(fine), patch_length, embed_spec), std::move(trace)};
}

double code_loss(const ResidualQuantizer& q, std::span<const LatentGrid> latents, double beta) {
    const std::size_t dim = q.dim();
    std::vector<double> unit(dim), cu(dim), fu(dim);
    double total = 0.0;
    for (const auto& g : latents)
        for (std::size_t d = 0; d < g.n_channels(); ++d)
            for (std::size_t t = 0; t < g.n_patches(); ++t) {
                auto [c, f] = q.encode_vector(g.at(d, t));
                l2_normalize(g.at(d, t), unit);
                l2_normalize(q.coarse().vectors.row(c), cu);
                l2_normalize(q.fine().vectors.row(f), fu);
                double coarse_term = 0.0, fine_term = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double r = unit[j] - cu[j];
                    coarse_term += r * r;
                    fine_term += (r - fu[j]) * (r - fu[j]);
                }
                total += (1.0 + beta) * (coarse_term + fine_term);
            }
    return total;
}

CodeUsage code_stats(std::span<const CodeGrid> codes, const ResidualQuantizer& q, std::span<const LatentGrid> latents) {
    if (codes.empty()) fail_data("code_stats needs at least one code grid");
    CodeUsage usage;
    usage.coarse_counts.assign(q.n_coarse(), 0);
    usage.fine_counts.assign(q.n_fine(), 0);
    for (const auto& g : codes) {
        for (CodeIndex c : g.coarse) {
            if (c >= q.n_coarse()) fail_data("coarse index out of range");
            ++usage.coarse_counts[c];
        }
        for (CodeIndex f : g.fine) {
            if (f >= q.n_fine()) fail_data("fine index out of range");
            ++usage.fine_counts[f];
        }
        usage.total += g.coarse.size();
    }
    auto dead_pct = [](const std::vector<std::size_t>& counts) {
        const auto dead = std::count(counts.begin(), counts.end(), std::size_t{0});
        return 100.0 * static_cast<double>(dead) / static_cast<double>(counts.size());
    };
    usage.coarse_dead_pct = dead_pct(usage.coarse_counts);
    usage.fine_dead_pct = dead_pct(usage.fine_counts);

    if (!latents.empty()) {
        if (latents.size() != codes.size()) fail_data("code_stats: latents and codes differ in count");
        const std::size_t dim = q.dim();
        std::vector<double> unit(dim);
        double full = 0.0, coarse_only = 0.0;
        std::size_t elements = 0;
        for (std::size_t g = 0; g < codes.size(); ++g) {
            const LatentGrid both = q.reconstruct(codes[g], ReconstructMode::CoarseAndFine);
            const LatentGrid coarse = q.reconstruct(codes[g], ReconstructMode::CoarseOnly);
            for (std::size_t d = 0; d < both.n_channels(); ++d)
                for (std::size_t t = 0; t < both.n_patches(); ++t) {
                    l2_normalize(latents[g].at(d, t), unit);
                    full += squared_distance(unit, both.at(d, t));
                    coarse_only += squared_distance(unit, coarse.at(d, t));
                    elements += dim;
                }
        }
        usage.recon_mse = full / static_cast<double>(elements);
        usage.coarse_only_mse = coarse_only / static_cast<double>(elements);
    }
    return usage;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const char* what) {
    if (!j.is_array() || j.size() != rows) fail_data(std::string("quantizer bundle: bad ") + what + " shape");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) fail_data(std::string("quantizer bundle: bad ") + what + " row");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

}  // namespace

records::Document quantizer_to_document(const ResidualQuantizer& q, const json& extra_meta) {
    records::Document doc;
    doc.kind = "quantizer";
    doc.meta = extra_meta.is_object() ? extra_meta : json::object();
    const auto& spec = q.embedder().spec();
    json rec = {
        {"version", records::kFormatVersion},
        {"d_dim", q.dim()},
        {"n_c", q.n_coarse()},
        {"n_f", q.n_fine()},
        {"patch_length", q.patch_length()},
        {"embed_mode", to_string(spec.mode)},
        {"seed", spec.seed},
        {"coarse", matrix_to_json(q.coarse().vectors)},
        {"fine", matrix_to_json(q.fine().vectors)},
    };
    doc.records.push_back({0, std::move(rec)});
    return doc;
}

ResidualQuantizer quantizer_from_document(const records::Document& doc) {
    if (doc.records.size() != 1) fail_data("quantizer bundle must contain exactly one record");
    const auto& rec = doc.records.front();
    try {
        if (records::require(rec, "version").get<int>() != records::kFormatVersion)
            fail_data("quantizer bundle: unsupported version");
        const auto d_dim = records::require(rec, "d_dim").get<std::size_t>();
        const auto n_c = records::require(rec, "n_c").get<std::size_t>();
        const auto n_f = records::require(rec, "n_f").get<std::size_t>();
        EmbedSpec spec;
        spec.mode = parse_embed_mode(records::require(rec, "embed_mode").get<std::string>());
        spec.seed = records::require(rec, "seed").get<std::uint64_t>();
        if (spec.mode == EmbedMode::Projection) spec.d_dim = d_dim;
        const auto m = records::require(rec, "patch_length").get<std::size_t>();
        Codebook coarse{matrix_from_json(records::require(rec, "coarse"), n_c, d_dim, "coarse")};
        Codebook fine{matrix_from_json(records::require(rec, "fine"), n_f, d_dim, "fine")};
        return ResidualQuantizer(std::move(coarse), std::move(fine), m, spec);
    } catch (const json::exception& e) {
        fail_data(std::string("quantizer bundle: ") + e.what());
    }
}

}  // namespace codelabel
