#include "codelabel/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "codelabel/error.hpp"

namespace codelabel {

MetricReport accuracy_mf1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::size_t n_classes) {
    if (predicted.size() != truth.size())
        fail_data("accuracy_mf1: " + std::to_string(predicted.size()) + " predictions for " +
                  std::to_string(truth.size()) + " labels");
    if (truth.empty()) fail_data("accuracy_mf1: no samples");
    if (n_classes == 0) fail_usage("accuracy_mf1: K must be positive");
    std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::size_t y = truth[i], yhat = predicted[i];
        if (y >= n_classes || yhat >= n_classes) fail_data("accuracy_mf1: label out of range");
        if (y == yhat) {
            ++correct;
            ++tp[y];
        } else {
            ++fp[yhat];
            ++fn[y];
        }
    }
    MetricReport r;
    r.n = truth.size();
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
    r.per_class_f1.resize(n_classes);
    for (std::size_t k = 0; k < n_classes; ++k) {
        // 2PR/(P+R) == 2TP/(2TP+FP+FN); zero when undefined.
        const double denom = 2.0 * static_cast<double>(tp[k]) + static_cast<double>(fp[k] + fn[k]);
        r.per_class_f1[k] = tp[k] == 0 ? 0.0 : 2.0 * static_cast<double>(tp[k]) / denom;
    }
    r.macro_f1 = std::accumulate(r.per_class_f1.begin(), r.per_class_f1.end(), 0.0) / static_cast<double>(n_classes);
    return r;
}

double permutation_entropy(std::span<const double> series, std::size_t order, std::size_t delay) {
    if (order < 2) fail_usage("permutation entropy order must be >= 2");
    if (delay < 1) fail_usage("permutation entropy delay must be >= 1");
    if (series.size() < order * delay + 1)
        fail_data("series too short for permutation entropy: need " + std::to_string(order * delay + 1) + " values");

    std::size_t n_patterns = 1;
    for (std::size_t k = 2; k <= order; ++k) n_patterns *= k;
    std::vector<std::size_t> counts(n_patterns, 0);
    const std::size_t windows = series.size() - (order - 1) * delay;
    std::vector<std::size_t> idx(order);
    for (std::size_t s = 0; s < windows; ++s) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return series[s + a * delay] < series[s + b * delay]; });
        // Lehmer code of the permutation.
        std::size_t code = 0;
        for (std::size_t i = 0; i < order; ++i) {
            std::size_t smaller = 0;
            for (std::size_t j = i + 1; j < order; ++j)
                if (idx[j] < idx[i]) ++smaller;
            code = code * (order - i) + smaller;
        }
        ++counts[code];
    }
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(windows);
        h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(n_patterns));
}

PeReport pe_report(const ResidualQuantizer& q, std::span<const CodeGrid> codes, std::size_t order, std::size_t delay) {
    if (codes.empty()) fail_data("pe_report: no code grids");
    PeReport r;
    std::size_t series_count = 0;
    const std::size_t dim = q.dim();
    for (const auto& g : codes) {
        const LatentGrid coarse = q.reconstruct(g, ReconstructMode::CoarseOnly);
        const LatentGrid fine = q.reconstruct(g, ReconstructMode::FineOnly);
        std::vector<double> cs(g.n_patches * dim), fs(g.n_patches * dim);
        for (std::size_t d = 0; d < g.n_channels; ++d) {
            for (std::size_t t = 0; t < g.n_patches; ++t) {
                std::copy_n(coarse.at(d, t).begin(), dim, cs.begin() + static_cast<std::ptrdiff_t>(t * dim));
                std::copy_n(fine.at(d, t).begin(), dim, fs.begin() + static_cast<std::ptrdiff_t>(t * dim));
            }
            r.coarse += permutation_entropy(cs, order, delay);
            r.fine += permutation_entropy(fs, order, delay);
            ++series_count;
        }
    }
    r.coarse /= static_cast<double>(series_count);
    r.fine /= static_cast<double>(series_count);
    return r;
}

std::vector<std::size_t> weight_ranks(std::span<const double> weights) {
    std::vector<std::size_t> ranks(weights.size(), 0);
    for (std::size_t d = 0; d < weights.size(); ++d)
        for (double other : weights)
            if (other < weights[d]) ++ranks[d];
    return ranks;
}

std::string metric_report_text(const MetricReport& report, const std::string& label, const std::string& provenance) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "subset\tn\taccuracy\tmacro_f1";
    for (std::size_t k = 0; k < report.per_class_f1.size(); ++k) out << "\tf1_" << k;
    out << '\n' << label << '\t' << report.n << '\t' << report.accuracy << '\t' << report.macro_f1;
    for (double f : report.per_class_f1) out << '\t' << f;
    out << '\n';
    return out.str();
}

records::json metric_report_json(const MetricReport& report) {
    return {{"n", report.n},
            {"accuracy", report.accuracy},
            {"macro_f1", report.macro_f1},
            {"per_class_f1", report.per_class_f1}};
}

}  // namespace codelabel
