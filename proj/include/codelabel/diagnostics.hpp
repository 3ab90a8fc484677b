#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "codelabel/records.hpp"
#include "codelabel/rvq.hpp"

namespace codelabel {

struct MetricReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;  // 0 for classes with P + R = 0
    std::size_t n = 0;
};

// Macro-F1 averages over all K classes, including classes absent from both
// lists. Throws Error(Data) on a length mismatch or a label >= K.
MetricReport accuracy_mf1(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                          std::size_t n_classes);

// Bandt-Pompe permutation entropy normalised by ln(order!). Equal values are
// ranked earlier-index-first. Requires series.size() >= order * delay + 1.
double permutation_entropy(std::span<const double> series, std::size_t order = 3, std::size_t delay = 1);

struct PeReport {
    double coarse = 0.0;  // mean PE of coarse-only reconstructions
    double fine = 0.0;    // mean PE of fine-code reconstructions
};

// Rebuilds each channel as the concatenation of its per-patch code vectors
// (coarse e_c, or fine e_f) and averages PE over all (instance, channel).
PeReport pe_report(const ResidualQuantizer& q, std::span<const CodeGrid> codes, std::size_t order = 3,
                   std::size_t delay = 1);

// rank[d] = number of channels with strictly smaller weight (0 = lowest).
std::vector<std::size_t> weight_ranks(std::span<const double> weights);

std::string metric_report_text(const MetricReport& report, const std::string& label,
                               const std::string& provenance = {});
records::json metric_report_json(const MetricReport& report);

}  // namespace codelabel
