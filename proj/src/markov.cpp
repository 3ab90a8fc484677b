#include "codelabel/markov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "codelabel/error.hpp"

namespace codelabel {

using records::json;

TransitionMatrix::TransitionMatrix(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() != probs_.cols()) fail_invariant("transition matrix must be square");
}

TransitionMatrix TransitionMatrix::uniform(std::size_t n) {
    return TransitionMatrix(Matrix(n, n, 1.0 / static_cast<double>(n)));
}

double TransitionMatrix::max_row_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        auto r = row(i);
        worst = std::max(worst, std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0));
    }
    return worst;
}

bool TransitionMatrix::strictly_positive() const {
    return std::all_of(probs_.data().begin(), probs_.data().end(), [](double p) { return p > 0.0; });
}

std::uint64_t TransitionCounts::departures(std::size_t from) const {
    return std::accumulate(counts_.begin() + static_cast<std::ptrdiff_t>(from * n_),
                           counts_.begin() + static_cast<std::ptrdiff_t>((from + 1) * n_), std::uint64_t{0});
}

void TransitionCounts::add_sequence(std::span<const CodeIndex> sequence) {
    if (sequence.size() < 2) fail_data("transition sequences need at least 2 states");
    for (CodeIndex s : sequence)
        if (s >= n_) fail_data("code index " + std::to_string(s) + " out of range for " + std::to_string(n_) + " states");
    for (std::size_t t = 0; t + 1 < sequence.size(); ++t) ++counts_[sequence[t] * n_ + sequence[t + 1]];
}

TransitionCounts& TransitionCounts::operator+=(const TransitionCounts& other) {
    if (other.n_ != n_) fail_invariant("cannot merge transition counts of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

TransitionMatrix TransitionCounts::to_matrix() const {
    Matrix probs(n_, n_);
    for (std::size_t i = 0; i < n_; ++i) {
        const std::uint64_t total = departures(i);
        for (std::size_t j = 0; j < n_; ++j)
            probs(i, j) = total == 0 ? 1.0 / static_cast<double>(n_)
                                     : static_cast<double>((*this)(i, j)) / static_cast<double>(total);
    }
    return TransitionMatrix(std::move(probs));
}

TransitionMatrix estimate_tm(std::span<const std::span<const CodeIndex>> sequences, std::size_t n_states) {
    if (sequences.empty()) fail_data("estimate_tm: no sequences");
    if (n_states == 0) fail_usage("estimate_tm: n_states must be positive");
    TransitionCounts counts(n_states);
    for (auto seq : sequences) counts.add_sequence(seq);
    return counts.to_matrix();
}

TransitionMatrix estimate_tm(const std::vector<std::vector<CodeIndex>>& sequences, std::size_t n_states) {
    std::vector<std::span<const CodeIndex>> views(sequences.begin(), sequences.end());
    return estimate_tm(std::span<const std::span<const CodeIndex>>(views), n_states);
}

TransitionMatrix smooth(const TransitionMatrix& tm, double epsilon) {
    if (!(epsilon > 0.0)) fail_usage("smoothing epsilon must be positive");
    const std::size_t n = tm.size();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = tm.row(i);
        const double denom = std::accumulate(r.begin(), r.end(), 0.0) + static_cast<double>(n) * epsilon;
        for (std::size_t j = 0; j < n; ++j) out(i, j) = (r[j] + epsilon) / denom;
    }
    return TransitionMatrix(std::move(out));
}

ClassChannelTM build_class_tm(std::span<const CodeGrid> codes, std::span<const std::size_t> labels,
                              std::size_t n_classes, std::size_t n_channels, std::size_t n_states) {
    if (codes.size() != labels.size()) fail_data("build_class_tm: codes and labels differ in length");
    std::vector<TransitionCounts> counts(n_classes * n_channels, TransitionCounts(n_states));
    std::vector<std::size_t> per_class(n_classes, 0);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const std::size_t k = labels[i];
        if (k >= n_classes)
            fail_data("label " + std::to_string(k) + " out of range for " + std::to_string(n_classes) + " classes");
        if (codes[i].n_channels != n_channels) fail_data("build_class_tm: channel count mismatch");
        ++per_class[k];
        for (std::size_t d = 0; d < n_channels; ++d) counts[k * n_channels + d].add_sequence(codes[i].coarse_channel(d));
    }
    ClassChannelTM model{n_classes, n_channels, n_states, {}, {}};
    model.tms.reserve(counts.size());
    for (const auto& c : counts) model.tms.push_back(c.to_matrix());
    for (std::size_t k = 0; k < n_classes; ++k)
        if (per_class[k] == 0) model.empty_classes.push_back(k);
    return model;
}

ChannelTM build_channel_tm(std::span<const CodeGrid> codes, std::size_t n_channels, std::size_t n_states) {
    std::vector<TransitionCounts> counts(n_channels, TransitionCounts(n_states));
    for (const auto& g : codes) {
        if (g.n_channels != n_channels) fail_data("build_channel_tm: channel count mismatch");
        for (std::size_t d = 0; d < n_channels; ++d) counts[d].add_sequence(g.coarse_channel(d));
    }
    ChannelTM model{n_channels, n_states, {}};
    for (const auto& c : counts) model.tms.push_back(c.to_matrix());
    return model;
}

ClassChannelTM smooth(const ClassChannelTM& model, double epsilon) {
    ClassChannelTM out = model;
    for (auto& tm : out.tms) tm = smooth(tm, epsilon);
    return out;
}

ChannelTM smooth(const ChannelTM& model, double epsilon) {
    ChannelTM out = model;
    for (auto& tm : out.tms) tm = smooth(tm, epsilon);
    return out;
}

double log_likelihood(std::span<const CodeIndex> sequence, const TransitionMatrix& tm, LikelihoodNorm norm) {
    if (sequence.size() < 2) fail_usage("log_likelihood needs a sequence of length >= 2");
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < sequence.size(); ++t) {
        const CodeIndex from = sequence[t], to = sequence[t + 1];
        if (from >= tm.size() || to >= tm.size()) fail_data("code index out of range in log_likelihood");
        const double p = tm(from, to);
        if (!(p > 0.0))
            fail_data("zero-probability transition " + std::to_string(from) + "->" + std::to_string(to) +
                      "; smooth the transition matrix first");
        sum += std::log(p);
    }
    const double n = norm == LikelihoodNorm::SequenceLength ? static_cast<double>(sequence.size())
                                                            : static_cast<double>(sequence.size() - 1);
    return sum / n;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json tm_to_json(const TransitionMatrix& tm) {
    json rows = json::array();
    for (std::size_t i = 0; i < tm.size(); ++i) rows.push_back(std::vector<double>(tm.row(i).begin(), tm.row(i).end()));
    return rows;
}

TransitionMatrix tm_from_json(const json& j, std::size_t n) {
    if (!j.is_array() || j.size() != n) fail_data("transition bundle: bad matrix shape");
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!j[i].is_array() || j[i].size() != n) fail_data("transition bundle: bad matrix row");
        for (std::size_t k = 0; k < n; ++k) m(i, k) = j[i][k].get<double>();
    }
    TransitionMatrix tm(std::move(m));
    if (tm.max_row_error() > 1e-9) fail_data("transition bundle: matrix is not row-stochastic");
    return tm;
}

json channel_to_json(const ChannelTM& c) {
    json arr = json::array();
    for (const auto& tm : c.tms) arr.push_back(tm_to_json(tm));
    return arr;
}

ChannelTM channel_from_json(const json& j, std::size_t D, std::size_t n) {
    if (!j.is_array() || j.size() != D) fail_data("transition bundle: bad channel TM count");
    ChannelTM c{D, n, {}};
    for (std::size_t d = 0; d < D; ++d) c.tms.push_back(tm_from_json(j[d], n));
    return c;
}

}  // namespace

records::Document transitions_to_document(const TransitionBundle& bundle, const json& extra_meta) {
    records::Document doc;
    doc.kind = "transitions";
    doc.meta = extra_meta.is_object() ? extra_meta : json::object();
    const auto& cl = bundle.class_tms;
    json class_tms = json::array();
    for (std::size_t k = 0; k < cl.n_classes; ++k) {
        json per_channel = json::array();
        for (std::size_t d = 0; d < cl.n_channels; ++d) per_channel.push_back(tm_to_json(cl.at(k, d)));
        class_tms.push_back(std::move(per_channel));
    }
    json rec = {
        {"K", cl.n_classes},
        {"D", cl.n_channels},
        {"n_c", cl.n_states},
        {"epsilon", bundle.epsilon},
        {"class_tms", std::move(class_tms)},
        {"empty_classes", cl.empty_classes},
        {"channel_tms_source", channel_to_json(bundle.source_channel_tms)},
    };
    rec["channel_tms_target"] = bundle.target_channel_tms ? channel_to_json(*bundle.target_channel_tms) : json(nullptr);
    doc.records.push_back({0, std::move(rec)});
    return doc;
}

TransitionBundle transitions_from_document(const records::Document& doc) {
    if (doc.records.size() != 1) fail_data("transition bundle must contain exactly one record");
    const auto& rec = doc.records.front();
    try {
        TransitionBundle b;
        const auto K = records::require(rec, "K").get<std::size_t>();
        const auto D = records::require(rec, "D").get<std::size_t>();
        const auto n = records::require(rec, "n_c").get<std::size_t>();
        b.epsilon = records::require(rec, "epsilon").get<double>();
        const json& cls = records::require(rec, "class_tms");
        if (!cls.is_array() || cls.size() != K) fail_data("transition bundle: bad class TM count");
        b.class_tms = ClassChannelTM{K, D, n, {}, {}};
        for (std::size_t k = 0; k < K; ++k) {
            if (!cls[k].is_array() || cls[k].size() != D) fail_data("transition bundle: bad class TM channel count");
            for (std::size_t d = 0; d < D; ++d) b.class_tms.tms.push_back(tm_from_json(cls[k][d], n));
        }
        if (rec.value.contains("empty_classes"))
            b.class_tms.empty_classes = rec.value["empty_classes"].get<std::vector<std::size_t>>();
        b.source_channel_tms = channel_from_json(records::require(rec, "channel_tms_source"), D, n);
        const json& trg = records::require(rec, "channel_tms_target");
        if (!trg.is_null()) b.target_channel_tms = channel_from_json(trg, D, n);
        return b;
    } catch (const json::exception& e) {
        fail_data(std::string("transition bundle: ") + e.what());
    }
}

}  // namespace codelabel
