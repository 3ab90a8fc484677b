#include "codelabel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "codelabel/error.hpp"

namespace codelabel {

using records::json;

std::vector<double> primitive_shape(Primitive p, std::size_t patch_length, double sine_frequency) {
    std::vector<double> s(patch_length);
    const double span = static_cast<double>(patch_length - 1);
    for (std::size_t t = 0; t < patch_length; ++t) {
        const double u = static_cast<double>(t) / span;
        switch (p) {
            case Primitive::UpRamp: s[t] = 2.0 * u - 1.0; break;
            case Primitive::DownRamp: s[t] = 1.0 - 2.0 * u; break;
            case Primitive::Flat: s[t] = 0.0; break;
            case Primitive::Sine:
                s[t] = std::sin(2.0 * std::numbers::pi * sine_frequency * static_cast<double>(t) /
                                static_cast<double>(patch_length));
                break;
            case Primitive::Peak: s[t] = 1.0 - 2.0 * std::abs(2.0 * u - 1.0); break;
            case Primitive::Valley: s[t] = 2.0 * std::abs(2.0 * u - 1.0) - 1.0; break;
        }
    }
    return s;
}

void SynthConfig::validate() const {
    if (n_classes == 0 || n_channels == 0) fail_usage("synth: K and D must be positive");
    if (patch_length < 2) fail_usage("synth: patch length must be >= 2");
    if (length < 2 * patch_length || length % patch_length != 0)
        fail_usage("synth: length must be a multiple of the patch length with at least two patches");
    if (n_primitives < 2 || n_primitives > kMaxPrimitives)
        fail_usage("synth: n_primitives must lie in [2, " + std::to_string(kMaxPrimitives) + "]");
    if (n_source == 0) fail_usage("synth: n_source must be positive");
    if (n_target == 0) fail_usage("synth: n_target must be positive");
    if (base_noise < 0.0) fail_usage("synth: base_noise must be >= 0");
    if (target_regime_mix < 0.0 || target_regime_mix > 1.0) fail_usage("synth: target_regime_mix must lie in [0, 1]");
    if (regime_strength < 0.0 || regime_strength > 1.0) fail_usage("synth: regime_strength must lie in [0, 1]");
    if (!target_shift.empty() && target_shift.size() != n_channels)
        fail_usage("synth: target_shift needs one entry per channel");
    for (const auto& s : target_shift)
        if (!(s.scale > 0.0)) fail_usage("synth: target amplitude scale must be positive");
    if (!target_noise.empty() && target_noise.size() != n_channels)
        fail_usage("synth: target_noise needs one entry per channel");
    for (double v : target_noise)
        if (v < 0.0) fail_usage("synth: noise magnitudes must be >= 0");
    auto check_probs = [&](const std::vector<double>& probs, const char* name) {
        if (probs.empty()) return;
        if (probs.size() != n_classes) fail_usage(std::string("synth: ") + name + " needs K entries");
        double sum = 0.0;
        for (double p : probs) {
            if (p < 0.0) fail_usage(std::string("synth: ") + name + " has a negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) fail_usage(std::string("synth: ") + name + " must sum to 1");
    };
    check_probs(source_class_probs, "source_class_probs");
    check_probs(target_class_probs, "target_class_probs");
    if (!class_regimes.empty()) {
        if (class_regimes.size() != n_classes * n_channels)
            fail_usage("synth: class_regimes needs K * D matrices");
        for (const auto& r : class_regimes) {
            if (r.rows() != n_primitives || r.cols() != n_primitives)
                fail_usage("synth: invalid regime matrix: expected " + std::to_string(n_primitives) + " square");
            for (std::size_t i = 0; i < r.rows(); ++i) {
                double sum = 0.0;
                for (double p : r.row(i)) {
                    if (!(p >= 0.0)) fail_usage("synth: invalid regime matrix: negative entry");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-9) fail_usage("synth: invalid regime matrix: row does not sum to 1");
            }
        }
    }
}

std::vector<Matrix> separable_regimes(std::size_t n_classes, std::size_t n_channels, std::size_t n_primitives,
                                      double strength, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Matrix> regimes(n_classes * n_channels);
    const double rest = n_primitives > 1 ? (1.0 - strength) / static_cast<double>(n_primitives - 1) : 0.0;
    for (std::size_t d = 0; d < n_channels; ++d) {
        // Latin square: succ_k(i) = col[(row[i] + k) mod P], so every state has
        // a different dominant successor in every class while k < P.
        std::vector<std::size_t> row(n_primitives), col(n_primitives);
        std::iota(row.begin(), row.end(), std::size_t{0});
        std::iota(col.begin(), col.end(), std::size_t{0});
        std::shuffle(row.begin(), row.end(), rng);
        std::shuffle(col.begin(), col.end(), rng);
        std::set<std::vector<std::size_t>> used;
        for (std::size_t k = 0; k < n_classes; ++k) {
            std::vector<std::size_t> succ(n_primitives);
            if (k < n_primitives) {
                for (std::size_t i = 0; i < n_primitives; ++i) succ[i] = col[(row[i] + k) % n_primitives];
            } else {
                std::iota(succ.begin(), succ.end(), std::size_t{0});
                for (int attempt = 0; attempt < 1000; ++attempt) {
                    std::shuffle(succ.begin(), succ.end(), rng);
                    if (!used.contains(succ)) break;
                }
            }
            used.insert(succ);
            Matrix r(n_primitives, n_primitives, rest);
            for (std::size_t i = 0; i < n_primitives; ++i) r(i, succ[i]) = strength;
            regimes[k * n_channels + d] = std::move(r);
        }
    }
    return regimes;
}

namespace {

std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        x -= probs[i];
        if (x < 0.0) return i;
    }
    // Rounding fell through: last entry with positive mass.
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct DomainSpec {
    DomainRole role;
    std::size_t count;
    const std::vector<double>* class_probs;
    const std::vector<Matrix>* regimes;
    bool is_target;
};

DomainDataset generate_domain(const SynthConfig& cfg, const DomainSpec& spec, std::uint64_t seed,
                              std::vector<std::size_t>& labels_out) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> amp_dist(0.5, 1.5);
    std::uniform_real_distribution<double> level_dist(-1.0, 1.0);

    const std::size_t m = cfg.patch_length;
    const std::size_t N = cfg.length / m;
    std::vector<std::vector<double>> shapes;
    for (std::size_t p = 0; p < cfg.n_primitives; ++p)
        shapes.push_back(primitive_shape(static_cast<Primitive>(p), m, cfg.sine_frequency));
    const std::vector<double> start(cfg.n_primitives, 1.0 / static_cast<double>(cfg.n_primitives));

    DomainDataset ds;
    ds.role = spec.role;
    ds.n_channels = cfg.n_channels;
    ds.length = cfg.length;
    ds.n_classes = cfg.n_classes;
    labels_out.clear();
    const std::string prefix = spec.is_target ? "trg-" : "src-";
    for (std::size_t n = 0; n < spec.count; ++n) {
        const std::size_t k = spec.class_probs->empty() ? n % cfg.n_classes : sample_categorical(*spec.class_probs, rng);
        TimeSeriesInstance inst;
        char id[32];
        std::snprintf(id, sizeof(id), "%s%06zu", prefix.c_str(), n);
        inst.id = id;
        inst.values = Matrix(cfg.n_channels, cfg.length);
        for (std::size_t d = 0; d < cfg.n_channels; ++d) {
            const Matrix& regime = (*spec.regimes)[k * cfg.n_channels + d];
            const double amp = amp_dist(rng);
            const double level = level_dist(rng);
            std::size_t prim = sample_categorical(start, rng);
            auto row = inst.values.row(d);
            for (std::size_t t = 0; t < N; ++t) {
                if (t > 0) prim = sample_categorical(regime.row(prim), rng);
                for (std::size_t s = 0; s < m; ++s)
                    row[t * m + s] = level + amp * shapes[prim][s] + cfg.base_noise * gauss(rng);
            }
            if (spec.is_target) {
                const ChannelShift shift = cfg.target_shift.empty() ? ChannelShift{} : cfg.target_shift[d];
                const double noise = cfg.target_noise.empty() ? 0.0 : cfg.target_noise[d];
                for (auto& v : row) {
                    v = shift.scale * v + shift.offset;
                    if (noise > 0.0) v += noise * gauss(rng);
                }
            }
        }
        if (!spec.is_target) inst.label = k;
        labels_out.push_back(k);
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

}  // namespace

SynthOutput generate(const SynthConfig& config) {
    config.validate();
    std::vector<Matrix> regimes = config.class_regimes.empty()
                                      ? separable_regimes(config.n_classes, config.n_channels, config.n_primitives,
                                                          config.regime_strength, mix_seed(config.seed, 0))
                                      : config.class_regimes;
    std::vector<Matrix> target_regimes = regimes;
    if (config.target_regime_mix > 0.0) {
        const double u = 1.0 / static_cast<double>(config.n_primitives);
        for (auto& r : target_regimes)
            for (double& p : r.data()) p = (1.0 - config.target_regime_mix) * p + config.target_regime_mix * u;
    }
    SynthOutput out;
    std::vector<std::size_t> source_labels;
    out.source = generate_domain(config,
                                 {DomainRole::Source, config.n_source, &config.source_class_probs, &regimes, false},
                                 mix_seed(config.seed, 1), source_labels);
    out.target = generate_domain(
        config, {DomainRole::Target, config.n_target, &config.target_class_probs, &target_regimes, true},
        mix_seed(config.seed, 2), out.target_truth);
    return out;
}

DomainDataset inject_channel_noise(const DomainDataset& dataset, std::size_t channel, double magnitude,
                                   std::uint64_t seed) {
    if (channel >= dataset.n_channels)
        fail_usage("channel " + std::to_string(channel) + " out of range for " + std::to_string(dataset.n_channels) +
                   " channels");
    if (magnitude < 0.0) fail_usage("noise magnitude must be >= 0");
    DomainDataset out = dataset;
    if (magnitude == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& inst : out.instances)
        for (double& v : inst.values.row(channel)) v += magnitude * gauss(rng);
    return out;
}

// ---------------------------------------------------------------------------
// JSON

json synth_config_to_json(const SynthConfig& c) {
    json j = {
        {"n_classes", c.n_classes},
        {"n_channels", c.n_channels},
        {"length", c.length},
        {"patch_length", c.patch_length},
        {"n_primitives", c.n_primitives},
        {"sine_frequency", c.sine_frequency},
        {"regime_strength", c.regime_strength},
        {"base_noise", c.base_noise},
        {"target_noise", c.target_noise},
        {"target_regime_mix", c.target_regime_mix},
        {"source_class_probs", c.source_class_probs},
        {"target_class_probs", c.target_class_probs},
        {"n_source", c.n_source},
        {"n_target", c.n_target},
        {"seed", c.seed},
    };
    json shift = json::array();
    for (const auto& s : c.target_shift) shift.push_back({{"scale", s.scale}, {"offset", s.offset}});
    j["target_shift"] = std::move(shift);
    json regimes = json::array();
    for (const auto& r : c.class_regimes) {
        json rows = json::array();
        for (std::size_t i = 0; i < r.rows(); ++i) rows.push_back(std::vector<double>(r.row(i).begin(), r.row(i).end()));
        regimes.push_back(std::move(rows));
    }
    j["class_regimes"] = std::move(regimes);
    return j;
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c;
    try {
        c.n_classes = j.value("n_classes", c.n_classes);
        c.n_channels = j.value("n_channels", c.n_channels);
        c.length = j.value("length", c.length);
        c.patch_length = j.value("patch_length", c.patch_length);
        c.n_primitives = j.value("n_primitives", c.n_primitives);
        c.sine_frequency = j.value("sine_frequency", c.sine_frequency);
        c.regime_strength = j.value("regime_strength", c.regime_strength);
        c.base_noise = j.value("base_noise", c.base_noise);
        c.target_noise = j.value("target_noise", c.target_noise);
        c.target_regime_mix = j.value("target_regime_mix", c.target_regime_mix);
        c.source_class_probs = j.value("source_class_probs", c.source_class_probs);
        c.target_class_probs = j.value("target_class_probs", c.target_class_probs);
        c.n_source = j.value("n_source", c.n_source);
        c.n_target = j.value("n_target", c.n_target);
        c.seed = j.value("seed", c.seed);
        if (j.contains("target_shift"))
            for (const auto& s : j["target_shift"])
                c.target_shift.push_back({s.value("scale", 1.0), s.value("offset", 0.0)});
        if (j.contains("class_regimes"))
            for (const auto& r : j["class_regimes"]) {
                Matrix m(r.size(), r.empty() ? 0 : r[0].size());
                for (std::size_t i = 0; i < m.rows(); ++i) {
                    if (r[i].size() != m.cols()) fail_usage("synth: invalid regime matrix: ragged rows");
                    for (std::size_t k = 0; k < m.cols(); ++k) m(i, k) = r[i][k].get<double>();
                }
                c.class_regimes.push_back(std::move(m));
            }
    } catch (const json::exception& e) {
        fail_usage(std::string("synth config: ") + e.what());
    }
    return c;
}

records::Document truth_to_document(const DomainDataset& target, const std::vector<std::size_t>& truth,
                                    const json& extra_meta) {
    if (truth.size() != target.size()) fail_invariant("truth labels and target instances differ in count");
    records::Document doc;
    doc.kind = "truth";
    doc.meta = extra_meta.is_object() ? extra_meta : json::object();
    doc.meta["n_classes"] = target.n_classes;
    for (std::size_t i = 0; i < truth.size(); ++i)
        doc.records.push_back({0, {{"id", target.instances[i].id}, {"label", truth[i]}}});
    return doc;
}

}  // namespace codelabel
