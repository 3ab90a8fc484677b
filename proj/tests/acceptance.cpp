// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria (0 = all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "codelabel/pipeline.hpp"

using namespace codelabel;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// 1. Transition counts against a brute-force counter -------------------------
Outcome transition_oracle() {
    const auto t0 = Clock::now();
    oracle::Gen gen(1001);
    std::size_t mismatches = 0, cells = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = gen.index(1, 8);
        std::vector<std::vector<CodeIndex>> seqs(gen.index(1, 5));
        for (auto& s : seqs) s = gen.sequence(n, gen.index(2, 64));
        const auto tm = estimate_tm(seqs, n);
        const auto ref = oracle::brute_tm(seqs, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j, ++cells) mismatches += tm(i, j) != ref[i][j];
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 5.0,
            fmt("200 instances, %zu cells, %zu mismatches, %.3fs (limit 5s)", cells, mismatches, secs)};
}

// 2. Exact transport against enumeration ------------------------------------------
Outcome transport_oracle() {
    const auto t0 = Clock::now();
    oracle::Gen gen(1002);
    auto random_problem = [&](std::size_t n) {
        CostMatrix M{Matrix(n, n)};
        if (gen.coin()) {
            Codebook cb{Matrix(n, 4)};
            for (double& v : cb.vectors.data()) v = gen.normal();
            M = cosine_cost(cb);
        } else {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) M.costs(i, j) = i == j ? 0.0 : gen.uniform(0.0, 2.0);
        }
        return M;
    };
    auto marginal_error = [](const TransportPlan& plan, const std::vector<double>& p, const std::vector<double>& q) {
        double worst = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                s += plan.plan(i, j);
                if (plan.plan(i, j) < 0.0) worst = std::max(worst, -plan.plan(i, j));
            }
            worst = std::max(worst, std::fabs(s - p[i]));
        }
        for (std::size_t j = 0; j < q.size(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) s += plan.plan(i, j);
            worst = std::max(worst, std::fabs(s - q[j]));
        }
        return worst;
    };
    double worst_cost = 0.0, worst_marg = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = gen.index(2, 3);
        const auto M = random_problem(n);
        const auto p = gen.simplex(n, 0.25), q = gen.simplex(n, 0.25);
        const auto plan = solve_emd(p, q, M);
        std::vector<std::vector<double>> rows(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) rows[i][j] = M(i, j);
        worst_cost = std::max(worst_cost, std::fabs(plan.cost - oracle::brute_emd(p, q, rows).cost));
        worst_marg = std::max(worst_marg, marginal_error(plan, p, q));
    }
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = gen.index(2, 8);
        const auto M = random_problem(n);
        const auto p = gen.simplex(n, 0.25), q = gen.simplex(n, 0.25);
        worst_marg = std::max(worst_marg, marginal_error(solve_emd(p, q, M), p, q));
    }
    const double secs = seconds_since(t0);
    return {worst_cost <= 1e-9 && worst_marg <= 1e-9 && secs < 30.0,
            fmt("max |cost - enumeration| %.2e (n<=3, 500 cases), max marginal error %.2e (n<=8, 1000 cases), "
                "%.2fs (limit 30s)",
                worst_cost, worst_marg, secs)};
}

SynthConfig corpus(std::uint64_t seed) {
    SynthConfig c;
    c.seed = seed;
    return c;
}

RunConfig run_defaults(std::uint64_t seed) {
    RunConfig c;
    c.seed = seed;
    return c;
}

// 3. Rank of a noised channel falls as its noise grows ------------------------------
// Ranks for the channel with the highest clean weight, at magnitude 0 and then
// at each magnitude of the sweep.
struct RankSweep {
    int monotone = 0;
    int dropped = 0;
    std::string ranks;
};

RankSweep rank_sweep(const std::vector<double>& magnitudes) {
    RankSweep out;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = generate(corpus(seed));
        const RunConfig cfg = run_defaults(seed);
        const auto model = fit_source(data.source, cfg);
        auto weights_for = [&](const DomainDataset& target) {
            return label_target(model.quantizer, model.transitions, target, cfg).weights.w;
        };
        const auto w0 = weights_for(data.target);
        const std::size_t channel =
            static_cast<std::size_t>(std::max_element(w0.begin(), w0.end()) - w0.begin());
        std::vector<std::size_t> ranks = {weight_ranks(w0)[channel]};
        for (double m : magnitudes)
            ranks.push_back(weight_ranks(weights_for(inject_channel_noise(data.target, channel, m, 5000 + seed)))[channel]);
        bool mono = true;
        for (std::size_t i = 1; i < ranks.size(); ++i) mono = mono && ranks[i] <= ranks[i - 1];
        out.monotone += mono;
        out.dropped += ranks.back() < ranks.front();
        out.ranks += " ";
        for (std::size_t r : ranks) out.ranks += std::to_string(r);
    }
    return out;
}

Outcome noise_rank() {
    const auto t0 = Clock::now();
    // Doubling sweep starting at 0.4, where the added noise moves the channel's
    // transport cost beyond the spread between clean channels at 200 target
    // instances. The sweep from 0.1 stays below that floor for its first
    // steps; it is reported for reference.
    const auto main = rank_sweep({0.4, 0.8, 1.6, 3.2, 6.4});
    const auto low = rank_sweep({0.1, 0.2, 0.4, 0.8, 1.6});
    const double secs = seconds_since(t0);
    return {main.monotone >= 9 && main.dropped == 10 && secs < 120.0,
            fmt("magnitudes 0.4..6.4: non-increasing in %d/10 seeds (need 9), final < initial in %d/10 (need 10), "
                "ranks:%s; [reference, magnitudes 0.1..1.6: non-increasing %d/10, final < initial %d/10]; %.1fs "
                "(limit 120s)",
                main.monotone, main.dropped, main.ranks.c_str(), low.monotone, low.dropped, secs)};
}

MetricReport score(const TargetLabeling& lab, const std::vector<std::size_t>& truth, std::size_t K) {
    std::vector<std::size_t> pred;
    for (const auto& l : lab.labels) pred.push_back(l.label);
    return accuracy_mf1(pred, truth, K);
}

// 4. Pseudo-label quality under amplitude scaling -----------------------------------
Outcome label_quality() {
    const auto t0 = Clock::now();
    double min_acc = 1.0, min_f1 = 1.0, mean_acc = 0.0, mean_f1 = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig sc = corpus(seed);
        sc.target_shift = {{2.5, 0.0}, {0.4, 0.0}, {1.7, 0.0}};
        const auto data = generate(sc);
        const RunConfig cfg = run_defaults(seed);
        const auto model = fit_source(data.source, cfg);
        const auto r = score(label_target(model.quantizer, model.transitions, data.target, cfg), data.target_truth, 4);
        min_acc = std::min(min_acc, r.accuracy);
        min_f1 = std::min(min_f1, r.macro_f1);
        mean_acc += r.accuracy / 10.0;
        mean_f1 += r.macro_f1 / 10.0;
    }
    const double secs = seconds_since(t0);
    return {min_acc >= 0.90 && min_f1 >= 0.88 && secs < 60.0,
            fmt("10 seeds: min accuracy %.3f (need 0.90), min macro-F1 %.3f (need 0.88), mean %.3f / %.3f, %.1fs "
                "(limit 60s)",
                min_acc, min_f1, mean_acc, mean_f1, secs)};
}

// 5. Channel alignment helps when one channel is corrupted --------------------------
Outcome ca_ablation() {
    double on = 0.0, off = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig sc = corpus(seed);
        sc.target_noise = {1.5, 0.0, 0.0};
        const auto data = generate(sc);
        RunConfig cfg = run_defaults(seed);
        const auto model = fit_source(data.source, cfg);
        cfg.use_ca = true;
        on += score(label_target(model.quantizer, model.transitions, data.target, cfg), data.target_truth, 4).accuracy;
        cfg.use_ca = false;
        off += score(label_target(model.quantizer, model.transitions, data.target, cfg), data.target_truth, 4).accuracy;
    }
    on /= 10.0;
    off /= 10.0;
    return {on >= off, fmt("mean accuracy over 10 seeds: with alignment %.3f, without %.3f", on, off)};
}

// 6. Weak supervision through the class prior -----------------------------------------
Outcome weak_supervision() {
    const std::vector<double> probs = {0.7, 0.1, 0.1, 0.1};
    // Moderate shift: regimes half-way to uniform plus noise at half the
    // primitive amplitude. The mild setting is reported for reference only.
    struct Shift {
        double mix, noise;
    };
    auto run = [&](Shift shift, double& with_prior, double& uniform, double& min_share) {
        with_prior = uniform = 0.0;
        min_share = 1.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SynthConfig sc = corpus(seed);
            sc.target_class_probs = probs;
            sc.target_regime_mix = shift.mix;
            sc.target_noise = {shift.noise, shift.noise, shift.noise};
            const auto data = generate(sc);
            RunConfig cfg = run_defaults(seed);
            const auto model = fit_source(data.source, cfg);
            uniform +=
                score(label_target(model.quantizer, model.transitions, data.target, cfg), data.target_truth, 4).accuracy;
            cfg.prior = probs;
            with_prior +=
                score(label_target(model.quantizer, model.transitions, data.target, cfg), data.target_truth, 4).accuracy;
            cfg.tau = 0.01;
            const auto sharp = label_target(model.quantizer, model.transitions, data.target, cfg);
            std::size_t majority = 0;
            for (const auto& l : sharp.labels) majority += l.label == 0;
            min_share = std::min(min_share, static_cast<double>(majority) / static_cast<double>(sharp.labels.size()));
        }
        with_prior /= 10.0;
        uniform /= 10.0;
    };
    double with_prior, uniform, min_share, mild_prior, mild_uniform, mild_share;
    run({0.5, 0.5}, with_prior, uniform, min_share);
    run({0.3, 0.2}, mild_prior, mild_uniform, mild_share);
    return {with_prior >= uniform && min_share >= 0.95,
            fmt("moderate shift (mix 0.5, noise 0.5), mean accuracy: true prior %.3f, uniform %.3f; tau=0.01 "
                "majority share min %.3f (need 0.95) [reference, mild shift (mix 0.3, noise 0.2): prior %.3f, "
                "uniform %.3f]",
                with_prior, uniform, min_share, mild_prior, mild_uniform)};
}

// 7. No dead coarse codes and fine codes reduce error ----------------------------------
Outcome dead_codes() {
    double worst_dead = 0.0;
    int improved = 0;
    double worst_gap = -1e300;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = generate(corpus(seed));
        const auto model = fit_source(data.source, run_defaults(seed));
        worst_dead = std::max(worst_dead, model.usage.coarse_dead_pct);
        improved += *model.usage.recon_mse <= *model.usage.coarse_only_mse;
        worst_gap = std::max(worst_gap, *model.usage.recon_mse - *model.usage.coarse_only_mse);
    }
    return {worst_dead == 0.0 && improved == 10,
            fmt("n_c=8 n_f=64, 10 seeds: max coarse dead %.1f%%, recon <= coarse-only in %d/10 (max gap %.4f)",
                worst_dead, improved, worst_gap)};
}

// 8. Coarse reconstructions are simpler than fine ones ----------------------------------
Outcome pe_trend() {
    int lower = 0;
    double mean_c = 0.0, mean_f = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = generate(corpus(seed));
        const auto model = fit_source(data.source, run_defaults(seed));
        std::vector<CodeGrid> codes;
        for (const auto& inst : data.source.instances) codes.push_back(model.quantizer.encode_instance(inst));
        const auto pe = pe_report(model.quantizer, codes);
        lower += pe.coarse < pe.fine;
        mean_c += pe.coarse / 10.0;
        mean_f += pe.fine / 10.0;
    }
    return {lower >= 9, fmt("PE(coarse) < PE(fine) in %d/10 seeds (need 9); mean %.3f vs %.3f", lower, mean_c, mean_f)};
}

// 9. Byte-identical artifacts across runs and thread counts ---------------------------
std::vector<std::pair<std::string, std::string>> pipeline_files(const fs::path& root, unsigned threads) {
    const fs::path saved = fs::current_path();
    fs::create_directories(root);
    fs::current_path(root);
    SynthRequest req;
    req.config.seed = 77;
    req.out = "data";
    req.corrupt_channel = 1;
    req.corrupt_magnitudes = {0.5, 1.0};
    cmd_synth(req);
    RunConfig cfg;
    cfg.seed = 77;
    cfg.threads = threads;
    cfg.source = "data/source.jsonl";
    cfg.out = "model";
    cmd_fit(cfg);
    cfg.target = "data/target_noise_1.jsonl";
    cfg.model = "model";
    cfg.out = "label";
    cmd_label(cfg);
    cfg.labels = "label/pseudo_labels.jsonl";
    cfg.truth = "data/target_truth.jsonl";
    cfg.subset = "label/top_r.jsonl";
    cfg.out = "eval";
    cmd_eval(cfg);
    fs::current_path(saved);

    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), root).string(), fixture::slurp(e.path()));
    std::sort(files.begin(), files.end());
    return files;
}

Outcome determinism() {
    fixture::TempDir dir("acceptance_det");
    const auto a = pipeline_files(dir / "a", 1);
    const auto b = pipeline_files(dir / "b", 1);
    const auto c = pipeline_files(dir / "c", 4);
    std::size_t differing = 0;
    for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i)
        differing += a[i] != b[i] || a[i] != c[i];
    const bool same = a.size() == b.size() && a.size() == c.size() && differing == 0 && !a.empty();
    return {same, fmt("%zu artifact files per run, %zu differ across runs or thread counts 1/4", a.size(), differing)};
}

// 10. Randomized invariants, >= 1000 cases each -----------------------------------
Outcome invariants() {
    oracle::Gen gen(1010);
    const int cases = 1000;
    int bad_tm = 0, bad_post = 0, bad_w = 0, bad_argmax = 0, bad_amp = 0;

    for (int i = 0; i < cases; ++i) {
        const std::size_t n = gen.index(2, 8), D = gen.index(1, 4), K = gen.index(1, 4);
        std::vector<CodeGrid> grids(gen.index(1, 6));
        std::vector<std::size_t> labels;
        for (auto& g : grids) {
            g = CodeGrid(D, gen.index(2, 20));
            for (auto& c : g.coarse) c = static_cast<CodeIndex>(gen.index(0, n - 1));
            labels.push_back(gen.index(0, K - 1));
        }
        const auto cl = build_class_tm(grids, labels, K, D, n);
        const auto sm = smooth(cl, gen.coin() ? 1e-8 : gen.uniform(1e-12, 0.1));
        const auto ch = smooth(build_channel_tm(grids, D, n));
        bool ok = true;
        auto check = [&](const TransitionMatrix& tm, bool positive) {
            ok = ok && tm.max_row_error() <= 1e-12;
            for (double p : tm.probs().data()) ok = ok && p >= 0.0 && p <= 1.0 && (!positive || p > 0.0);
        };
        for (const auto& tm : cl.tms) check(tm, false);
        for (const auto& tm : sm.tms) check(tm, true);
        for (const auto& tm : ch.tms) check(tm, true);
        bad_tm += !ok;
    }

    for (int i = 0; i < cases; ++i) {
        const std::size_t K = gen.index(1, 8);
        std::vector<double> ll(K);
        const double scale = gen.coin(0.3) ? 1e4 : 10.0;
        for (auto& v : ll) v = -gen.uniform(0.0, scale);
        const auto prior = gen.coin() ? LabelPrior::uniform(K, gen.uniform(0.01, 10.0))
                                      : LabelPrior::from_probs(gen.simplex(K, 0.3), gen.uniform(0.01, 10.0));
        const auto post = channel_posterior(ll, prior);
        double s = 0.0;
        bool ok = post.size() == K;
        for (double p : post) {
            ok = ok && std::isfinite(p) && p >= 0.0 && p <= 1.0;
            s += p;
        }
        bad_post += !(ok && std::fabs(s - 1.0) <= 1e-12);
    }

    for (int i = 0; i < cases; ++i) {
        const std::size_t n = gen.index(2, 8), D = gen.index(1, 4);
        Codebook cb{Matrix(n, gen.index(2, 8))};
        for (double& v : cb.vectors.data()) v = gen.normal();
        const auto M = cosine_cost(cb);
        std::vector<CodeGrid> src(3), trg(3);
        for (auto* set : {&src, &trg})
            for (auto& g : *set) {
                g = CodeGrid(D, gen.index(2, 30));
                for (auto& c : g.coarse) c = static_cast<CodeIndex>(gen.index(0, n - 1));
            }
        const double sigma = std::exp(gen.uniform(std::log(1e-3), std::log(10.0)));
        const auto w = channel_weights(smooth(build_channel_tm(src, D, n)), smooth(build_channel_tm(trg, D, n)), M,
                                       sigma, gen.coin() ? 1 : 3);
        bool ok = w.w.size() == D;
        for (double x : w.w) ok = ok && x > 0.0 && x <= 1.0;
        bad_w += !ok;
    }

    for (int i = 0; i < cases; ++i) {
        const std::size_t D = gen.index(1, 5), K = gen.index(2, 6);
        Matrix post(D, K);
        for (std::size_t d = 0; d < D; ++d) {
            const auto p = gen.simplex(K);
            std::copy(p.begin(), p.end(), post.row(d).begin());
        }
        std::vector<double> w(D), scaled(D);
        const double c = std::exp(gen.uniform(std::log(1e-3), std::log(1e3)));
        for (std::size_t d = 0; d < D; ++d) {
            w[d] = gen.uniform(1e-6, 1.0);
            scaled[d] = c * w[d];
        }
        bad_argmax += aggregate(post, w).label != aggregate(post, scaled).label;
    }

    {
        SynthConfig sc = corpus(1010);
        sc.n_source = 100;
        sc.n_target = cases;
        const auto data = generate(sc);
        const auto model = fit_source(data.source, run_defaults(1010));
        for (const auto& inst : data.target.instances) {
            TimeSeriesInstance shifted = inst;
            for (std::size_t d = 0; d < inst.n_channels(); ++d) {
                const double a = gen.uniform(0.5, 5.0), b = gen.uniform(-5.0, 5.0);
                for (std::size_t t = 0; t < inst.length(); ++t) shifted.values(d, t) = a * inst.values(d, t) + b;
            }
            bad_amp += model.quantizer.encode_instance(shifted) != model.quantizer.encode_instance(inst);
        }
    }

    const bool pass = bad_tm + bad_post + bad_w + bad_argmax + bad_amp == 0;
    return {pass, fmt("%d cases each; violations: row-stochastic %d, posterior simplex %d, w in (0,1] %d, argmax "
                      "under rescaling %d, amplitude invariance %d",
                      cases, bad_tm, bad_post, bad_w, bad_argmax, bad_amp)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"transition-count oracle", transition_oracle},
        {"optimal transport oracle", transport_oracle},
        {"noised channel rank", noise_rank},
        {"pseudo-label quality", label_quality},
        {"channel alignment ablation", ca_ablation},
        {"class prior (weak supervision)", weak_supervision},
        {"dead codes and reconstruction", dead_codes},
        {"permutation entropy trend", pe_trend},
        {"determinism", determinism},
        {"invariant suite", invariants},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
