#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "codelabel/diagnostics.hpp"
#include "codelabel/error.hpp"
#include "codelabel/transport.hpp"

using namespace codelabel;

namespace {

CostMatrix random_cost(oracle::Gen& gen, std::size_t n) {
    CostMatrix M{Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) M.costs(i, j) = i == j ? 0.0 : gen.uniform(0.0, 2.0);
    return M;
}

std::vector<std::vector<double>> as_rows(const CostMatrix& M) {
    std::vector<std::vector<double>> r(M.rows(), std::vector<double>(M.cols()));
    for (std::size_t i = 0; i < M.rows(); ++i)
        for (std::size_t j = 0; j < M.cols(); ++j) r[i][j] = M(i, j);
    return r;
}

void check_marginals(const TransportPlan& plan, const std::vector<double>& p, const std::vector<double>& q) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            CHECK(plan.plan(i, j) >= 0.0);
            s += plan.plan(i, j);
        }
        CHECK(std::fabs(s - p[i]) <= 1e-9);
    }
    for (std::size_t j = 0; j < q.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += plan.plan(i, j);
        CHECK(std::fabs(s - q[j]) <= 1e-9);
    }
}

}  // namespace

TEST_CASE("hand-worked transport problems") {
    CostMatrix M{Matrix(2, 2)};
    M.costs(0, 1) = 1.0, M.costs(1, 0) = 1.0;
    const std::vector<double> p = {1.0, 0.0}, q = {0.0, 1.0};
    const auto plan = solve_emd(p, q, M);
    CHECK(plan.cost == doctest::Approx(1.0));
    CHECK(plan.plan(0, 1) == doctest::Approx(1.0));

    const std::vector<double> same = {0.3, 0.7};
    CHECK(solve_emd(same, same, M).cost == doctest::Approx(0.0).epsilon(1e-15));

    // Mass 0.2 has to move from state 0 to state 2; via the cheap path it costs 0.2 * 0.5.
    CostMatrix L{Matrix(3, 3)};
    const double c[3][3] = {{0, 1, 0.5}, {1, 0, 1}, {0.5, 1, 0}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) L.costs(i, j) = c[i][j];
    const std::vector<double> a = {0.5, 0.3, 0.2}, b = {0.3, 0.3, 0.4};
    CHECK(solve_emd(a, b, L).cost == doctest::Approx(0.1));
}

TEST_CASE("transport agrees with enumeration of basic feasible solutions") {
    oracle::Gen gen(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = gen.index(2, 3);
        const auto M = random_cost(gen, n);
        const auto p = gen.simplex(n, 0.3), q = gen.simplex(n, 0.3);
        const auto plan = solve_emd(p, q, M);
        const auto ref = oracle::brute_emd(p, q, as_rows(M));
        REQUIRE(ref.feasible_bases > 0);
        CHECK(std::fabs(plan.cost - ref.cost) <= 1e-9);
        check_marginals(plan, p, q);
        CHECK(plan.min_reduced_cost >= -1e-9);
    }
}

TEST_CASE("larger problems keep exact marginals and certify optimality") {
    oracle::Gen gen(22);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = gen.index(4, 8);
        const auto M = random_cost(gen, n);
        const auto p = gen.simplex(n, 0.4), q = gen.simplex(n, 0.4);
        const auto plan = solve_emd(p, q, M);
        check_marginals(plan, p, q);
        CHECK(plan.min_reduced_cost >= -1e-9);
        // No cheaper plan among the trivial ones: independent coupling.
        double indep = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) indep += p[i] * q[j] * M(i, j);
        CHECK(plan.cost <= indep + 1e-12);
    }
}

TEST_CASE("transport rejects invalid marginals") {
    CostMatrix M{Matrix(2, 2)};
    const std::vector<double> bad_sum = {0.5, 0.4}, neg = {1.2, -0.2}, ok = {0.5, 0.5};
    CHECK_THROWS_AS(solve_emd(bad_sum, ok, M), Error);
    CHECK_THROWS_AS(solve_emd(neg, ok, M), Error);
    const std::vector<double> three = {0.2, 0.3, 0.5};
    CHECK_THROWS_AS(solve_emd(three, ok, M), Error);
}

TEST_CASE("cosine cost matrix") {
    Codebook cb{Matrix(3, 2)};
    cb.vectors(0, 0) = 1;
    cb.vectors(1, 1) = 2;
    cb.vectors(2, 0) = -3;
    const auto M = cosine_cost(cb);
    CHECK(M(0, 0) == 0.0);
    CHECK(M(0, 1) == doctest::Approx(1.0));
    CHECK(M(0, 2) == doctest::Approx(2.0));
    CHECK(M(2, 0) == M(0, 2));
    cb.vectors(1, 1) = 0.0;
    CHECK_THROWS_AS(cosine_cost(cb), Error);
}

TEST_CASE("alignment weights") {
    CHECK(alignment_score(0.0, 0.2) == 1.0);
    CHECK(alignment_score(0.2, 0.2) == doctest::Approx(std::exp(-1.0)));
    CHECK(alignment_score(50.0, 0.2) > 0.0);
    CHECK(alignment_score(50.0, 0.2) == std::numeric_limits<double>::min());

    ChannelTM src, trg;
    src.n_channels = trg.n_channels = 2;
    src.n_states = trg.n_states = 2;
    Matrix id(2, 2);
    id(0, 0) = id(1, 1) = 1.0;
    Matrix swap(2, 2);
    swap(0, 1) = swap(1, 0) = 1.0;
    src.tms = {TransitionMatrix(id), TransitionMatrix(id)};
    trg.tms = {TransitionMatrix(id), TransitionMatrix(swap)};
    CostMatrix M{Matrix(2, 2)};
    M.costs(0, 1) = M.costs(1, 0) = 0.1;
    const auto w = channel_weights(src, trg, M, 0.2, 2);
    CHECK(w.mean_cost[0] == doctest::Approx(0.0));
    CHECK(w.mean_cost[1] == doctest::Approx(0.1));
    CHECK(w.w[0] == doctest::Approx(1.0));
    CHECK(w.w[1] == doctest::Approx(std::exp(-0.25)));
    const auto serial = channel_weights(src, trg, M, 0.2, 1);
    CHECK(serial.w == w.w);

    const auto report = alignment_report(w, "probe");
    CHECK(report.find("# probe") == 0);
    CHECK(report.find("channel\tmean_cost\tweight\trank") != std::string::npos);
    CHECK(weight_ranks(w.w) == std::vector<std::size_t>{1, 0});

    const auto u = uniform_channel_weights(3, 0.2);
    CHECK(u.w == std::vector<double>(3, 1.0));
}
