#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "codelabel/error.hpp"
#include "codelabel/markov.hpp"

using namespace codelabel;

TEST_CASE("estimate_tm matches a brute-force counter") {
    oracle::Gen gen(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = gen.index(1, 6);
        std::vector<std::vector<CodeIndex>> seqs(gen.index(1, 4));
        for (auto& s : seqs) s = gen.sequence(n, gen.index(2, 20));
        const auto tm = estimate_tm(seqs, n);
        const auto ref = oracle::brute_tm(seqs, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) CHECK(tm(i, j) == ref[i][j]);
    }
}

TEST_CASE("worked transition example") {
    const std::vector<std::vector<CodeIndex>> seqs = {{0, 1, 1, 0, 1}};
    const auto tm = estimate_tm(seqs, 3);
    CHECK(tm(0, 1) == 1.0);
    CHECK(tm(1, 0) == 0.5);
    CHECK(tm(1, 1) == 0.5);
    for (std::size_t j = 0; j < 3; ++j) CHECK(tm(2, j) == doctest::Approx(1.0 / 3.0));
    // 4 transitions over N = 5 codes.
    const auto s = smooth(tm, 1e-8);
    const double expected = (std::log(s(0, 1)) + std::log(s(1, 1)) + std::log(s(1, 0)) + std::log(s(0, 1))) / 5.0;
    CHECK(log_likelihood(seqs[0], s) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(log_likelihood(seqs[0], s, LikelihoodNorm::TransitionCount) ==
          doctest::Approx(expected * 5.0 / 4.0).epsilon(1e-14));
}

TEST_CASE("counts are additive and validate input") {
    TransitionCounts a(3), b(3), both(3);
    const std::vector<CodeIndex> s1 = {0, 1, 2}, s2 = {2, 2, 0};
    a.add_sequence(s1);
    b.add_sequence(s2);
    both.add_sequence(s1);
    both.add_sequence(s2);
    a += b;
    CHECK(a == both);
    CHECK(a.departures(2) == 2);
    const std::vector<CodeIndex> short_seq = {1}, bad = {0, 3};
    CHECK_THROWS_AS(a.add_sequence(short_seq), Error);
    CHECK_THROWS_AS(a.add_sequence(bad), Error);
    CHECK_THROWS_AS(estimate_tm(std::vector<std::vector<CodeIndex>>{}, 3), Error);
}

TEST_CASE("smoothing keeps rows stochastic and strictly positive") {
    oracle::Gen gen(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = gen.index(2, 8);
        std::vector<std::vector<CodeIndex>> seqs = {gen.sequence(n, gen.index(2, 10))};
        const auto s = smooth(estimate_tm(seqs, n), gen.coin() ? 1e-8 : 1e-3);
        CHECK(s.strictly_positive());
        CHECK(s.max_row_error() <= 1e-12);
    }
    // (p + eps) / (1 + n eps) on an exact row.
    Matrix m(2, 2);
    m(0, 0) = 1.0, m(1, 0) = 0.25, m(1, 1) = 0.75;
    const auto s = smooth(TransitionMatrix(m), 0.1);
    CHECK(s(0, 1) == doctest::Approx(0.1 / 1.2));
    CHECK(s(1, 1) == doctest::Approx(0.85 / 1.2));
}

TEST_CASE("unsmoothed zero-probability transition is a data error") {
    Matrix m(2, 2);
    m(0, 0) = 1.0, m(1, 1) = 1.0;
    const TransitionMatrix tm(m);
    const std::vector<CodeIndex> seq = {0, 1};
    try {
        log_likelihood(seq, tm);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
    }
    const std::vector<CodeIndex> one = {0};
    CHECK_THROWS_AS(log_likelihood(one, tm), Error);
}

TEST_CASE("class and channel models") {
    CodeGrid a(2, 3), b(2, 3);
    a.coarse = {0, 1, 0, 1, 1, 1};
    b.coarse = {1, 1, 1, 0, 0, 0};
    const std::vector<CodeGrid> codes = {a, b};
    const std::vector<std::size_t> labels = {0, 0};
    const auto cl = build_class_tm(codes, labels, 2, 2, 2);
    CHECK(cl.empty_classes == std::vector<std::size_t>{1});
    CHECK(cl.at(0, 0)(0, 1) == 1.0);
    CHECK(cl.at(0, 0)(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(cl.at(1, 1)(0, 0) == 0.5);
    const auto ch = build_channel_tm(codes, 2, 2);
    CHECK(ch.at(1)(0, 0) == 1.0);
    CHECK(ch.at(1)(1, 1) == 1.0);
    const std::vector<std::size_t> bad = {0, 2};
    CHECK_THROWS_AS(build_class_tm(codes, bad, 2, 2, 2), Error);
}

TEST_CASE("transition bundle round trip") {
    CodeGrid a(1, 4);
    a.coarse = {0, 1, 2, 0};
    const std::vector<CodeGrid> codes = {a};
    const std::vector<std::size_t> labels = {1};
    TransitionBundle bundle;
    bundle.class_tms = build_class_tm(codes, labels, 2, 1, 3);
    bundle.source_channel_tms = build_channel_tm(codes, 1, 3);
    bundle.epsilon = 1e-6;
    const auto back = transitions_from_document(records::parse(records::serialize(transitions_to_document(bundle)), ""));
    CHECK(back.epsilon == 1e-6);
    CHECK(back.class_tms.at(1, 0) == bundle.class_tms.at(1, 0));
    CHECK(back.class_tms.empty_classes == bundle.class_tms.empty_classes);
    CHECK(!back.target_channel_tms);
    bundle.target_channel_tms = bundle.source_channel_tms;
    const auto with_target = transitions_from_document(transitions_to_document(bundle));
    REQUIRE(with_target.target_channel_tms);
    CHECK(with_target.target_channel_tms->at(0) == bundle.source_channel_tms.at(0));
}
