#include "doctest.h"

#include <cmath>

#include "calidrop/calibration.hpp"
#include "calidrop/diversity.hpp"
#include "calidrop/rng.hpp"

using namespace calidrop;

namespace {

BinaryEnsembleView random_view(int T, int N, std::uint64_t seed) {
    std::vector<double> h(static_cast<size_t>(T) * N);
    std::vector<int> y(static_cast<size_t>(N));
    RngStream rng(seed, 0);
    for (auto& v : h) v = rng.uniform();
    for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : 0;
    return BinaryEnsembleView::from_members(T, N, std::move(h), std::move(y));
}

// Independent pairwise-disagreement computation of the agreement statistic.
double kappa_pairwise(const CorrectnessMatrix& m) {
    std::int64_t discordant = 0, correct_total = 0;
    for (int k = 0; k < m.n; ++k)
        for (int t = 0; t < m.T; ++t) {
            if (m.is_correct(t, k)) ++correct_total;
            for (int u = t + 1; u < m.T; ++u)
                if (m.is_correct(t, k) != m.is_correct(u, k)) ++discordant;
        }
    const double pbar =
        static_cast<double>(correct_total) / (static_cast<double>(m.T) * m.n);
    // Each item contributes rho*(T-rho) unordered discordant pairs.
    const double num = static_cast<double>(discordant) / m.T;
    const double den = static_cast<double>(m.n) * (m.T - 1) * pbar * (1.0 - pbar);
    return 1.0 - num / den;
}

CorrectnessMatrix make_matrix(int T, int n, std::vector<std::uint8_t> correct) {
    CorrectnessMatrix m;
    m.T = T;
    m.n = n;
    m.correct = std::move(correct);
    return m;
}

}  // namespace

TEST_CASE("error-ambiguity hand fixture") {
    // Members 0.2, 0.5, 0.8 on one positive-label sample: mean 0.5.
    const auto v = BinaryEnsembleView::from_members(3, 1, {0.2, 0.5, 0.8}, {1});
    const DecompositionReport rep = decompose_mse(v);
    CHECK(rep.ensemble_mse == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(rep.avg_member_mse == doctest::Approx(0.31).epsilon(1e-12));
    CHECK(rep.avg_ambiguity == doctest::Approx(0.06).epsilon(1e-12));
    CHECK(rep.residual < 1e-15);
}

TEST_CASE("error-ambiguity identity holds to machine precision on random ensembles") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto v = random_view(2 + static_cast<int>(seed % 9),
                                   5 + static_cast<int>(seed % 37), 1000 + seed);
        CHECK(decompose_mse(v).residual < 1e-12);
    }
}

TEST_CASE("zero ambiguity iff all members agree") {
    const auto same = BinaryEnsembleView::from_members(3, 2, {0.3, 0.7, 0.3, 0.7, 0.3, 0.7}, {0, 1});
    CHECK(decompose_mse(same).avg_ambiguity == doctest::Approx(0.0));
    const auto differ = BinaryEnsembleView::from_members(2, 1, {0.2, 0.8}, {1});
    CHECK(decompose_mse(differ).avg_ambiguity > 0.0);
}

TEST_CASE("binary view extracts one-vs-rest probabilities") {
    EnsemblePredictions ens;
    ens.T = 1;
    ens.N = 2;
    ens.K = 3;
    ens.probs = {0.5, 0.3, 0.2, 0.1, 0.6, 0.3};
    ens.labels = {0, 1};
    ens.member_ids = {0};
    const auto v = binary_view(ens, 1);
    CHECK(v.member(0, 0) == 0.3);
    CHECK(v.member(0, 1) == 0.6);
    CHECK(v.y == std::vector<int>{0, 1});
    CHECK_THROWS_AS(binary_view(ens, 5), UsageError);
}

TEST_CASE("bin-empirical calibration identity is exact") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto v = random_view(4, 200, 2000 + seed);
        const EceDecompositionReport rep = ece_decomposition(v, nullptr, 20);
        CHECK(rep.eq_calibration_residual < 1e-12);
        CHECK(rep.ece >= 0.0);
        CHECK(rep.refinement >= 0.0);
    }
}

TEST_CASE("binary ece vanishes when the mean matches the bin conditionals") {
    // All members identical and equal to a constant conditional: H sits in one
    // bin whose empirical conditional is the label mean; with the generator
    // conditional supplied, ece is exactly (c - H)^2 averaged.
    const int N = 100;
    std::vector<double> h(static_cast<size_t>(N), 0.52);
    std::vector<int> y(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) y[static_cast<size_t>(i)] = i < 52 ? 1 : 0;
    const auto v = BinaryEnsembleView::from_members(1, N, std::move(h), std::move(y));
    std::vector<double> cond(static_cast<size_t>(N), 0.52);
    CHECK(binary_ece(v, &cond, 20) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(binary_ece(v, nullptr, 20) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("interrater agreement is exactly one for identical imperfect raters") {
    // Three raters, same wrong answers on half the items.
    const auto m = make_matrix(3, 4, {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
    const auto kappa = interrater_agreement(m);
    REQUIRE(kappa.has_value());
    CHECK(*kappa == 1.0);
}

TEST_CASE("interrater agreement hand fixture evaluates to -1/3") {
    // T=2 raters, n=2 items: rater 1 correct on both, rater 2 on the first only.
    const auto m = make_matrix(2, 2, {1, 1, 1, 0});
    const auto kappa = interrater_agreement(m);
    REQUIRE(kappa.has_value());
    CHECK(*kappa == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("interrater agreement is undefined at degenerate accuracy") {
    CHECK(!interrater_agreement(make_matrix(2, 2, {1, 1, 1, 1})).has_value());
    CHECK(!interrater_agreement(make_matrix(2, 2, {0, 0, 0, 0})).has_value());
    CHECK_THROWS_AS(interrater_agreement(make_matrix(1, 2, {1, 0})), UsageError);
}

TEST_CASE("interrater agreement matches the pairwise-disagreement oracle") {
    RngStream rng(77, 0);
    int tested = 0;
    while (tested < 100) {
        const int T = 2 + static_cast<int>(rng.uniform_int(6));
        const int n = 2 + static_cast<int>(rng.uniform_int(30));
        std::vector<std::uint8_t> c(static_cast<size_t>(T) * n);
        for (auto& v : c) v = rng.bernoulli(0.7) ? 1 : 0;
        const auto m = make_matrix(T, n, std::move(c));
        const auto kappa = interrater_agreement(m);
        if (!kappa) continue;  // degenerate draw
        CHECK(*kappa == doctest::Approx(kappa_pairwise(m)).epsilon(1e-12));
        ++tested;
    }
}

TEST_CASE("correctness matrix marks argmax hits") {
    EnsemblePredictions ens;
    ens.T = 2;
    ens.N = 2;
    ens.K = 2;
    ens.probs = {0.9, 0.1, 0.2, 0.8, 0.4, 0.6, 0.7, 0.3};
    ens.labels = {0, 1};
    ens.member_ids = {0, 1};
    const CorrectnessMatrix m = correctness_matrix(ens);
    CHECK(m.is_correct(0, 0));   // member 0 says class 0, label 0
    CHECK(m.is_correct(0, 1));   // member 0 says class 1, label 1
    CHECK(!m.is_correct(1, 0));  // member 1 says class 1, label 0
    CHECK(!m.is_correct(1, 1));  // member 1 says class 0, label 1
    CHECK(m.pbar() == doctest::Approx(0.5));
    CHECK(m.rho() == std::vector<int>{1, 1});
}

TEST_CASE("size curves cover every prefix and match the full average at the end") {
    EnsemblePredictions ens;
    ens.T = 3;
    ens.N = 4;
    ens.K = 2;
    ens.labels = {0, 1, 0, 1};
    ens.member_ids = {0, 1, 2};
    ens.probs.resize(24);
    RngStream rng(5, 0);
    for (int t = 0; t < 3; ++t)
        for (int n = 0; n < 4; ++n) {
            const double p = rng.uniform();
            ens.at(t, n, 0) = p;
            ens.at(t, n, 1) = 1 - p;
        }
    const auto rows = ensemble_size_curves(ens, 3, 10, 0, 1);
    REQUIRE(rows.size() == 3);
    for (int m = 0; m < 3; ++m) CHECK(rows[static_cast<size_t>(m)].m == m + 1);
    CHECK(rows[2].accuracy == doctest::Approx(accuracy(ensemble_average(ens))));
}
