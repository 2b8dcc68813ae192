#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <vector>

#include "coverhead/numeric.hpp"
#include "coverhead/rng.hpp"
#include "coverhead/threading.hpp"

using namespace coverhead;

TEST_CASE("rng streams are reproducible and seed sensitive") {
    Rng a(42), b(42), c(43);
    bool all_equal = true;
    bool any_differ = false;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a.next_u64();
        all_equal = all_equal && va == b.next_u64();
        any_differ = any_differ || va != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_differ);
}

TEST_CASE("mix_seed separates sub-streams") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t unit = 0; unit < 8; ++unit) {
        for (std::uint64_t cam = 0; cam < 2; ++cam) {
            seeds.insert(mix_seed(7, {unit, cam}));
        }
    }
    CHECK(seeds.size() == 16);
    CHECK(mix_seed(7, {1, 2}) != mix_seed(7, {2, 1}));
    CHECK(mix_seed(7, {1, 2}) == mix_seed(7, {1, 2}));
}

TEST_CASE("uniform and below stay in range") {
    Rng rng(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = rng.below(7);
        CHECK(k < 7);
    }
}

TEST_CASE("normal draws have roughly the right moments") {
    Rng rng(123);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8}, v2 = v1, sorted = v1;
    Rng a(5), b(5);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::sort(v2.begin(), v2.end());
    CHECK(v2 == sorted);
}

TEST_CASE("fast_exp tracks std::exp to a few ulp") {
    double worst = 0.0;
    for (int i = -70000; i <= 70000; ++i) {
        const double x = i * 0.01;
        const double got = fast_exp(x);
        const double want = std::exp(x);
        if (want > 0.0 && std::isfinite(want)) {
            worst = std::max(worst, std::abs(got - want) / want);
        }
    }
    CHECK(worst < 5e-15);

    CHECK(fast_exp(0.0) == 1.0);
    CHECK(fast_exp(1000.0) == std::numeric_limits<double>::infinity());
    CHECK(fast_exp(-1000.0) == 0.0);
    CHECK(std::isnan(fast_exp(std::numeric_limits<double>::quiet_NaN())));
}

TEST_CASE("logistic and softplus behave at the tails") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(logistic(40.0) == doctest::Approx(1.0));
    CHECK(logistic(-40.0) == doctest::Approx(0.0));
    CHECK(logistic(-800.0) < 1e-300);  // clamps to the denormal tail
    CHECK(logistic(800.0) == 1.0);

    CHECK(softplus(softplus_inverse(1.0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(softplus(50.0) == 50.0);
    CHECK(softplus(-50.0) == doctest::Approx(std::exp(-50.0)));
    for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
        CHECK(softplus(x) == doctest::Approx(std::log1p(std::exp(x))).epsilon(1e-14));
        CHECK(softplus_grad(x) == doctest::Approx(1.0 / (1.0 + std::exp(-x))).epsilon(1e-14));
    }
}

TEST_CASE("parallel_for covers every index exactly once and rethrows") {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (auto& h : hits) {
        CHECK(h.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for(16, 3,
                                 [](std::size_t i) {
                                     if (i == 7) {
                                         throw std::runtime_error("boom");
                                     }
                                 }),
                    std::runtime_error);
}
