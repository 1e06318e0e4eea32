#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cyclecorr/correspondence.hpp"
#include "doctest.h"

using namespace cyclecorr;

namespace {

Tensor randt(std::vector<std::size_t> shape, std::uint64_t seed,
             double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& x : t.values()) x = d(rng);
    return t;
}

Tensor random_row_stochastic(std::size_t r, std::size_t c, std::uint64_t seed) {
    Tensor t = randt({r, c}, seed, 0.1, 1.0);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += t(i, j);
        for (std::size_t j = 0; j < c; ++j) t(i, j) /= s;
    }
    return t;
}

double max_row_dev(const Tensor& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.dim(1); ++j) s += m(i, j);
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

double max_col_dev(const Tensor& m) {
    double worst = 0.0;
    for (std::size_t j = 0; j < m.dim(1); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.dim(0); ++i) s += m(i, j);
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

// best assignment by exhaustive search, for tying Sinkhorn to the
// matching objective on tiny instances
std::vector<std::size_t> brute_force_assignment(const Tensor& c) {
    const std::size_t n = c.dim(0);
    std::vector<std::size_t> perm(n), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_score = -1e300;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c(i, perm[i]);
        if (s > best_score) {
            best_score = s;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("soft correspondence") {
    // indistinguishable targets get uniform rows
    Tensor fsrc = randt({5, 4}, 1, -1.0, 1.0);
    Tensor ftgt({3, 4});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) ftgt(i, j) = 0.5;
    Tensor u = soft_correspondence(fsrc, ftgt, 0.07);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(u(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // single target: column of ones
    Tensor one_tgt = randt({1, 4}, 2, -1.0, 1.0);
    Tensor col = soft_correspondence(fsrc, one_tgt, 0.07);
    for (std::size_t i = 0; i < 5; ++i) CHECK(col(i, 0) == 1.0);

    // sharp softmax over orthogonal one-hot features picks out the identity
    Tensor eye = Tensor::identity(4);
    Tensor near_id = soft_correspondence(eye, eye, 0.01);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(std::abs(near_id(i, j) - (i == j ? 1.0 : 0.0)) < 1e-4);

    Tensor f1 = randt({7, 6}, 3, -2.0, 2.0);
    Tensor f2 = randt({9, 6}, 4, -2.0, 2.0);
    CHECK(max_row_dev(soft_correspondence(f1, f2, 0.07)) < 1e-9);

    CHECK_THROWS_AS(soft_correspondence(f1, f2, 0.0), std::invalid_argument);
    Tensor bad = f1;
    bad[0] = std::nan("");
    CHECK_THROWS_AS(soft_correspondence(bad, f2, 0.07), std::invalid_argument);
}

TEST_CASE("cycle composition") {
    Graph g;
    auto eye = g.constant(Tensor::identity(3));
    auto ii = compose_cycle(g, eye, eye);
    for (std::size_t i = 0; i < 9; ++i) CHECK(g.value(ii)[i] == Tensor::identity(3)[i]);

    // permutations compose right-to-left through the row convention:
    // row i of P1*P2 is row sigma1(i) of P2
    Tensor p1 = Tensor::zeros({3, 3});
    p1(0, 1) = 1; p1(1, 2) = 1; p1(2, 0) = 1;
    Tensor p2 = Tensor::zeros({3, 3});
    p2(0, 0) = 1; p2(1, 2) = 1; p2(2, 1) = 1;
    auto prod = compose_cycle(g, g.constant(p1), g.constant(p2));
    Tensor expect = Tensor::zeros({3, 3});
    expect(0, 2) = 1; expect(1, 1) = 1; expect(2, 0) = 1;
    for (std::size_t i = 0; i < 9; ++i) CHECK(g.value(prod)[i] == expect[i]);

    auto a = g.constant(random_row_stochastic(6, 4, 5));
    auto b = g.constant(random_row_stochastic(4, 6, 6));
    auto c = g.constant(random_row_stochastic(6, 6, 7));
    CHECK(max_row_dev(g.value(compose_cycle(g, a, b))) < 1e-9);
    CHECK(max_row_dev(g.value(compose_cycle(g, a, b, c))) < 1e-9);

    CHECK_THROWS_AS(compose_cycle(g, a, a), std::invalid_argument);
}

TEST_CASE("distance-weighted losses") {
    Tensor d_rand = randt({4, 4}, 8, 0.0, 2.0);
    for (std::size_t i = 0; i < 4; ++i) {
        d_rand(i, i) = 0.0;
        for (std::size_t j = 0; j < i; ++j) d_rand(i, j) = d_rand(j, i);
    }
    CHECK(cycle_loss(d_rand, Tensor::identity(4)) == 0.0);
    CHECK(rigid_loss(d_rand, Tensor::identity(4)) == 0.0);

    Tensor d2({2, 2}, {0.0, 1.0, 1.0, 0.0});
    Tensor uniform2 = Tensor::full({2, 2}, 0.5);
    CHECK(cycle_loss(d2, uniform2) == 1.0);
    CHECK(rigid_loss(d2, uniform2) == 1.0);

    Tensor dswap({2, 2}, {0.0, 2.0, 2.0, 0.0});
    Tensor swap({2, 2}, {0.0, 1.0, 1.0, 0.0});
    CHECK(cycle_loss(dswap, swap) == 4.0);

    // linear in the distance scale
    Tensor c = random_row_stochastic(4, 4, 9);
    const double base = cycle_loss(d_rand, c);
    Tensor d3 = d_rand;
    for (auto& x : d3.values()) x *= 3.0;
    CHECK(cycle_loss(d3, c) == doctest::Approx(3.0 * base).epsilon(1e-12));

    // off-diagonal mass on separated points costs something
    Tensor leak = Tensor::identity(4);
    leak(0, 0) = 0.9;
    leak(0, 1) = 0.1;
    CHECK(cycle_loss(d_rand, leak) > 0.0);
}

TEST_CASE("sinkhorn fixed points and closed forms") {
    // uniform input is an exact fixed point (width chosen binary-exact)
    Tensor uni = Tensor::full({8, 8}, 0.125);
    Tensor shu = sinkhorn_normalize(uni, {0.3, 30});
    for (std::size_t i = 0; i < shu.size(); ++i) CHECK(shu[i] == 0.125);

    // symmetric 2x2: one row pass lands on the stationary point
    for (double t : {0.3, 0.5}) {
        const double diag = std::exp(1.0 / t) / (std::exp(1.0 / t) + 1.0);
        for (std::size_t l : {std::size_t{1}, std::size_t{30}}) {
            Tensor sh = sinkhorn_normalize(Tensor::identity(2), {t, l});
            CHECK(sh(0, 0) == doctest::Approx(diag).epsilon(1e-12));
            CHECK(sh(0, 1) == doctest::Approx(1.0 - diag).epsilon(1e-12));
            CHECK(sh(1, 0) == doctest::Approx(1.0 - diag).epsilon(1e-12));
        }
    }
    Tensor sh2 = sinkhorn_normalize(Tensor::identity(2), {0.3, 30});
    CHECK(std::abs(sh2(0, 0) - 0.9656) < 1e-3);

    CHECK(sinkhorn_normalize(Tensor::full({1, 1}, 0.42), {0.3, 5})(0, 0) == 1.0);
}

TEST_CASE("sinkhorn convergence on random matrices") {
    Tensor c = randt({64, 64}, 10, 0.0, 1.0);
    Tensor sh = sinkhorn_normalize(c, {0.3, 30});
    CHECK(max_row_dev(sh) < 1e-12);
    CHECK(max_col_dev(sh) < 1e-3);
    for (double x : sh.values()) {
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }

    // doubling the iteration count never worsens the column residual
    double prev = 1e300;
    for (std::size_t l : {1, 2, 4, 8, 16, 32}) {
        const double dev = max_col_dev(sinkhorn_normalize(c, {0.3, l}));
        CHECK(dev <= prev + 1e-15);
        prev = dev;
    }

    CHECK_THROWS_AS(sinkhorn_normalize(randt({3, 4}, 11), {0.3, 30}), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_normalize(c, {0.0, 30}), std::invalid_argument);
    CHECK_THROWS_AS(sinkhorn_normalize(c, {0.3, 0}), std::invalid_argument);
}

TEST_CASE("cold sinkhorn recovers the best assignment") {
    Tensor c = randt({5, 5}, 12, 0.0, 1.0);
    auto best = brute_force_assignment(c);
    Tensor sh = sinkhorn_normalize(c, {0.05, 3000});
    auto rows = hard_correspondence(sh);
    for (std::size_t i = 0; i < 5; ++i) CHECK(rows[i] == best[i]);
}

TEST_CASE("sinkhorn regularization term") {
    Tensor uni = Tensor::full({8, 8}, 0.125);
    CHECK(sinkhorn_loss(uni, {0.3, 30}) == 0.0);

    const double diag = std::exp(10.0 / 3.0) / (std::exp(10.0 / 3.0) + 1.0);
    const double expect = 4.0 * (1.0 - diag);
    CHECK(sinkhorn_loss(Tensor::identity(2), {0.3, 30}) ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(sinkhorn_loss(Tensor::identity(2), {0.3, 30}) - 0.1378) < 1e-3);

    CHECK(sinkhorn_loss(random_row_stochastic(6, 6, 13), {0.3, 30}) >= 0.0);
}

TEST_CASE("sinkhorn loss differentiates through the unrolled passes") {
    // row-stochastic input: C and SH(C) rows both sum to 1, so the residual
    // changes sign within every row and gradient flows through the passes
    Tensor c = random_row_stochastic(4, 4, 14);
    c.requires_grad = true;
    LossProgram prog = [&](bool acc) {
        Graph g;
        auto loss = sinkhorn_loss(g, g.input(c), {0.3, 3});
        if (acc) g.backward(loss);
        return g.value(loss).item();
    };
    Tensor* params[] = {&c};
    CHECK(grad_check(prog, params, 1e-6, 16, 2) < 1e-5);

    // freezing the normalized target changes the gradient
    auto grad_with = [&](bool stop) {
        c.zero_grad();
        Graph g;
        auto loss = sinkhorn_loss(g, g.input(c), {0.3, 3, stop});
        g.backward(loss);
        return c.grad();
    };
    auto g1 = grad_with(false);
    auto g2 = grad_with(true);
    double diff = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) diff = std::max(diff, std::abs(g1[i] - g2[i]));
    CHECK(diff > 1e-6);
}

TEST_CASE("weighted total") {
    CHECK(total_loss(0.0, 0.0, 0.0, {}) == 0.0);
    CHECK(total_loss(1.0, 1.0, 1.0, {}) == 2.06);
    LossWeights reg = registration_weights();
    CHECK(total_loss(2.0, 3.0, 5.0, reg) ==
          doctest::Approx(1e-4 * 2.0 + 3.0 + 0.06 * 5.0).epsilon(1e-15));
    CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.0, LossWeights{-1.0, 1.0, 0.06}),
                    std::invalid_argument);

    Graph g;
    auto tot = total_loss(g, g.constant(Tensor::scalar(1.0)), g.constant(Tensor::scalar(1.0)),
                          g.constant(Tensor::scalar(1.0)), {});
    CHECK(g.value(tot).item() == 2.06);
}

TEST_CASE("hard correspondence") {
    CHECK(hard_correspondence(Tensor::identity(4)) ==
          std::vector<std::size_t>{0, 1, 2, 3});

    Tensor perm = Tensor::zeros({3, 3});
    perm(0, 2) = 1; perm(1, 0) = 1; perm(2, 1) = 1;
    CHECK(hard_correspondence(perm) == std::vector<std::size_t>{2, 0, 1});

    Tensor row({1, 3}, {0.2, 0.5, 0.3});
    CHECK(hard_correspondence(row)[0] == 1);
    Tensor tie({1, 3}, {0.4, 0.4, 0.2});
    CHECK(hard_correspondence(tie)[0] == 0);

    // argmax is unchanged by the softmax temperature
    Tensor f1 = randt({6, 5}, 15, -1.0, 1.0);
    Tensor f2 = randt({6, 5}, 16, -1.0, 1.0);
    CHECK(hard_correspondence(soft_correspondence(f1, f2, 0.07)) ==
          hard_correspondence(soft_correspondence(f1, f2, 0.5)));
}
