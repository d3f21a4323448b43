#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chargen/copynet.hpp"
#include "chargen/data.hpp"
#include "fd_check.hpp"

using namespace chargen;

namespace {

std::vector<std::size_t> chars_of(const std::string& s) { return encode_text(s); }

std::vector<double> random_probs(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> v(n);
    double total = 0.0;
    for (double& x : v) {
        x = u(rng);
        total += x;
    }
    for (double& x : v) x /= total;
    return v;
}

}  // namespace

TEST_CASE("alphabet_distribution") {
    std::size_t A = Alphabet::size();
    SECTION("zero head gives the uniform distribution") {
        OutputHead head{zeros({A, 4}), zeros({A})};
        auto d = alphabet_distribution(constant({1.0, 2.0}), constant({3.0, 4.0}), head);
        for (double v : d->value) CHECK(v == Catch::Approx(1.0 / A).margin(1e-12));
    }
    SECTION("constant bias shift leaves the distribution unchanged") {
        std::mt19937_64 rng(3);
        ParameterStore store;
        OutputHead head = make_output_head(store, "h", 4, A, rng);
        auto s = constant({0.3, -0.1});
        auto c = constant({0.7, 0.2});
        auto before = alphabet_distribution(s, c, head);
        for (double& b : head.b->value) b += 3.5;
        auto after = alphabet_distribution(s, c, head);
        for (std::size_t i = 0; i < A; ++i)
            CHECK(before->value[i] == Catch::Approx(after->value[i]).margin(1e-12));
    }
    SECTION("matches an explicit exp/normalize oracle") {
        std::mt19937_64 rng(5);
        ParameterStore store;
        OutputHead head = make_output_head(store, "h", 4, A, rng);
        auto s = constant({0.5, -0.25});
        auto c = constant({1.5, 0.75});
        auto d = alphabet_distribution(s, c, head);
        std::vector<double> sc = {0.5, -0.25, 1.5, 0.75};
        std::vector<double> logits(A);
        for (std::size_t i = 0; i < A; ++i) {
            logits[i] = head.b->value[i];
            for (std::size_t j = 0; j < 4; ++j) logits[i] += head.V->value[i * 4 + j] * sc[j];
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l);
        for (std::size_t i = 0; i < A; ++i)
            CHECK(d->value[i] == Catch::Approx(std::exp(logits[i]) / z).margin(1e-10));
    }
}

TEST_CASE("copy_distribution aggregation") {
    std::size_t A = Alphabet::size();
    auto idx = [](char c) { return Alphabet::index_of(c); };

    SECTION("one-hot unshifted lands on the pointed character") {
        auto p = copy_distribution(constant({0.0, 0.0, 1.0}), chars_of("abc"), A, false);
        CHECK(p->value[idx('c')] == Catch::Approx(1.0));
        CHECK(p->value[idx('a')] == 0.0);
    }
    SECTION("one-hot shifted moves one step right") {
        auto p = copy_distribution(constant({0.0, 1.0, 0.0}), chars_of("abc"), A, true);
        CHECK(p->value[idx('c')] == Catch::Approx(1.0));
    }
    SECTION("repeated characters accumulate") {
        auto p = copy_distribution(constant({0.5, 0.2, 0.3}), chars_of("aba"), A, false);
        CHECK(p->value[idx('a')] == Catch::Approx(0.8));
        CHECK(p->value[idx('b')] == Catch::Approx(0.2));
    }
    SECTION("all mass on the last position falls back to unshifted") {
        auto p = copy_distribution(constant({0.0, 0.0, 1.0}), chars_of("abc"), A, true);
        CHECK(p->value[idx('c')] == Catch::Approx(1.0));
    }
    SECTION("shifted mode renormalizes") {
        auto p = copy_distribution(constant({0.5, 0.25, 0.25}), chars_of("abc"), A, true);
        // shifted vector (0, 0.5, 0.25) renormalized to (0, 2/3, 1/3)
        CHECK(p->value[idx('b')] == Catch::Approx(2.0 / 3.0));
        CHECK(p->value[idx('c')] == Catch::Approx(1.0 / 3.0));
    }
    SECTION("length mismatch is rejected") {
        CHECK_THROWS_AS(copy_distribution(constant({1.0}), chars_of("ab"), A, false),
                        ContractError);
    }
    SECTION("characters absent from the input get exactly zero mass") {
        std::mt19937_64 rng(7);
        auto input = chars_of("hello world");
        std::set<std::size_t> present(input.begin(), input.end());
        for (bool shift : {false, true}) {
            auto p = copy_distribution(constant(random_probs(rng, input.size())), input, A,
                                       shift);
            double total = 0.0;
            for (std::size_t i = 0; i < A; ++i) {
                if (!present.count(i)) CHECK(p->value[i] == 0.0);
                CHECK(p->value[i] >= 0.0);
                total += p->value[i];
            }
            CHECK(total == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("copy_gate") {
    SECTION("all-zero parameters give 0.5") {
        CopyGateParams p{zeros({1, 2}), zeros({1, 3}), zeros({1, 4}), zeros({1}), zeros({1})};
        auto g = copy_gate(constant({1.0, -1.0}), constant({2.0, 0.5, 3.0}),
                           constant_scalar(0.9), constant({1.0, 2.0, 3.0, 4.0}), p);
        CHECK(g->value[0] == Catch::Approx(0.5));
    }
    SECTION("output strictly inside (0, 1)") {
        std::mt19937_64 rng(11);
        ParameterStore store;
        CopyGateParams p = make_copy_gate(store, "g", 2, 3, 4, rng);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (int trial = 0; trial < 30; ++trial) {
            auto vec = [&](std::size_t n) {
                std::vector<double> v(n);
                for (double& x : v) x = u(rng);
                return constant(std::move(v));
            };
            auto g = copy_gate(vec(2), vec(3), constant_scalar(0.25), vec(4), p);
            CHECK(g->value[0] > 0.0);
            CHECK(g->value[0] < 1.0);
        }
    }
    SECTION("pure recurrence weight saturates") {
        CopyGateParams p{zeros({1, 2}), zeros({1, 3}), zeros({1, 4}),
                         make_leaf({1}, {10.0}, true), zeros({1})};
        auto g = copy_gate(constant({0.0, 0.0}), constant({0.0, 0.0, 0.0}),
                           constant_scalar(1.0), constant({0.0, 0.0, 0.0, 0.0}), p);
        CHECK(g->value[0] == Catch::Approx(1.0 / (1.0 + std::exp(-10.0))).margin(1e-9));
    }
    SECTION("p_prev outside [0,1] is rejected") {
        CopyGateParams p{zeros({1, 2}), zeros({1, 3}), zeros({1, 4}), zeros({1}), zeros({1})};
        CHECK_THROWS_AS(copy_gate(constant({0.0, 0.0}), constant({0.0, 0.0, 0.0}),
                                  constant_scalar(1.5), constant({0.0, 0.0, 0.0, 0.0}), p),
                        ContractError);
    }
}

TEST_CASE("mixture") {
    auto p_alph = constant({0.25, 0.25, 0.25, 0.25});
    auto p_copy = constant({1.0, 0.0, 0.0, 0.0});
    SECTION("gate endpoints reproduce the pure distributions") {
        auto g1 = mixture(constant_scalar(1.0), p_alph, p_copy);
        auto g0 = mixture(constant_scalar(0.0), p_alph, p_copy);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(g1->value[i] == p_alph->value[i]);
            CHECK(g0->value[i] == p_copy->value[i]);
        }
    }
    SECTION("half-half arithmetic") {
        auto m = mixture(constant_scalar(0.5), p_alph, p_copy);
        CHECK(m->value[0] == Catch::Approx(0.625));
        for (std::size_t i = 1; i < 4; ++i) CHECK(m->value[i] == Catch::Approx(0.125));
    }
    SECTION("monotone linear pull toward P_alph") {
        auto l1 = [&](const TensorPtr& m) {
            double d = 0.0;
            for (std::size_t i = 0; i < 4; ++i) d += std::abs(m->value[i] - p_alph->value[i]);
            return d;
        };
        double prev = 1e9;
        for (double g = 0.0; g <= 1.0; g += 0.25) {
            double d = l1(mixture(constant_scalar(g), p_alph, p_copy));
            CHECK(d <= prev + 1e-12);
            // linear: distance proportional to (1 - g)
            CHECK(d == Catch::Approx((1.0 - g) * 1.5).margin(1e-9));
            prev = d;
        }
    }
}

TEST_CASE("mixture distributions stay normalized") {
    std::mt19937_64 rng(13);
    std::size_t A = Alphabet::size();
    auto input = chars_of("name[Ecco], near[Pub]");
    ParameterStore store;
    OutputHead head = make_output_head(store, "h", 6, A, rng);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        auto vec = [&](std::size_t n) {
            std::vector<double> v(n);
            for (double& x : v) x = u(rng);
            return constant(std::move(v));
        };
        auto p_alph = alphabet_distribution(vec(3), vec(3), head);
        bool shift = trial % 2 == 0;
        auto p_copy = copy_distribution(constant(random_probs(rng, input.size())), input, A,
                                        shift);
        std::uniform_real_distribution<double> ug(0.0, 1.0);
        auto p_final = mixture(constant_scalar(ug(rng)), p_alph, p_copy);
        double total = 0.0;
        for (double v : p_final->value) {
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(total == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("gradients flow through the copy path") {
    std::mt19937_64 rng(17);
    ParameterStore store;
    std::size_t A = 12;
    OutputHead head = make_output_head(store, "h", 4, A, rng);
    CopyGateParams gate = make_copy_gate(store, "g", 2, 2, 2, rng);
    std::vector<std::size_t> input = {3, 5, 7, 5};

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto leafv = [&](std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = u(rng);
        return make_leaf({n}, std::move(v), true);
    };
    auto y = leafv(2);
    auto s = leafv(2);
    auto c = leafv(2);
    auto e = leafv(4);

    std::vector<TensorPtr> leaves = {y, s, c, e};
    for (const auto& [name, t] : store.items()) leaves.push_back(t);
    for (bool shift : {false, true}) {
        auto build = [&] {
            auto alphas = softmax_op(e);
            auto p_alph = alphabet_distribution(s, c, head);
            auto p_copy = copy_distribution(alphas, input, A, shift);
            auto p_gen = copy_gate(y, s, constant_scalar(0.5), c, gate);
            return nll(mixture(p_gen, p_alph, p_copy), 5);
        };
        auto report = chargen_test::fd_check(leaves, build);
        CHECK(report.max_rel_error < 1e-4);
    }
}
