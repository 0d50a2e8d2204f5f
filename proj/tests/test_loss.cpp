#include <catch2/catch_amalgamated.hpp>

#include "cdtl/rng.hpp"
#include "cdtl/triplet_loss.hpp"
#include "oracles.hpp"

using namespace cdtl;

namespace {

Tensor random_embedding(std::size_t dim, Rng& rng) {
    Tensor t({dim});
    for (std::size_t i = 0; i < dim; ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

LossConfig basic_cfg() { return {LossVariant::basic, 0.2, 0.2}; }
LossConfig modified_cfg() { return {LossVariant::modified, 0.2, 0.2}; }

}  // namespace

TEST_CASE("basic loss arithmetic", "[loss]") {
    CHECK(basic_loss({0.0, 1.0, 1.0}, basic_cfg()) == Catch::Approx(0.0).margin(1e-12));
    CHECK(basic_loss({1.0, 0.5, 0.0}, basic_cfg()) == Catch::Approx(0.7));
    // hinge boundary: d_ap - d_an + m1 == 0
    CHECK(basic_loss({0.8, 1.0, 0.0}, basic_cfg()) == Catch::Approx(0.0).margin(1e-12));
    // d_pn is ignored by the basic variant
    CHECK(basic_loss({1.0, 0.5, 99.0}, basic_cfg()) == basic_loss({1.0, 0.5, 0.0}, basic_cfg()));
}

TEST_CASE("modified loss arithmetic", "[loss]") {
    CHECK(modified_loss({0.0, 1.0, 1.0}, modified_cfg()) == Catch::Approx(0.0).margin(1e-12));
    CHECK(modified_loss({1.0, 0.5, 0.3}, modified_cfg()) == Catch::Approx(1.6));
    // only the second hinge active
    CHECK(modified_loss({0.5, 2.0, 0.4}, modified_cfg()) == Catch::Approx(0.3));
}

TEST_CASE("losses reject negative distances", "[loss]") {
    CHECK_THROWS_AS(basic_loss({-0.1, 1.0, 1.0}, basic_cfg()), InputError);
    CHECK_THROWS_AS(modified_loss({0.1, -1.0, 1.0}, modified_cfg()), InputError);
}

TEST_CASE("loss properties over random distance triples", "[loss]") {
    Rng rng(21);
    for (int i = 0; i < 1000; ++i) {
        const TripletDistances d{rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0),
                                 rng.uniform(0.0, 3.0)};
        const double basic = basic_loss(d, basic_cfg());
        const double modified = modified_loss(d, modified_cfg());
        REQUIRE(basic >= 0.0);
        REQUIRE(modified >= 0.0);
        REQUIRE(modified >= basic);  // the second summand is nonnegative

        // m2 = 0 and d_pn >= d_ap reduces the modified loss to the basic one
        if (d.d_pn >= d.d_ap) {
            LossConfig m2_zero = modified_cfg();
            m2_zero.m2 = 0.0;
            REQUIRE(modified_loss(d, m2_zero) == Catch::Approx(basic).margin(1e-12));
        }
    }

    // both losses vanish when d_ap = 0 and the margins are respected
    Rng rng2(24);
    for (int i = 0; i < 100; ++i) {
        const TripletDistances d{0.0, 0.2 + rng2.uniform(0.0, 2.0), 0.2 + rng2.uniform(0.0, 2.0)};
        REQUIRE(basic_loss(d, basic_cfg()) == 0.0);
        REQUIRE(modified_loss(d, modified_cfg()) == 0.0);
    }
}

TEST_CASE("loss_and_grads: coincident anchor and positive", "[loss]") {
    Tensor a = Tensor::vector1d({0.5f, -0.25f, 1.0f});
    Tensor n = Tensor::vector1d({2.0f, 2.0f, 2.0f});
    const auto r = loss_and_grads(a, a, n, basic_cfg());
    CHECK(r.loss == 0.0);
    for (float v : r.grad_a.data()) CHECK(v == 0.0f);
    for (float v : r.grad_p.data()) CHECK(v == 0.0f);
    for (float v : r.grad_n.data()) CHECK(v == 0.0f);
}

TEST_CASE("loss_and_grads: well separated 1-D triplet", "[loss]") {
    Tensor a = Tensor::vector1d({0.0f});
    Tensor p = Tensor::vector1d({1.0f});
    Tensor n = Tensor::vector1d({3.0f});
    const auto r = loss_and_grads(a, p, n, basic_cfg());
    CHECK(r.loss == Catch::Approx(0.0).margin(1e-12));  // 1 - 3 + 0.2 < 0
}

TEST_CASE("loss_and_grads rejects length mismatch", "[loss]") {
    CHECK_THROWS_AS(loss_and_grads(Tensor({3}), Tensor({4}), Tensor({3}), basic_cfg()),
                    ShapeError);
}

TEST_CASE("loss gradients match finite differences for both variants", "[loss]") {
    Rng rng(22);
    for (const auto variant : {LossVariant::basic, LossVariant::modified}) {
        LossConfig cfg{variant, 0.2, 0.2};
        int done = 0;
        while (done < 5) {
            Tensor a = random_embedding(64, rng);
            Tensor p = random_embedding(64, rng);
            Tensor n = random_embedding(64, rng);
            const double d_ap = euclidean_distance(a, p);
            const double d_an = euclidean_distance(a, n);
            const double d_pn = euclidean_distance(p, n);
            // skip configurations too close to a hinge boundary
            if (std::abs(d_ap - d_an + cfg.m1) < 1e-3) continue;
            if (variant == LossVariant::modified && std::abs(d_ap - d_pn + cfg.m2) < 1e-3) continue;
            ++done;

            const auto r = loss_and_grads(a, p, n, cfg);
            oracle::DTensor da = oracle::widen(a), dp = oracle::widen(p), dn = oracle::widen(n);
            auto loss = [&] {
                const double ap = oracle::distance_reference(da, dp);
                const double an = oracle::distance_reference(da, dn);
                const double pn = oracle::distance_reference(dp, dn);
                return variant == LossVariant::basic
                           ? oracle::basic_loss_reference(ap, an, cfg.m1)
                           : oracle::modified_loss_reference(ap, an, pn, cfg.m1, cfg.m2);
            };
            oracle::GradCheck check;
            check.compare_all(r.grad_a, oracle::finite_difference(da.data, loss));
            check.compare_all(r.grad_p, oracle::finite_difference(dp.data, loss));
            check.compare_all(r.grad_n, oracle::finite_difference(dn.data, loss));
            INFO("variant " << to_string(variant));
            CHECK(check.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("batch_loss reduces to loss_and_grads and averages", "[loss]") {
    Rng rng(23);
    const LossConfig cfg = modified_cfg();
    EmbeddingTriplet t{random_embedding(16, rng), random_embedding(16, rng),
                       random_embedding(16, rng)};

    const auto single = batch_loss({t}, cfg);
    const auto direct = loss_and_grads(t.a, t.p, t.n, cfg);
    CHECK(single.mean_loss == Catch::Approx(direct.loss));
    CHECK(single.per_triplet[0].grad_a.data() == direct.grad_a.data());

    // two identical triplets: same mean as one
    const auto doubled = batch_loss({t, t}, cfg);
    CHECK(doubled.mean_loss == Catch::Approx(single.mean_loss));

    // random batch of 60 against the per-item oracle
    std::vector<EmbeddingTriplet> batch;
    for (int i = 0; i < 60; ++i) {
        batch.push_back({random_embedding(16, rng), random_embedding(16, rng),
                         random_embedding(16, rng)});
    }
    const auto r = batch_loss(batch, cfg);
    double expected = 0.0;
    for (const auto& item : batch) expected += loss_and_grads(item.a, item.p, item.n, cfg).loss;
    expected /= 60.0;
    CHECK(r.mean_loss == Catch::Approx(expected).margin(1e-6));

    CHECK_THROWS_AS(batch_loss({}, cfg), InputError);
}
