#include <cmath>

#include "doctest.h"
#include "esgstack/errors.hpp"
#include "esgstack/metafeatures.hpp"
#include "esgstack/rng.hpp"

using namespace esgstack;

TEST_CASE("log transform anchor values") {
    Matrix p(1, 4, {1.0, 0.0, 0.5, 1e-6});
    Matrix l = logit_transform(p);
    CHECK(l.at(0, 0) == 0.0);
    CHECK(l.at(0, 1) == doctest::Approx(-13.815511).epsilon(1e-6));
    CHECK(l.at(0, 1) == std::log(1e-6)); // clip floor exactly
    CHECK(l.at(0, 2) == doctest::Approx(-0.693147).epsilon(1e-6));
    CHECK(l.at(0, 3) == std::log(1e-6));
}

TEST_CASE("log transform slack and rejection") {
    Matrix noisy(1, 2, {1.0 + 1e-10, -1e-10});
    Matrix l = logit_transform(noisy);
    CHECK(l.at(0, 0) == 0.0);
    CHECK(l.at(0, 1) == std::log(1e-6));

    CHECK_THROWS_AS(logit_transform(Matrix(1, 1, {1.001})), validation_error);
    CHECK_THROWS_AS(logit_transform(Matrix(1, 1, {-0.5})), validation_error);
}

TEST_CASE("log transform properties") {
    Rng rng(5);
    // monotonicity on (1e-6, 1]
    for (int t = 0; t < 200; ++t) {
        double a = rng.uniform(2e-6, 1.0);
        double b = rng.uniform(2e-6, 1.0);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        Matrix l = logit_transform(Matrix(1, 2, {a, b}));
        CHECK(l.at(0, 0) < l.at(0, 1));
    }

    // exp inverts onto the clipped value
    Matrix p(8, 4);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 4; ++c) p.at(r, c) = rng.uniform01();
    Matrix l = logit_transform(p);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const double clipped = std::min(1.0, std::max(1e-6, p.at(r, c)));
            CHECK(std::exp(l.at(r, c)) == doctest::Approx(clipped).epsilon(1e-12));
            CHECK(l.at(r, c) <= 0.0);
            CHECK(l.at(r, c) >= std::log(1e-6));
        }

    // argmax of each probability row survives the transform
    for (int t = 0; t < 50; ++t) {
        Matrix row(1, 4);
        double sum = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            row.at(0, c) = rng.uniform(0.05, 1.0);
            sum += row.at(0, c);
        }
        for (std::size_t c = 0; c < 4; ++c) row.at(0, c) /= sum;
        Matrix lr = logit_transform(row);
        std::size_t ap = 0, al = 0;
        for (std::size_t c = 1; c < 4; ++c) {
            if (row.at(0, c) > row.at(0, ap)) ap = c;
            if (lr.at(0, c) > lr.at(0, al)) al = c;
        }
        CHECK(ap == al);
    }
}

TEST_CASE("aspect concatenation layout") {
    Matrix le(1, 4, {0, 0, 0, 0});
    Matrix ls(1, 4, {-1, -1.5, -1, -1});
    Matrix lg(1, 4, {-2, -2, -2, -2});
    Matrix x = concat_aspects(le, ls, lg);
    REQUIRE(x.rows() == 1);
    REQUIRE(x.cols() == 12);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(x.at(0, c) == 0.0);
        CHECK(x.at(0, 8 + c) == -2.0);
    }
    CHECK(x.at(0, 5) == ls.at(0, 1)); // column 5 is the second S column

    CHECK_THROWS_AS(concat_aspects(Matrix(2, 4), ls, lg), validation_error);
    CHECK_THROWS_AS(concat_aspects(Matrix(1, 3), ls, lg), validation_error);
}

TEST_CASE("family concatenation") {
    MetaFeatureMatrix a{"a", Matrix(2, 12)};
    MetaFeatureMatrix b{"b", Matrix(2, 12)};
    MetaFeatureMatrix c{"c", Matrix(2, 12)};
    for (std::size_t j = 0; j < 12; ++j) {
        a.features.at(0, j) = 1;
        b.features.at(0, j) = 2;
        c.features.at(0, j) = 3;
    }

    Matrix one = concat_families({a});
    CHECK(one == a.features);

    Matrix three = concat_families({a, b, c});
    REQUIRE(three.cols() == 36);
    CHECK(three.at(0, 0) == 1.0);
    CHECK(three.at(0, 12) == 2.0);
    CHECK(three.at(0, 24) == 3.0);

    // reordering the families permutes the blocks
    Matrix swapped = concat_families({c, a, b});
    CHECK(swapped.at(0, 0) == 3.0);
    CHECK(swapped.at(0, 12) == 1.0);

    CHECK_THROWS_AS(concat_families({}), validation_error);
    MetaFeatureMatrix short_fam{"s", Matrix(1, 12)};
    CHECK_THROWS_AS(concat_families({a, short_fam}), validation_error);
}

TEST_CASE("meta features from a prediction set") {
    PredictionSet set;
    set.model_id = "m";
    set.doc_ids = {"a1"};
    set.probs[0] = Matrix(1, 4, {1.0, 0.0, 0.0, 0.0});
    set.probs[1] = Matrix(1, 4, {0.25, 0.25, 0.25, 0.25});
    set.probs[2] = Matrix(1, 4, {0.5, 0.5, 0.0, 0.0});
    MetaFeatureMatrix mf = meta_features_of(set);
    CHECK(mf.model_id == "m");
    REQUIRE(mf.features.cols() == 12);
    CHECK(mf.features.at(0, 0) == 0.0);
    CHECK(mf.features.at(0, 1) == std::log(1e-6));
    CHECK(mf.features.at(0, 4) == doctest::Approx(std::log(0.25)));
    CHECK(mf.features.at(0, 8) == doctest::Approx(std::log(0.5)));
}
