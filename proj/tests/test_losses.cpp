#include <cmath>
#include <numeric>

#include "ctda/losses.hpp"
#include "ctda/rng.hpp"
#include "ctda/synthgen.hpp"
#include "ctda/trainer.hpp"
#include "doctest.h"
#include "reference/reference.hpp"
#include "verify/verify.hpp"

using namespace ctda;

namespace {

EmbeddingBatch all_identical_batch(int n, int m) {
    EmbeddingBatch b;
    b.z = Mat(n, m);
    for (int i = 0; i < n; ++i) b.z(i, 0) = 1.0;
    b.class_labels.assign(n, 0);
    for (int i = 0; i < n; ++i) b.domain_labels.push_back(i % 2);
    return b;
}

std::vector<int> adjacent_pairing(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; i += 2) {
        p[i] = i + 1;
        p[i + 1] = i;
    }
    return p;
}

}  // namespace

TEST_CASE("paired loss on a two-sample batch is zero") {
    const EmbeddingBatch b = verify::random_unit_batch(2, 4, 1, 7);
    CHECK(nt_xent(b.z, adjacent_pairing(2), 0.7).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("paired loss with four identical embeddings is log 3 for any tau") {
    const EmbeddingBatch b = all_identical_batch(4, 3);
    for (double tau : {0.1, 0.5, 2.0})
        CHECK(nt_xent(b.z, adjacent_pairing(4), tau).value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("paired loss matches the naive transcription") {
    const EmbeddingBatch b = verify::random_unit_batch(6, 3, 2, 99);
    const auto pairing = verify::random_pairing(6, 5);
    const double fast = nt_xent(b.z, pairing, 0.5).value;
    const double slow = reference::naive_nt_xent(b.z, pairing, 0.5);
    CHECK(std::abs(fast - slow) < 1e-12);
}

TEST_CASE("paired loss rejects bad inputs") {
    const EmbeddingBatch b = verify::random_unit_batch(4, 3, 2, 1);
    CHECK_THROWS_AS(nt_xent(b.z, adjacent_pairing(4), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(nt_xent(b.z, adjacent_pairing(4), -1.0), std::invalid_argument);
    std::vector<int> fixed_point = {0, 1, 2, 3};
    CHECK_THROWS_AS(nt_xent(b.z, fixed_point, 0.5), std::invalid_argument);
}

TEST_CASE("same-label loss on identical embeddings of one class is log 3") {
    const EmbeddingBatch b = all_identical_batch(4, 3);
    CHECK(sup_contrastive(b.z, b.class_labels, 0.5).value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("same-label loss at antipodal clusters grows with temperature") {
    // two classes pinned at u and -u; the naive oracle is the yardstick
    EmbeddingBatch b;
    b.z = Mat(8, 4);
    for (int i = 0; i < 8; ++i) b.z(i, 1) = i < 4 ? 1.0 : -1.0;
    b.class_labels = {0, 0, 0, 0, 1, 1, 1, 1};
    b.domain_labels = {0, 1, 0, 1, 0, 1, 0, 1};

    const double cold = sup_contrastive(b.z, b.class_labels, 0.05).value;
    const double hot = sup_contrastive(b.z, b.class_labels, 5.0).value;
    CHECK(std::abs(cold - reference::naive_sup_contrastive(b.z, b.class_labels, 0.05)) < 1e-12);
    CHECK(std::abs(hot - reference::naive_sup_contrastive(b.z, b.class_labels, 5.0)) < 1e-12);
    CHECK(cold < hot);
    CHECK(cold >= 0.0);
}

TEST_CASE("same-label loss matches the naive transcription") {
    const EmbeddingBatch b = verify::random_unit_batch(8, 4, 2, 123);
    const double fast = sup_contrastive(b.z, b.class_labels, 0.5).value;
    const double slow = reference::naive_sup_contrastive(b.z, b.class_labels, 0.5);
    CHECK(std::abs(fast - slow) < 1e-12);
}

TEST_CASE("same-label loss rejects singleton classes") {
    EmbeddingBatch b = verify::random_unit_batch(5, 3, 2, 3);
    b.class_labels = {0, 0, 1, 1, 2};
    CHECK_THROWS_AS(sup_contrastive(b.z, b.class_labels, 0.5), std::invalid_argument);
}

TEST_CASE("cross entropy of uniform logits is log K") {
    Mat logits(4, 3);
    const LossResult r = cross_entropy(logits, {0, 1, 2, 0});
    CHECK(r.value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy decreases monotonically with the correct-logit margin") {
    double prev = 1e300;
    for (double margin : {1.0, 2.0, 4.0, 8.0}) {
        Mat logits(3, 3);
        for (int i = 0; i < 3; ++i) logits(i, i) = margin;
        const double v = cross_entropy(logits, {0, 1, 2}).value;
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("cross entropy gradient matches central differences") {
    RandomStream rng(11);
    Mat logits(5, 3);
    for (auto& v : logits.a) v = rng.normal();
    const std::vector<int> labels = {0, 2, 1, 1, 0};
    const LossResult r = cross_entropy(logits, labels);

    const double h = 1e-5;
    for (std::size_t i = 0; i < logits.a.size(); ++i) {
        const double orig = logits.a[i];
        logits.a[i] = orig + h;
        const double up = cross_entropy(logits, labels).value;
        logits.a[i] = orig - h;
        const double down = cross_entropy(logits, labels).value;
        logits.a[i] = orig;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - r.grad_z.a[i]) / std::max({std::abs(fd), std::abs(r.grad_z.a[i]), 1e-8}) < 1e-6);
    }
}

TEST_CASE("contrastive gradients match central differences over random batches") {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const EmbeddingBatch b = verify::random_unit_batch(8, 5, 2, 1000 + t);
        const auto pairing = verify::random_pairing(8, 2000 + t);
        worst = std::max(worst, verify::loss_grad_fd_error(LossKind::NtXent, b.z, b.class_labels, pairing, 0.5));
        worst = std::max(worst,
                         verify::loss_grad_fd_error(LossKind::SupContrastive, b.z, b.class_labels, pairing, 0.5));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("loss values are invariant under batch permutation") {
    const EmbeddingBatch b = verify::random_unit_batch(10, 4, 2, 55);
    const double base = sup_contrastive(b.z, b.class_labels, 0.5).value;

    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    RandomStream rng(77);
    rng.shuffle(perm.begin(), perm.end());

    Mat z2(10, 4);
    std::vector<int> labels2(10);
    for (int i = 0; i < 10; ++i) {
        for (int c = 0; c < 4; ++c) z2(i, c) = b.z(perm[i], c);
        labels2[i] = b.class_labels[perm[i]];
    }
    CHECK(sup_contrastive(z2, labels2, 0.5).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("paired loss approaches log(|B|-1) as temperature grows") {
    const EmbeddingBatch b = verify::random_unit_batch(10, 4, 2, 19);
    const auto pairing = verify::random_pairing(10, 3);
    const double v = nt_xent(b.z, pairing, 1e7).value;
    CHECK(v == doctest::Approx(std::log(9.0)).epsilon(1e-5));
}

TEST_CASE("same-label loss with exactly one positive per sample equals the paired loss") {
    // classes of size two whose members are each other's pair
    const EmbeddingBatch b = verify::random_unit_batch(8, 4, 2, 31);
    std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    const double sup = sup_contrastive(b.z, labels, 0.5).value;
    const double paired = nt_xent(b.z, adjacent_pairing(8), 0.5).value;
    CHECK(sup == doctest::Approx(paired).epsilon(1e-12));
}

TEST_CASE("expectation rewriting is exact for the paired loss at |B| = 2") {
    EmbeddingBatch b = verify::random_unit_batch(2, 4, 1, 81);
    b.class_labels = {0, 0};
    const auto pairing = adjacent_pairing(2);
    const auto res = empirical_expectation_form(b, 0.7, LossKind::NtXent, &pairing);
    CHECK(res.lhs == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(res.rhs == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("paired loss composes over augmentation pairs of real patches") {
    // flip/rotation views of each base patch are the positive pairs
    GeneratorConfig gen;
    gen.patch_size = 32;
    gen.calc_area_side_range[0] = 6;
    gen.calc_area_side_range[1] = 10;
    gen.seed = 4;

    const AugmentOp ops[] = {AugmentOp::FlipHorizontal, AugmentOp::Rotate90, AugmentOp::Rotate180};
    const int pool = 8;
    Mat inputs(6, pool * pool);
    std::vector<int> pairing(6);
    for (int b = 0; b < 3; ++b) {
        const Patch base = make_patch(gen, static_cast<ClassLabel>(b), 100 + b);
        const Patch view = augment_patch(base, ops[b]);
        const auto f0 = featurize(base, pool);
        const auto f1 = featurize(view, pool);
        std::copy(f0.begin(), f0.end(), inputs.row(2 * b).begin());
        std::copy(f1.begin(), f1.end(), inputs.row(2 * b + 1).begin());
        pairing[2 * b] = 2 * b + 1;
        pairing[2 * b + 1] = 2 * b;
    }

    const FeatureMap fm = FeatureMap::init(pool * pool, 12, 6, 9);
    const Mat z = feature_forward(fm, inputs);
    const LossResult r = nt_xent(z, pairing, 0.5);
    CHECK(std::isfinite(r.value));
    CHECK(std::abs(r.value - reference::naive_nt_xent(z, pairing, 0.5)) < 1e-12);
}

TEST_CASE("expectation rewriting is tight on balanced batches and reported loose on skewed ones") {
    const EmbeddingBatch balanced = verify::random_unit_batch(32, 6, 2, 17);
    const auto close = empirical_expectation_form(balanced, 0.5, LossKind::SupContrastive);
    CHECK(std::abs(close.gap()) < 0.05);

    // 3:1 class imbalance; the gap is reported, not an error
    EmbeddingBatch skewed = verify::random_unit_batch(32, 6, 2, 18);
    for (int i = 0; i < 32; ++i) skewed.class_labels[i] = i % 4 == 0 ? 1 : 0;
    const auto loose = empirical_expectation_form(skewed, 0.5, LossKind::SupContrastive);
    CHECK(std::isfinite(loose.gap()));
}
