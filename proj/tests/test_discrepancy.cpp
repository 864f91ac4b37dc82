#include <cmath>

#include "ctda/discrepancy.hpp"
#include "doctest.h"
#include "reference/reference.hpp"
#include "verify/verify.hpp"

using namespace ctda;
using ctda::verify::ClusterBatchSpec;

namespace {

double sq_distance_between_cells(const EmbeddingBatch& b, int cls) {
    const auto m0 = cell_mean(b, cls, 0);
    const auto m1 = cell_mean(b, cls, 1);
    double s = 0.0;
    for (std::size_t i = 0; i < m0.size(); ++i) s += (m0[i] - m1[i]) * (m0[i] - m1[i]);
    return s;
}

// class 0: domain 0 at e1, domain 1 at e2; class 1: both domains at e1
EmbeddingBatch split_corner_batch() {
    EmbeddingBatch b;
    b.z = Mat(8, 3);
    b.class_labels = {0, 0, 0, 0, 1, 1, 1, 1};
    b.domain_labels = {0, 0, 1, 1, 0, 0, 1, 1};
    for (int i = 0; i < 8; ++i) {
        const bool e2 = b.class_labels[i] == 0 && b.domain_labels[i] == 1;
        b.z(i, e2 ? 1 : 0) = 1.0;
    }
    return b;
}

}  // namespace

TEST_CASE("cmmd is zero when both domains coincide per class") {
    ClusterBatchSpec spec;
    EmbeddingBatch b = verify::random_cluster_batch(spec, 4);
    // collapse: copy domain-0 rows onto domain-1 rows cell by cell
    for (int c = 0; c < 2; ++c) {
        std::vector<int> d0, d1;
        for (int i = 0; i < b.size(); ++i) {
            if (b.class_labels[i] != c) continue;
            (b.domain_labels[i] == 0 ? d0 : d1).push_back(i);
        }
        for (std::size_t t = 0; t < d1.size(); ++t)
            for (int col = 0; col < b.dim(); ++col) b.z(d1[t], col) = b.z(d0[t], col);
    }
    CHECK(cmmd_sq(b) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("cmmd on the two-class corner configuration is 1") {
    CHECK(cmmd_sq(split_corner_batch()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cmmd matches the kernel-mean expansion on random batches") {
    ClusterBatchSpec spec;
    spec.n_classes = 2;
    spec.per_cell = 10;  // n = 40
    for (int t = 0; t < 5; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, 40 + t);
        CHECK(std::abs(cmmd_sq(b) - reference::naive_cmmd_sq_expectation_form(b)) < 1e-10);
        CHECK(std::abs(cmmd_sq(b) - reference::naive_cmmd_sq(b)) < 1e-10);
    }
}

TEST_CASE("cmmd rejects an empty (class, domain) cell") {
    EmbeddingBatch b = verify::random_unit_batch(6, 3, 2, 5);
    b.domain_labels = {0, 0, 0, 0, 0, 1};
    b.class_labels = {0, 0, 0, 1, 1, 0};  // class 1 has no domain-1 samples
    CHECK_THROWS_AS(cmmd_sq(b), std::invalid_argument);
}

TEST_CASE("dcmmd is zero when all means coincide") {
    EmbeddingBatch b;
    b.z = Mat(8, 3);
    for (int i = 0; i < 8; ++i) b.z(i, 0) = 1.0;
    b.class_labels = {0, 0, 0, 0, 1, 1, 1, 1};
    b.domain_labels = {0, 0, 1, 1, 0, 0, 1, 1};
    CHECK(dcmmd_sq(b) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("dcmmd of antipodal classes is 4") {
    EmbeddingBatch b;
    b.z = Mat(8, 3);
    for (int i = 0; i < 8; ++i) b.z(i, 2) = i < 4 ? 1.0 : -1.0;
    b.class_labels = {0, 0, 0, 0, 1, 1, 1, 1};
    b.domain_labels = {0, 0, 1, 1, 0, 0, 1, 1};
    CHECK(dcmmd_sq(b) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("dcmmd matches the brute-force enumeration") {
    ClusterBatchSpec spec;
    spec.n_classes = 3;
    spec.per_cell = 4;
    for (int t = 0; t < 5; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, 90 + t);
        CHECK(std::abs(dcmmd_sq(b) - reference::naive_dcmmd_sq(b)) < 1e-12);
    }
}

TEST_CASE("dcmmd rejects a single-class batch") {
    EmbeddingBatch b = verify::random_unit_batch(6, 3, 1, 8);
    CHECK_THROWS_AS(dcmmd_sq(b), std::invalid_argument);
}

TEST_CASE("immd of a single class is zero") {
    const EmbeddingBatch b = verify::random_unit_batch(6, 3, 1, 9);
    CHECK(immd_sq(b) == 0.0);
}

TEST_CASE("immd of two equiprobable classes at e1, e2 is 1") {
    EmbeddingBatch b;
    b.z = Mat(8, 3);
    for (int i = 0; i < 8; ++i) b.z(i, i < 4 ? 0 : 1) = 1.0;
    b.class_labels = {0, 0, 0, 0, 1, 1, 1, 1};
    b.domain_labels = {0, 1, 0, 1, 0, 1, 0, 1};
    CHECK(immd_sq(b) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("immd matches the brute-force enumeration") {
    ClusterBatchSpec spec;
    spec.n_classes = 3;
    spec.per_cell = 4;
    for (int t = 0; t < 5; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, 130 + t);
        CHECK(std::abs(immd_sq(b) - reference::naive_immd_sq(b)) < 1e-12);
    }
}

TEST_CASE("estimators are nonnegative on random batches") {
    ClusterBatchSpec spec;
    spec.n_classes = 3;
    spec.per_cell = 3;
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, 200 + t);
        CHECK(cmmd_sq(b) >= 0.0);
        CHECK(dcmmd_sq(b) >= 0.0);
        CHECK(immd_sq(b) >= 0.0);
    }
}

TEST_CASE("cmmd and dcmmd are invariant under a domain swap") {
    ClusterBatchSpec spec;
    for (int t = 0; t < 5; ++t) {
        EmbeddingBatch b = verify::random_cluster_batch(spec, 300 + t);
        const double c0 = cmmd_sq(b), d0 = dcmmd_sq(b);
        for (auto& d : b.domain_labels) d = 1 - d;
        CHECK(cmmd_sq(b) == doctest::Approx(c0).epsilon(1e-12));
        CHECK(dcmmd_sq(b) == doctest::Approx(d0).epsilon(1e-12));
    }
}

TEST_CASE("duplicating every sample into both domains zeroes the cmmd") {
    const EmbeddingBatch src = verify::random_unit_batch(10, 4, 2, 21);
    EmbeddingBatch dup;
    dup.z = Mat(20, 4);
    for (int i = 0; i < 10; ++i) {
        for (int c = 0; c < 4; ++c) {
            dup.z(2 * i, c) = src.z(i, c);
            dup.z(2 * i + 1, c) = src.z(i, c);
        }
        dup.class_labels.push_back(src.class_labels[i]);
        dup.class_labels.push_back(src.class_labels[i]);
        dup.domain_labels.push_back(0);
        dup.domain_labels.push_back(1);
    }
    CHECK(cmmd_sq(dup) == 0.0);
}

TEST_CASE("hsic is zero against a constant label kernel") {
    const EmbeddingBatch b = verify::random_unit_batch(10, 4, 2, 33);
    const GramMatrix k = gram(b);
    const GramMatrix l = label_gram(std::vector<int>(10, 7), LabelKernel{2.5, 0.3});
    CHECK(std::abs(hsic(k, l)) < 1e-12);
}

TEST_CASE("hsic on the 2x2 case matches the hand expansion (1-a)^2") {
    for (double a : {-0.6, 0.0, 0.25, 0.9}) {
        GramMatrix k;
        k.n = 2;
        k.k = {1.0, a, a, 1.0};
        CHECK(std::abs(hsic(k, k) - (1.0 - a) * (1.0 - a)) < 1e-14);
    }
}

TEST_CASE("hsic matches the materialized trace formula") {
    const EmbeddingBatch b = verify::random_unit_batch(12, 5, 3, 44);
    const GramMatrix k = gram(b);
    const GramMatrix l = label_gram(b.class_labels, LabelKernel{3.0, 1.0});
    CHECK(std::abs(hsic(k, l) - reference::naive_hsic(k, l)) < 1e-12);
}

TEST_CASE("hsic rejects mismatched sizes") {
    GramMatrix k;
    k.n = 2;
    k.k = {1, 0, 0, 1};
    GramMatrix l;
    l.n = 3;
    l.k.assign(9, 1.0);
    CHECK_THROWS_AS(hsic(k, l), std::invalid_argument);
}

TEST_CASE("hsic against the supervised label kernel tracks pos-minus-all kernel means") {
    ClusterBatchSpec spec;
    spec.per_cell = 16;  // n = 64, balanced
    for (int t = 0; t < 5; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, 400 + t);
        const GramMatrix k = gram(b);
        const GramMatrix l = label_gram(b.class_labels, LabelKernel{2.0, 0.0});
        double pos = 0.0, all = 0.0;
        long n_pos = 0, n_all = 0;
        for (int i = 0; i < b.size(); ++i)
            for (int j = 0; j < b.size(); ++j) {
                if (i == j) continue;
                all += k(i, j);
                ++n_all;
                if (b.class_labels[i] == b.class_labels[j]) {
                    pos += k(i, j);
                    ++n_pos;
                }
            }
        CHECK(std::abs(hsic(k, l) - (pos / n_pos - all / n_all)) < 0.05);
    }
}

TEST_CASE("mixture split: constant statistic gives 1 on both sides") {
    const EmbeddingBatch b = verify::random_unit_batch(10, 3, 2, 50);
    const auto res = mixture_expectation_check(b, [](int, int) { return 1.0; });
    CHECK(res.lhs == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.rhs == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixture split degenerates to the single within-domain term at p = 1") {
    EmbeddingBatch b = verify::random_unit_batch(8, 3, 2, 51);
    b.domain_labels.assign(8, 1);
    const GramMatrix k = gram(b);
    const auto res = mixture_expectation_check(b, [&](int i, int j) { return k(i, j); });
    CHECK(res.lhs == doctest::Approx(res.rhs).epsilon(1e-12));
}

TEST_CASE("mixture split is exact for the kernel statistic") {
    EmbeddingBatch b = verify::random_unit_batch(40, 6, 2, 52);
    const GramMatrix k = gram(b);
    const auto res = mixture_expectation_check(b, [&](int i, int j) { return k(i, j); });
    CHECK(std::abs(res.lhs - res.rhs) < 1e-10);
}

TEST_CASE("immd-to-dependence ratio is stable across resampled batches") {
    ClusterBatchSpec spec;
    spec.n_classes = 2;
    spec.per_cell = 64;  // n = 256
    std::vector<double> ratios;
    for (int t = 0; t < 12; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, 777 + t);
        const GramMatrix k = gram(b);
        const GramMatrix l = label_gram(b.class_labels, LabelKernel{2.0, 0.0});
        ratios.push_back(immd_sq(b) / hsic(k, l));
    }
    double mean = 0.0;
    for (double r : ratios) mean += r;
    mean /= ratios.size();
    double var = 0.0;
    for (double r : ratios) var += (r - mean) * (r - mean);
    var /= ratios.size();
    CHECK(std::sqrt(var) / mean < 0.10);
}

TEST_CASE("uniform prior weighting differs from empirical exactly on skewed batches") {
    // 3:1 class skew; under uniform priors each class-mean distance counts 1/2
    EmbeddingBatch b = verify::random_unit_batch(16, 4, 2, 71);
    for (int i = 0; i < 16; ++i) b.class_labels[i] = i % 4 == 0 ? 1 : 0;
    for (int i = 0; i < 16; ++i) b.domain_labels[i] = (i / 4) % 2;

    const double d0 = sq_distance_between_cells(b, 0);
    const double d1 = sq_distance_between_cells(b, 1);
    CHECK(cmmd_sq(b, PriorWeighting::Empirical) == doctest::Approx(0.75 * d0 + 0.25 * d1).epsilon(1e-12));
    CHECK(cmmd_sq(b, PriorWeighting::Uniform) == doctest::Approx(0.5 * d0 + 0.5 * d1).epsilon(1e-12));

    ClusterBatchSpec spec;
    const EmbeddingBatch balanced = verify::random_cluster_batch(spec, 72);
    CHECK(cmmd_sq(balanced, PriorWeighting::Uniform) ==
          doctest::Approx(cmmd_sq(balanced, PriorWeighting::Empirical)).epsilon(1e-12));
}

TEST_CASE("report bundles the estimators with priors that sum to one") {
    ClusterBatchSpec spec;
    spec.n_classes = 3;
    spec.per_cell = 4;
    const DiscrepancyReport rep = compute_report(verify::random_cluster_batch(spec, 60));
    double sum = 0.0;
    for (double p : rep.class_priors) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.cmmd_sq >= 0.0);
    CHECK(rep.dcmmd_sq >= 0.0);
    CHECK(rep.immd_sq >= 0.0);
    CHECK(rep.mixture_p == 0.5);
}
