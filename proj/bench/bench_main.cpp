// Timing comparison between the OpenMP kernels and the serial reference
// transcriptions. Not a correctness gate (the tests own that); run manually:
//   ./build/ctda_bench [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "ctda/kernels.hpp"
#include "ctda/losses.hpp"
#include "ctda/synthgen.hpp"
#include "ctda/trainer.hpp"
#include "reference/reference.hpp"
#include "verify/verify.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int repeats) {
    // one warmup, then best-of-repeats
    fn();
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = clock_type::now();
        fn();
        const auto t1 = clock_type::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %9.2f ms   openmp %9.2f ms   speedup %5.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
    std::printf("threads: %d\n", omp_get_max_threads());

    // gram matrix on a large batch
    {
        const auto batch = ctda::verify::random_unit_batch(512, 64, 4, 1);
        volatile double sink = 0.0;
        const double serial = time_ms([&] { sink = ctda::reference::naive_gram(batch.z).k.back(); }, repeats);
        const double parallel = time_ms([&] { sink = ctda::gram_unchecked(batch.z).k.back(); }, repeats);
        report("gram 512x64", serial, parallel);
        (void)sink;
    }

    // supervised contrastive loss (+ gradient on the openmp side)
    {
        const auto batch = ctda::verify::random_unit_batch(384, 48, 3, 2);
        volatile double sink = 0.0;
        const double serial =
            time_ms([&] { sink = ctda::reference::naive_sup_contrastive(batch.z, batch.class_labels, 0.5); }, repeats);
        const double parallel =
            time_ms([&] { sink = ctda::sup_contrastive(batch.z, batch.class_labels, 0.5).value; }, repeats);
        report("sup_contrastive 384x48", serial, parallel);
        (void)sink;
    }

    // texture synthesis across patches (the generator's parallel axis)
    {
        ctda::GeneratorConfig cfg;
        cfg.patch_size = 128;
        const int n_patches = 16;
        volatile double sink = 0.0;
        const double serial = time_ms(
            [&] {
                double acc = 0.0;
                for (int i = 0; i < n_patches; ++i) {
                    omp_set_num_threads(1);
                    acc += ctda::sample_texture(cfg, 1.4, 1000 + i).pixels[0];
                }
                omp_set_num_threads(omp_get_num_procs());
                sink = acc;
            },
            repeats);
        const double parallel = time_ms(
            [&] {
                double acc = 0.0;
                for (int i = 0; i < n_patches; ++i) acc += ctda::sample_texture(cfg, 1.4, 1000 + i).pixels[0];
                sink = acc;
            },
            repeats);
        report("texture 16x128^2", serial, parallel);
        (void)sink;
    }

    // block pooling
    {
        ctda::GeneratorConfig cfg;
        const auto patch = ctda::sample_texture(cfg, 1.4, 7);
        volatile double sink = 0.0;
        const double serial =
            time_ms([&] { sink = ctda::reference::naive_block_pool(patch.pixels, 256, 16)[0]; }, repeats);
        const double parallel = time_ms([&] { sink = ctda::featurize(patch.pixels, 256, 16)[0]; }, repeats);
        report("block pool 256->16", serial, parallel);
        (void)sink;
    }

    return 0;
}
