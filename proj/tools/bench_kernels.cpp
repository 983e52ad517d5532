// Compares the OpenMP kernels against the serial reference: bit-equality of
// results and wall-clock throughput at a few sizes.

#include <chrono>
#include <cstdio>
#include <vector>

#include "dited/kernels.hpp"
#include "dited/parallel.hpp"
#include "dited/rng.hpp"

using namespace dited;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Case {
    int64_t m, k, n;
};

void fill(std::vector<double>& v, Rng& rng) {
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", max_threads());
    std::printf("%8s %8s %8s | %10s %10s %8s | %s\n", "m", "k", "n", "serial", "parallel",
                "speedup", "bit-equal");

    const Case cases[] = {{64, 64, 64}, {128, 256, 128}, {256, 512, 256}, {512, 512, 512}};
    Rng rng(1234);
    for (const Case& c : cases) {
        std::vector<double> a(static_cast<size_t>(c.m * c.k)), b(static_cast<size_t>(c.k * c.n));
        std::vector<double> out_s(static_cast<size_t>(c.m * c.n)),
            out_p(static_cast<size_t>(c.m * c.n));
        fill(a, rng);
        fill(b, rng);

        const double flops = 2.0 * static_cast<double>(c.m) * c.k * c.n;
        int reps = static_cast<int>(2e8 / flops) + 1;

        double t0 = now_s();
        for (int r = 0; r < reps; ++r)
            matmul_serial(a.data(), b.data(), out_s.data(), c.m, c.k, c.n);
        const double ts = (now_s() - t0) / reps;

        t0 = now_s();
        for (int r = 0; r < reps; ++r) matmul(a.data(), b.data(), out_p.data(), c.m, c.k, c.n);
        const double tp = (now_s() - t0) / reps;

        bool equal = true;
        for (size_t i = 0; i < out_s.size(); ++i) equal = equal && out_s[i] == out_p[i];

        std::printf("%8lld %8lld %8lld | %8.2f GF %8.2f GF %7.2fx | %s\n",
                    static_cast<long long>(c.m), static_cast<long long>(c.k),
                    static_cast<long long>(c.n), flops / ts / 1e9, flops / tp / 1e9, ts / tp,
                    equal ? "yes" : "NO");
        if (!equal) return 1;
    }
    return 0;
}
