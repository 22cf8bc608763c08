// Serial vs OpenMP timing for the dense kernels and the raycaster.
#include <chrono>
#include <cstdio>
#include <vector>

#include "glocnav/parallel.hpp"
#include "glocnav/perception.hpp"
#include "glocnav/simkit.hpp"
#include "glocnav/tensorcore.hpp"

using namespace glocnav;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        auto t0 = Clock::now();
        f();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

}  // namespace

int main() {
    std::printf("worker threads: %d\n", worker_threads());
    Rng rng = make_root_rng(7);

    {
        int m = 192, k = 192, n = 192;
        std::vector<tc::Scalar> a(m * k), b(k * n), c(m * n);
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        double ts = time_best_of(5, [&] {
            tc::matmul_raw_serial(a.data(), b.data(), c.data(), m, k, n);
        });
        double tp = time_best_of(5, [&] {
            tc::matmul_raw_omp(a.data(), b.data(), c.data(), m, k, n);
        });
        std::printf("matmul %dx%dx%d     serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n",
                    m, k, n, ts, tp, ts / tp);
    }

    {
        int cin = 64, len = 512, cout = 64, ks = 3, lout = 512;
        std::vector<tc::Scalar> x(cin * len), w(cout * cin * ks), y(cout * lout);
        for (auto& v : x) v = rng.uniform(-1, 1);
        for (auto& v : w) v = rng.uniform(-1, 1);
        double ts = time_best_of(5, [&] {
            tc::conv1d_raw_serial(x.data(), w.data(), y.data(), cin, len, cout, ks, 1, lout);
        });
        double tp = time_best_of(5, [&] {
            tc::conv1d_raw_omp(x.data(), w.data(), y.data(), cin, len, cout, ks, 1, lout);
        });
        std::printf("conv1d %dc x %d      serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n",
                    cin, len, ts, tp, ts / tp);
    }

    {
        SimWorld world = generate_world(11, 128, 0.06);
        std::vector<Pose> poses;
        Rng prng = make_root_rng(3);
        while (poses.size() < 64) {
            auto c = sample_free_cell(world, prng);
            if (!c) break;
            Vec2 p = cell_to_world(*c, world.plan);
            poses.emplace_back(p.x, p.y, prng.uniform(-kPi, kPi), Frame::WORLD);
        }
        auto scan_all_serial = [&] {
            for (const Pose& p : poses) raycast_depth(p, world.full, 64, kPi / 2, 5.0);
        };
        auto scan_all_omp = [&] {
#pragma omp parallel for num_threads(worker_threads())
            for (int i = 0; i < static_cast<int>(poses.size()); ++i)
                raycast_depth(poses[i], world.full, 64, kPi / 2, 5.0);
        };
        double ts = time_best_of(5, scan_all_serial);
        double tp = time_best_of(5, scan_all_omp);
        std::printf("raycast 64 poses       serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n",
                    ts, tp, ts / tp);
    }
    return 0;
}
