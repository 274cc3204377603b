#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "psephos/plan.hpp"
#include "psephos/rng.hpp"

namespace psephos {

struct GridInstanceOptions {
    int width = 8;
    int height = 8;
    long long pop_lo = 800;
    long long pop_hi = 2400;
    double turnout = 0.55;
    // spatial structure of the two-party vote field: white noise blurred
    // with a Gaussian kernel, then scaled to the requested swing
    double blur_sigma = 2.2;
    double spread = 0.22;
    double spread_jitter = 0.7;  // per-instance relative variation of the spread
    double max_aggregate_gap = 0.01;
};

// Two-party grid instance with spatially autocorrelated support and
// near-tied aggregate shares. Everything is a deterministic function of the
// seed.
inline PrecinctGraph make_grid_instance(const GridInstanceOptions& opt, std::uint64_t seed) {
    if (opt.width < 2 || opt.height < 2) throw DomainError("make_grid_instance: grid too small");
    Rng rng(seed);
    const int w = opt.width, h = opt.height, n = w * h;

    std::vector<double> noise(static_cast<std::size_t>(n));
    for (double& x : noise) x = rng.normal();

    // Gaussian blur with renormalized edge weights
    int radius = static_cast<int>(std::ceil(3.0 * opt.blur_sigma));
    std::vector<double> field(static_cast<std::size_t>(n), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                    double g = std::exp(-0.5 * (dx * dx + dy * dy) / (opt.blur_sigma * opt.blur_sigma));
                    acc += g * noise[static_cast<std::size_t>(yy * w + xx)];
                    wsum += g;
                }
            }
            field[static_cast<std::size_t>(y * w + x)] = acc / wsum;
        }
    }
    double mean = 0.0, var = 0.0;
    for (double f : field) mean += f;
    mean /= n;
    for (double f : field) var += (f - mean) * (f - mean);
    var /= n;
    double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;

    double spread = opt.spread * (1.0 + opt.spread_jitter * (2.0 * rng.uniform() - 1.0));

    PrecinctGraph g;
    g.parties = {"p", "q"};
    std::vector<long long> pops(static_cast<std::size_t>(n));
    std::vector<long long> turnout(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        pops[static_cast<std::size_t>(i)] =
            opt.pop_lo + static_cast<long long>(rng.uniform_int(static_cast<std::uint64_t>(opt.pop_hi - opt.pop_lo + 1)));
        turnout[static_cast<std::size_t>(i)] = static_cast<long long>(
            std::llround(opt.turnout * static_cast<double>(pops[static_cast<std::size_t>(i)])));
    }

    // calibrate the offset so the aggregate shares come out nearly tied
    auto build_votes = [&](double offset, std::vector<long long>& vp, std::vector<long long>& vq) {
        vp.resize(static_cast<std::size_t>(n));
        vq.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double share = 0.5 + offset + spread * scale * (field[static_cast<std::size_t>(i)] - mean);
            share = clamp(share, 0.08, 0.92);
            long long t = turnout[static_cast<std::size_t>(i)];
            vp[static_cast<std::size_t>(i)] = static_cast<long long>(std::llround(share * static_cast<double>(t)));
            vq[static_cast<std::size_t>(i)] = t - vp[static_cast<std::size_t>(i)];
        }
    };
    auto aggregate_gap = [&](const std::vector<long long>& vp, const std::vector<long long>& vq) {
        long long p = 0, q = 0;
        for (int i = 0; i < n; ++i) {
            p += vp[static_cast<std::size_t>(i)];
            q += vq[static_cast<std::size_t>(i)];
        }
        return static_cast<double>(p - q) / static_cast<double>(p + q);
    };

    std::vector<long long> vp, vq;
    double lo = -0.2, hi = 0.2;
    double offset = 0.0;
    for (int it = 0; it < 60; ++it) {
        offset = 0.5 * (lo + hi);
        build_votes(offset, vp, vq);
        double gap = aggregate_gap(vp, vq);
        if (std::fabs(gap) <= 0.25 * opt.max_aggregate_gap) break;
        if (gap > 0.0)
            hi = offset;
        else
            lo = offset;
    }
    build_votes(offset, vp, vq);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int i = y * w + x;
            Precinct pc;
            pc.id = "r" + std::to_string(y + 1) + "c" + std::to_string(x + 1);
            pc.population = pops[static_cast<std::size_t>(i)];
            pc.votes = {vp[static_cast<std::size_t>(i)], vq[static_cast<std::size_t>(i)]};
            g.nodes.push_back(std::move(pc));
            if (x + 1 < w) g.edges.emplace_back(i, i + 1);
            if (y + 1 < h) g.edges.emplace_back(i, i + w);
        }
    }
    g.finalize();
    return g;
}

}  // namespace psephos
