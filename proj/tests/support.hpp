#pragma once

#include <cginv/cgnet.hpp>
#include <cginv/model.hpp>

#include <random>
#include <vector>

namespace cginv::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

inline Vector random_vector(Index n, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

/// 4×4 images (n = 16), m = 8, orthonormal DCT dictionary.
struct TinyProblem {
    int n_side = 4;
    Matrix a;
    Matrix phi;
    std::vector<TrainSample> samples;
};

inline TinyProblem tiny_problem(std::size_t count, std::uint64_t seed) {
    TinyProblem p;
    const Index n = 16;
    p.a = random_matrix(8, n, seed, 1.0 / std::sqrt(8.0));
    p.phi = build_dct_dictionary(4);
    for (std::size_t s = 0; s < count; ++s) {
        Vector img = random_vector(n, seed + 100 + s, 0.2, 0.8);
        Vector c = p.phi.transpose() * img;
        Vector y = p.a * c + random_vector(8, seed + 200 + s, -1e-3, 1e-3);
        p.samples.push_back({y, c});
    }
    return p;
}

} // namespace cginv::testing
