#ifndef FINKIT_TEST_SYNTHETIC_HPP
#define FINKIT_TEST_SYNTHETIC_HPP

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "finkit/corpus_io.hpp"

namespace synth {

struct Labeled {
    finkit::EmbeddingMatrix x;
    std::vector<int> truth; // -1 for noise
};

inline std::vector<std::string> ids(std::size_t n, const std::string& prefix = "p") {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(prefix + std::to_string(i));
    }
    return out;
}

/// Two isotropic Gaussians (sd 1) centred 10 apart plus uniform noise far
/// from both, in `dim` dimensions.
inline Labeled two_gaussians_with_noise(std::uint64_t seed, std::size_t per_blob = 100, std::size_t noise = 10,
                                        std::size_t dim = 2) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(-60.0, 60.0);
    std::vector<float> data;
    std::vector<int> truth;
    for (int blob = 0; blob < 2; ++blob) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                data.push_back(static_cast<float>((d == 0 ? (blob == 0 ? -5.0 : 5.0) : 0.0) + normal(gen)));
            }
            truth.push_back(blob);
        }
    }
    for (std::size_t i = 0; i < noise; ++i) {
        // Noise sits on a ring of radius >= 30 so it never touches the blobs.
        std::vector<double> p(dim);
        double norm = 0;
        for (auto& v : p) {
            v = unif(gen);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        const double radius = 30.0 + 30.0 * static_cast<double>(i) / static_cast<double>(noise);
        for (auto v : p) {
            data.push_back(static_cast<float>(v / norm * radius));
        }
        truth.push_back(-1);
    }
    return {finkit::EmbeddingMatrix(ids(truth.size()), dim, std::move(data)), truth};
}

/// Gaussian blobs of `per_blob` points in `dim` dimensions, centres `gap` apart on axis 0.
inline Labeled blobs(std::uint64_t seed, std::size_t n_blobs, std::size_t per_blob, std::size_t dim, double gap) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> data;
    std::vector<int> truth;
    for (std::size_t b = 0; b < n_blobs; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                data.push_back(static_cast<float>((d == 0 ? gap * static_cast<double>(b) : 0.0) + normal(gen)));
            }
            truth.push_back(static_cast<int>(b));
        }
    }
    return {finkit::EmbeddingMatrix(ids(truth.size()), dim, std::move(data)), truth};
}

/// Swiss roll: a 2-d sheet rolled up in 3-d.
inline finkit::EmbeddingMatrix swiss_roll(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<float> data;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 1.5 * M_PI * (1.0 + 2.0 * unif(gen));
        const double h = 21.0 * unif(gen);
        data.push_back(static_cast<float>(t * std::cos(t)));
        data.push_back(static_cast<float>(h));
        data.push_back(static_cast<float>(t * std::sin(t)));
    }
    return finkit::EmbeddingMatrix(ids(n), 3, std::move(data));
}

inline std::vector<std::vector<double>> rows(const finkit::EmbeddingMatrix& m) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out.emplace_back(m.row(i).begin(), m.row(i).end());
    }
    return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("finkit-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace synth

#endif
