#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace tsprobe::tsne {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 500;
    double learning_rate = 200.0;
    uint64_t seed = 0;
};

/// Exact (O(N^2)) t-SNE to two dimensions. Fine for the desk-scale embedding
/// figures; the seed fully determines the output.
Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& features, const TsneConfig& config = {});

}  // namespace tsprobe::tsne
