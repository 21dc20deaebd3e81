#include "tsprobe/tsne.hpp"

#include <algorithm>
#include <cmath>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

namespace tsprobe::tsne {

namespace {

// conditional distribution row with entropy matched to log(perplexity)
void fit_row(const Eigen::VectorXd& sq_dist, Eigen::Index self, double target_entropy,
             Eigen::VectorXd& p_row) {
    double beta = 1.0, beta_lo = -1.0, beta_hi = -1.0;
    const int n = static_cast<int>(sq_dist.size());
    for (int iter = 0; iter < 60; ++iter) {
        double sum = 0.0, weighted = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == self) {
                p_row(j) = 0.0;
                continue;
            }
            double w = std::exp(-beta * sq_dist(j));
            p_row(j) = w;
            sum += w;
            weighted += w * sq_dist(j);
        }
        if (sum <= 0.0) sum = 1e-300;
        double entropy = std::log(sum) + beta * weighted / sum;
        double diff = entropy - target_entropy;
        if (std::abs(diff) < 1e-5) break;
        if (diff > 0) {
            beta_lo = beta;
            beta = (beta_hi < 0) ? beta * 2.0 : 0.5 * (beta + beta_hi);
        } else {
            beta_hi = beta;
            beta = (beta_lo < 0) ? beta * 0.5 : 0.5 * (beta + beta_lo);
        }
    }
    double sum = p_row.sum();
    if (sum > 0) p_row /= sum;
}

}  // namespace

Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& features, const TsneConfig& config) {
    const Eigen::Index n = features.rows();
    if (n < 4) throw DomainError("tsne: need at least 4 points");
    double perplexity = std::min(config.perplexity, (static_cast<double>(n) - 1.0) / 3.0);
    perplexity = std::max(2.0, perplexity);

    // pairwise squared distances
    Eigen::VectorXd sq = features.rowwise().squaredNorm();
    Eigen::MatrixXd dist =
        (sq.replicate(1, n) + sq.transpose().replicate(n, 1) - 2.0 * features * features.transpose())
            .cwiseMax(0.0);

    Eigen::MatrixXd p(n, n);
    Eigen::VectorXd row(n);
    const double target_entropy = std::log(perplexity);
    for (Eigen::Index i = 0; i < n; ++i) {
        fit_row(dist.row(i), i, target_entropy, row);
        p.row(i) = row;
    }
    p = (p + p.transpose()).eval() / (2.0 * static_cast<double>(n));
    p = p.cwiseMax(1e-12);

    // seeded small gaussian init
    Eigen::MatrixXd y(n, 2);
    uint64_t state = util::mix64(config.seed ^ 0x7e5eULL);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int d = 0; d < 2; ++d) {
            double g = 0.0;
            for (int k = 0; k < 4; ++k) g += util::u64_to_unit(util::splitmix64(state));
            y(i, d) = 1e-4 * (g - 2.0);
        }
    }

    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gradient(n, 2);
    const int exaggeration_end = std::min(250, config.iterations / 2);
    for (int iter = 0; iter < config.iterations; ++iter) {
        const double exaggeration = iter < exaggeration_end ? 12.0 : 1.0;
        const double momentum = iter < exaggeration_end ? 0.5 : 0.8;

        Eigen::VectorXd ysq = y.rowwise().squaredNorm();
        Eigen::MatrixXd num =
            (1.0 + (ysq.replicate(1, n) + ysq.transpose().replicate(n, 1) -
                    2.0 * y * y.transpose()).array())
                .inverse()
                .matrix();
        num.diagonal().setZero();
        double q_sum = num.sum();
        if (q_sum <= 0) q_sum = 1e-300;

        gradient.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                double q = num(i, j) / q_sum;
                double coeff = 4.0 * (exaggeration * p(i, j) - q) * num(i, j);
                gradient.row(i) += coeff * (y.row(i) - y.row(j));
            }
        }
        velocity = momentum * velocity - config.learning_rate * gradient;
        y += velocity;
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

}  // namespace tsprobe::tsne
