#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "evidex/common.hpp"

namespace evidex::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
inline S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865475)));
}

template <class S>
inline S gelu_prime(S x) {
    const S phi = std::exp(S(-0.5) * x * x) * S(0.3989422804014327);
    return S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475))) + x * phi;
}

template <class S>
inline Mat<S> gelu_mat(const Mat<S>& x) {
    return x.unaryExpr([](S v) { return gelu(v); });
}

// Row-wise numerically stable softmax.
template <class S>
inline Mat<S> softmax_rows(const Mat<S>& scores) {
    Mat<S> out(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        S m = scores.row(i).maxCoeff();
        Vec<S> e = (scores.row(i).array() - m).exp().matrix().transpose();
        out.row(i) = (e / e.sum()).transpose();
    }
    return out;
}

// dScores for row-wise softmax with probabilities `p` and upstream `dp`.
template <class S>
inline Mat<S> softmax_rows_backward(const Mat<S>& p, const Mat<S>& dp) {
    Mat<S> ds(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        S dot = p.row(i).dot(dp.row(i));
        ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
    }
    return ds;
}

template <class S>
struct LayerNormCache {
    Mat<S> xhat;       // per-row normalized input
    Vec<S> inv_std;    // per row
};

template <class S>
inline Mat<S> layernorm_forward(const Mat<S>& x, const Vec<S>& gamma, const Vec<S>& beta,
                                LayerNormCache<S>& cache, S eps = S(1e-5)) {
    const Eigen::Index n = x.cols();
    cache.xhat.resize(x.rows(), n);
    cache.inv_std.resize(x.rows());
    Mat<S> y(x.rows(), n);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        S mu = x.row(i).mean();
        Eigen::Matrix<S, 1, Eigen::Dynamic> c = x.row(i).array() - mu;
        S var = c.squaredNorm() / static_cast<S>(n);
        S istd = S(1) / std::sqrt(var + eps);
        cache.inv_std(i) = istd;
        cache.xhat.row(i) = c * istd;
        y.row(i) = cache.xhat.row(i).cwiseProduct(gamma.transpose()) + beta.transpose();
    }
    return y;
}

template <class S>
inline Mat<S> layernorm_backward(const Mat<S>& dy, const Vec<S>& gamma,
                                 const LayerNormCache<S>& cache, Vec<S>& dgamma,
                                 Vec<S>& dbeta) {
    const Eigen::Index n = dy.cols();
    Mat<S> dx(dy.rows(), n);
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat = dy.row(i).cwiseProduct(gamma.transpose());
        S m1 = dxhat.mean();
        S m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
        dx.row(i) = cache.inv_std(i) *
                    (dxhat.array() - m1 - cache.xhat.row(i).array() * m2).matrix();
        dgamma += dy.row(i).cwiseProduct(cache.xhat.row(i)).transpose();
        dbeta += dy.row(i).transpose();
    }
    return dx;
}

// Gauss-Legendre nodes/weights on [0, 1]. Newton iteration from Chebyshev
// initial guesses; used for the integrated-gradients path integral.
inline void gauss_legendre_01(int n, std::vector<double>& nodes,
                              std::vector<double>& weights) {
    EVIDEX_REQUIRE(n >= 1, "config", "quadrature order must be >= 1");
    nodes.assign(static_cast<size_t>(n), 0.0);
    weights.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        // Root of P_n in (-1, 1).
        double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[static_cast<size_t>(i)] = 0.5 * (x + 1.0);
        weights[static_cast<size_t>(i)] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
}

}  // namespace evidex::nn
