// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <Eigen/QR>

#include <cmath>
#include <random>
#include <stdexcept>

namespace sketchcp::oracle {

std::uint64_t unfolding_columns(std::span<const std::uint64_t> dims, std::size_t skip) {
    std::uint64_t c = 1;
    for (std::size_t i = 0; i < dims.size(); ++i)
        if (i != skip) c *= dims[i];
    return c;
}

std::uint64_t unfolding_column(std::span<const std::uint64_t> dims, std::size_t skip, std::span<const index_t> tuple) {
    std::uint64_t col = 0, stride = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i == skip) continue;
        col += tuple[i] * stride;
        stride *= dims[i];
    }
    return col;
}

std::vector<index_t> unfolding_tuple(std::span<const std::uint64_t> dims, std::size_t skip, std::uint64_t column) {
    std::vector<index_t> t(dims.size(), 0);
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i == skip) continue;
        t[i] = static_cast<index_t>(column % dims[i]);
        column /= dims[i];
    }
    return t;
}

Matrix khatri_rao(std::span<const Matrix> factors, std::size_t skip) {
    std::vector<std::uint64_t> dims;
    for (const auto& f : factors) dims.push_back(static_cast<std::uint64_t>(f.rows()));
    const std::uint64_t rows = unfolding_columns(dims, skip);
    if (rows > 1'000'000) throw std::length_error("khatri_rao: too many rows for a dense oracle");
    const Eigen::Index r = factors[skip == 0 && factors.size() > 1 ? 1 : 0].cols();
    Matrix out(static_cast<Eigen::Index>(rows), r);
    for (std::uint64_t c = 0; c < rows; ++c) {
        const auto tuple = unfolding_tuple(dims, skip, c);
        for (Eigen::Index j = 0; j < r; ++j) {
            double v = 1.0;
            for (std::size_t i = 0; i < factors.size(); ++i)
                if (i != skip) v *= factors[i](tuple[i], j);
            out(static_cast<Eigen::Index>(c), j) = v;
        }
    }
    return out;
}

Matrix dense_unfolding(const SparseTensor& t, std::size_t k) {
    const std::uint64_t cols = unfolding_columns(t.dims, k);
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(t.dims[k]), static_cast<Eigen::Index>(cols));
    for (std::size_t e = 0; e < t.nnz(); ++e) {
        const auto tuple = t.coords(e);
        m(tuple[k], static_cast<Eigen::Index>(unfolding_column(t.dims, k, tuple))) += t.values[e];
    }
    return m;
}

Matrix dense_mttkrp(const SparseTensor& t, std::span<const Matrix> factors, std::size_t k) {
    return dense_unfolding(t, k) * khatri_rao(factors, k);
}

std::vector<double> hat_diagonal(const Matrix& a) {
    Eigen::MatrixXd dense = a;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(dense);
    const Eigen::MatrixXd pinv = cod.pseudoInverse();  // R x rows
    std::vector<double> lev(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) lev[static_cast<std::size_t>(i)] = dense.row(i).dot(pinv.col(i));
    return lev;
}

std::vector<double> krp_leverage(std::span<const Matrix> factors, std::size_t skip) {
    auto lev = hat_diagonal(khatri_rao(factors, skip));
    double total = 0.0;
    for (double v : lev) total += v;
    for (double& v : lev) v /= total;
    return lev;
}

std::vector<double> product_leverage(std::span<const Matrix> factors, std::size_t skip) {
    std::vector<std::uint64_t> dims;
    std::vector<std::vector<double>> per(factors.size());
    for (std::size_t i = 0; i < factors.size(); ++i) {
        dims.push_back(static_cast<std::uint64_t>(factors[i].rows()));
        if (i == skip) continue;
        per[i] = hat_diagonal(factors[i]);
        double total = 0.0;
        for (double v : per[i]) total += v;
        for (double& v : per[i]) v /= total;
    }
    const std::uint64_t rows = unfolding_columns(dims, skip);
    std::vector<double> out(rows);
    for (std::uint64_t c = 0; c < rows; ++c) {
        const auto tuple = unfolding_tuple(dims, skip, c);
        double p = 1.0;
        for (std::size_t i = 0; i < factors.size(); ++i)
            if (i != skip) p *= per[i][tuple[i]];
        out[c] = p;
    }
    return out;
}

double dense_fit(const SparseTensor& t, std::span<const Matrix> factors, std::span<const double> sigma) {
    // Full dense tensor, first mode fastest.
    std::uint64_t total = 1;
    for (auto d : t.dims) total *= d;
    if (total > 10'000'000) throw std::length_error("dense_fit: tensor too large");
    std::vector<double> dense(total, 0.0);
    auto linear = [&](std::span<const index_t> tuple) {
        std::uint64_t idx = 0, stride = 1;
        for (std::size_t i = 0; i < t.dims.size(); ++i) {
            idx += tuple[i] * stride;
            stride *= t.dims[i];
        }
        return idx;
    };
    for (std::size_t e = 0; e < t.nnz(); ++e) dense[linear(t.coords(e))] += t.values[e];
    double diff = 0.0, norm = 0.0;
    std::vector<index_t> tuple(t.dims.size(), 0);
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        std::uint64_t rest = idx;
        for (std::size_t i = 0; i < t.dims.size(); ++i) {
            tuple[i] = static_cast<index_t>(rest % t.dims[i]);
            rest /= t.dims[i];
        }
        double model = 0.0;
        for (std::size_t r = 0; r < sigma.size(); ++r) {
            double term = sigma[r];
            for (std::size_t i = 0; i < factors.size(); ++i) term *= factors[i](tuple[i], static_cast<Eigen::Index>(r));
            model += term;
        }
        diff += (dense[idx] - model) * (dense[idx] - model);
        norm += dense[idx] * dense[idx];
    }
    return 1.0 - std::sqrt(diff) / std::sqrt(norm);
}

Matrix explicit_sketch_mttkrp(const SparseTensor& t, std::span<const Matrix> factors, const SampleBatch& batch) {
    const std::size_t k = batch.skip;
    const std::uint64_t cols = unfolding_columns(t.dims, k);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch.count), static_cast<Eigen::Index>(cols));
    for (std::size_t j = 0; j < batch.count; ++j)
        s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(unfolding_column(t.dims, k, batch.row(j)))) =
            batch.weights[j];
    const Eigen::MatrixXd m = dense_unfolding(t, k);
    const Eigen::MatrixXd krp = khatri_rao(factors, k);
    return m * s.transpose() * s * krp;
}

std::vector<std::pair<index_t, double>> filter_scan(const SparseTensor& t, std::size_t k,
                                                    std::span<const index_t> tuple) {
    std::vector<std::pair<index_t, double>> out;
    for (std::size_t e = 0; e < t.nnz(); ++e) {
        const auto c = t.coords(e);
        bool match = true;
        for (std::size_t i = 0; i < t.dims.size(); ++i)
            if (i != k && c[i] != tuple[i]) match = false;
        if (match) out.emplace_back(c[k], t.values[e]);
    }
    return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
    return 0.5 * d;
}

std::vector<double> empirical(const SampleBatch& batch, std::span<const std::uint64_t> dims) {
    std::vector<double> freq(unfolding_columns(dims, batch.skip), 0.0);
    for (std::size_t s = 0; s < batch.count; ++s) freq[unfolding_column(dims, batch.skip, batch.row(s))] += 1.0;
    for (double& f : freq) f /= static_cast<double>(batch.count);
    return freq;
}

SparseTensor synthesize(std::span<const Matrix> factors, std::span<const double> sigma) {
    SparseTensor t;
    for (const auto& f : factors) t.dims.push_back(static_cast<std::uint64_t>(f.rows()));
    std::uint64_t total = 1;
    for (auto d : t.dims) total *= d;
    std::vector<index_t> tuple(t.dims.size());
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        std::uint64_t rest = idx;
        for (std::size_t i = t.dims.size(); i-- > 0;) {
            tuple[i] = static_cast<index_t>(rest % t.dims[i]);
            rest /= t.dims[i];
        }
        double v = 0.0;
        for (std::size_t r = 0; r < sigma.size(); ++r) {
            double term = sigma[r];
            for (std::size_t i = 0; i < factors.size(); ++i) term *= factors[i](tuple[i], static_cast<Eigen::Index>(r));
            v += term;
        }
        t.indices.insert(t.indices.end(), tuple.begin(), tuple.end());
        t.values.push_back(v);
    }
    return t;
}

SparseTensor random_tensor(std::span<const std::uint64_t> dims, double density, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SparseTensor t;
    t.dims.assign(dims.begin(), dims.end());
    std::uint64_t total = 1;
    for (auto d : dims) total *= d;
    std::vector<index_t> tuple(dims.size());
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        const bool keep = u(g) < density;
        const double v = 1.0 - u(g);
        if (!keep && !(idx + 1 == total && t.nnz() == 0)) continue;
        std::uint64_t rest = idx;
        for (std::size_t i = dims.size(); i-- > 0;) {
            tuple[i] = static_cast<index_t>(rest % dims[i]);
            rest /= dims[i];
        }
        t.indices.insert(t.indices.end(), tuple.begin(), tuple.end());
        t.values.push_back(v);
    }
    return t;
}

std::vector<Matrix> random_factors(std::span<const std::uint64_t> dims, Eigen::Index rank, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Matrix> out;
    for (auto d : dims) {
        Matrix m(static_cast<Eigen::Index>(d), rank);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(g);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace sketchcp::oracle
