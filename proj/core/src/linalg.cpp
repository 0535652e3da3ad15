// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/linalg.hpp"

#include "sketchcp/mttkrp.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace sketchcp {

FactorSet::FactorSet(ProcessorGrid grid, std::vector<Matrix> factors)
    : grid_(std::move(grid)), factors_(std::move(factors)) {
    if (factors_.empty()) throw ShapeError("factor set is empty");
    if (grid_.mode_count() != factors_.size()) throw ShapeError("grid and factor mode counts differ");
    for (const auto& f : factors_)
        if (f.cols() != factors_.front().cols()) throw ShapeError("factor matrices disagree on rank");
}

FactorBlock FactorSet::block(std::size_t mode, int rank) const {
    const RowRange r = owned_rows(mode, rank);
    const Matrix& m = factors_[mode];
    return {mode, rank, r.begin,
            ConstMatrixMap(m.data() + static_cast<Eigen::Index>(r.begin) * m.cols(),
                           static_cast<Eigen::Index>(r.size()), m.cols())};
}

std::vector<FactorBlock> FactorSet::blocks(std::size_t mode) const {
    std::vector<FactorBlock> out;
    for (int p = 0; p < grid_.rank_count(); ++p) out.push_back(block(mode, p));
    return out;
}

SquareMatrix local_gram(const ConstMatrixMap& rows) {
    SquareMatrix g = SquareMatrix::Zero(rows.cols(), rows.cols());
    if (rows.rows() == 0) return g;
    g.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose());
    return g.selfadjointView<Eigen::Lower>();
}

SquareMatrix gram(std::span<const FactorBlock> blocks) {
    if (blocks.empty()) throw ShapeError("gram: no blocks");
    const Eigen::Index r = blocks.front().rows.cols();
    SquareMatrix g = SquareMatrix::Zero(r, r);
    for (const auto& b : blocks) {
        if (b.rows.cols() != r) throw ShapeError("gram: blocks disagree on rank");
        g += local_gram(b.rows);
    }
    return g;
}

SquareMatrix gram_allreduce(Communicator& comm, std::span<const FactorBlock> blocks) {
    if (blocks.size() != static_cast<std::size_t>(comm.grid().rank_count()))
        throw ShapeError("gram_allreduce: one block per rank required");
    const Eigen::Index r = blocks.front().rows.cols();
    std::vector<std::vector<double>> payloads;
    std::vector<int> group;
    for (const auto& b : blocks) {
        if (b.rows.cols() != r) throw ShapeError("gram: blocks disagree on rank");
        SquareMatrix g = local_gram(b.rows);
        payloads.emplace_back(g.data(), g.data() + g.size());
        group.push_back(b.owner);
    }
    auto sum = comm.allreduce<double>(group, payloads);
    return Eigen::Map<SquareMatrix>(sum.data(), r, r);
}

SquareMatrix hadamard_gram_chain(std::span<const SquareMatrix> grams, std::optional<std::size_t> skip) {
    if (grams.empty() || (grams.size() == 1 && skip && *skip == 0))
        throw ShapeError("hadamard_gram_chain: empty chain");
    const Eigen::Index r = grams.front().rows();
    SquareMatrix out = SquareMatrix::Ones(r, r);
    for (std::size_t i = 0; i < grams.size(); ++i) {
        if (skip && *skip == i) continue;
        if (grams[i].rows() != r || grams[i].cols() != r) throw ShapeError("hadamard_gram_chain: shape mismatch");
        out = out.cwiseProduct(grams[i]);
    }
    return out;
}

SquareMatrix pseudo_inverse(const SquareMatrix& g, double cutoff) {
    if (g.rows() != g.cols()) throw ShapeError("pseudo_inverse: matrix not square");
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw Error("pseudo_inverse: input is not symmetric");
    Eigen::SelfAdjointEigenSolver<SquareMatrix> eig(0.5 * (g + g.transpose()));
    const Vector& lambda = eig.eigenvalues();
    const double lmax = lambda.cwiseAbs().maxCoeff();
    Vector inv = Vector::Zero(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        if (lambda[i] > cutoff * lmax) inv[i] = 1.0 / lambda[i];
    const SquareMatrix& v = eig.eigenvectors();
    SquareMatrix out = v * inv.asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose());
}

std::vector<double> normalize_columns(Matrix& u) {
    std::vector<double> norms(static_cast<std::size_t>(u.cols()));
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        const double n = u.col(c).norm();
        norms[static_cast<std::size_t>(c)] = n;
        if (n > 0.0) u.col(c) /= n;
    }
    return norms;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Engine& g) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(g);
    return m;
}

double compute_fit(const Matricization& last_mode, double tensor_norm_sq, std::span<const Matrix> factors,
                   std::span<const double> sigma) {
    const std::size_t n = factors.size();
    if (tensor_norm_sq <= 0.0) throw Error("compute_fit: tensor has zero norm");
    if (last_mode.mode() != n - 1 || last_mode.mode_count() != n)
        throw ShapeError("compute_fit: expected the final-mode matricization");
    const Eigen::Index r = factors.front().cols();
    if (sigma.size() != static_cast<std::size_t>(r)) throw ShapeError("compute_fit: sigma length differs from rank");

    std::vector<SquareMatrix> grams;
    std::vector<RowSource> sources;
    for (const auto& f : factors) {
        grams.push_back(local_gram(ConstMatrixMap(f.data(), f.rows(), f.cols())));
        sources.push_back(RowSource::whole(f));
    }
    const Eigen::Map<const Vector> s(sigma.data(), r);
    const double model_sq = s.dot(hadamard_gram_chain(grams) * s);

    const Matrix m = mttkrp_exact(last_mode, sources);
    const Matrix& last = factors[n - 1];
    double inner = 0.0;
    for (Eigen::Index c = 0; c < r; ++c) inner += s[c] * last.col(c).dot(m.col(c));

    const double residual_sq = std::max(0.0, tensor_norm_sq + model_sq - 2.0 * inner);
    return 1.0 - std::sqrt(residual_sq) / std::sqrt(tensor_norm_sq);
}

double compute_fit(const SparseTensor& t, std::span<const Matrix> factors, std::span<const double> sigma) {
    if (factors.size() != t.mode_count()) throw ShapeError("compute_fit: factor count differs from mode count");
    return compute_fit(Matricization(t, t.mode_count() - 1), t.norm_squared(), factors, sigma);
}

}  // namespace sketchcp
