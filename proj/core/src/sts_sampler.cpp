// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/samplers.hpp"

#include "sketchcp/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace sketchcp {
namespace {

constexpr double kBelowOne = 1.0 - 0x1.0p-53;

double quad(const SquareMatrix& m, const RowVector& h) { return std::max(0.0, (h * m).dot(h)); }

// One branching decision. Returns true for the right child and updates the
// residual uniform and the path probability.
bool branch(double left, double right, double& r, double& prob) {
    const double total = left + right;
    if (!(total > 0.0)) throw DegenerateWalkError("leverage walk reached a node with zero mass");
    const double t = left / total;
    if (r >= t) {
        prob *= right / total;
        r = (r - t) / (1.0 - t);
        r = std::clamp(r, 0.0, kBelowOne);
        return true;
    }
    prob *= t;
    r = std::clamp(r / t, 0.0, kBelowOne);
    return false;
}

std::size_t auto_block_rows(std::uint64_t rows) {
    return std::max<std::size_t>(8, static_cast<std::size_t>((rows + 8191) / 8192));
}

std::vector<SquareMatrix> weight_nodes(const std::vector<SquareMatrix>& nodes, const SquareMatrix& cond) {
    std::vector<SquareMatrix> out(nodes.size());
    for (std::size_t v = 1; v < nodes.size(); ++v) out[v] = nodes[v].cwiseProduct(cond);
    return out;
}

RowRange block_range(const LeverageTree::Local& local, std::size_t block) {
    const std::uint64_t begin = std::min(local.rows.end, local.rows.begin + block * local.block_rows);
    const std::uint64_t end = std::min(local.rows.end, begin + local.block_rows);
    return {begin, end};
}

double row_mass(const Matrix& factor, std::uint64_t row, const RowVector& h, const SquareMatrix& cond) {
    const RowVector v = factor.row(static_cast<Eigen::Index>(row)).cwiseProduct(h);
    return quad(cond, v);
}

}  // namespace

SquareMatrix sts_condition(std::span<const SquareMatrix> grams, const SquareMatrix& gram_pinv, std::size_t k,
                           std::size_t i) {
    SquareMatrix c = gram_pinv;
    for (std::size_t l = i + 1; l < grams.size(); ++l)
        if (l != k) c = c.cwiseProduct(grams[l]);
    return c;
}

LeverageTree sts_build(Communicator& comm, const FactorSet& factors, std::size_t mode, std::size_t leaf_block_size) {
    const ProcessorGrid& grid = comm.grid();
    const int procs = grid.rank_count();
    const Eigen::Index r = factors.rank();
    const Matrix& u = factors.matrix(mode);

    LeverageTree tree;
    tree.mode = mode;
    tree.rank = r;
    const std::size_t leaves = std::bit_ceil(static_cast<std::size_t>(procs));
    tree.levels = std::countr_zero(leaves);
    tree.leaf_rank.assign(leaves, -1);
    tree.position.assign(static_cast<std::size_t>(procs), 0);
    const auto order = grid.owner_order(mode);
    for (std::size_t t = 0; t < order.size(); ++t) {
        tree.leaf_rank[t] = order[t];
        tree.position[static_cast<std::size_t>(order[t])] = static_cast<int>(t);
    }

    tree.local.resize(leaves);
    parallel_for(leaves, [&](std::size_t t) {
        auto& loc = tree.local[t];
        if (tree.leaf_rank[t] >= 0) loc.rows = factors.owned_rows(mode, tree.leaf_rank[t]);
        loc.block_rows = leaf_block_size > 0 ? leaf_block_size : auto_block_rows(loc.rows.size());
        const std::size_t blocks = std::max<std::size_t>(1, (loc.rows.size() + loc.block_rows - 1) / loc.block_rows);
        loc.leaves = std::bit_ceil(blocks);
        loc.nodes.assign(2 * loc.leaves, SquareMatrix::Zero(r, r));
        for (std::size_t b = 0; b < blocks; ++b) {
            const RowRange rr = block_range(loc, b);
            if (rr.size() == 0) continue;
            loc.nodes[loc.leaves + b] = local_gram(ConstMatrixMap(
                u.data() + static_cast<Eigen::Index>(rr.begin) * r, static_cast<Eigen::Index>(rr.size()), r));
        }
        for (std::size_t v = loc.leaves; v-- > 1;) loc.nodes[v] = loc.nodes[2 * v] + loc.nodes[2 * v + 1];
    });

    tree.shared.assign(2 * leaves, SquareMatrix::Zero(r, r));
    for (std::size_t t = 0; t < leaves; ++t) tree.shared[leaves + t] = tree.local[t].nodes[1];
    for (std::size_t v = leaves; v-- > 1;) tree.shared[v] = tree.shared[2 * v] + tree.shared[2 * v + 1];

    // Bidirectional exchange: at each level a rank receives its sibling
    // subtree's partial Gram from a real rank inside that subtree.
    comm.set_phase(Phase::sampler_build);
    const auto words = static_cast<std::uint64_t>(r * r);
    for (int level = 1; level <= tree.levels; ++level) {
        const std::size_t half = std::size_t{1} << (level - 1);
        for (std::size_t t = 0; t < leaves; ++t) {
            if (tree.leaf_rank[t] < 0) continue;
            const std::size_t sibling_start = (t ^ half) & ~(half - 1);
            if (tree.leaf_rank[sibling_start] >= 0) comm.record_exchange(tree.leaf_rank[t], words);
        }
    }
    return tree;
}

LeafPick local_sts_leaf_search(const LeverageTree::Local& local, const std::vector<SquareMatrix>& weighted,
                               const Matrix& factor, const RowVector& h, const SquareMatrix& cond, double r) {
    if (!(r >= 0.0 && r < 1.0)) throw Error("local_sts_leaf_search: residual outside [0, 1)");
    LeafPick pick;
    pick.prob = 1.0;
    std::size_t v = 1;
    while (v < local.leaves) {
        const bool right = branch(quad(weighted[2 * v], h), quad(weighted[2 * v + 1], h), r, pick.prob);
        v = 2 * v + (right ? 1 : 0);
    }
    const RowRange rows = block_range(local, v - local.leaves);
    std::vector<double> mass(rows.size());
    double total = 0.0;
    for (std::uint64_t q = 0; q < rows.size(); ++q) {
        mass[q] = row_mass(factor, rows.begin + q, h, cond);
        total += mass[q];
    }
    if (!(total > 0.0)) throw DegenerateWalkError("leverage walk reached a block with zero mass");
    const double target = r * total;
    double cumulative = 0.0;
    std::size_t chosen = rows.size();
    for (std::size_t q = 0; q < mass.size(); ++q) {
        cumulative += mass[q];
        if (cumulative > target && mass[q] > 0.0) {
            chosen = q;
            break;
        }
    }
    if (chosen == rows.size())
        for (std::size_t q = mass.size(); q-- > 0;)
            if (mass[q] > 0.0) {
                chosen = q;
                break;
            }
    pick.row = rows.begin + chosen;
    pick.prob *= mass[chosen] / total;
    return pick;
}

SampleBatch sts_sample(Communicator& comm, std::span<const LeverageTree> trees, const FactorSet& factors,
                       std::span<const SquareMatrix> grams, const SquareMatrix& gram_pinv, std::size_t k,
                       std::size_t J, std::uint64_t seed, std::uint64_t round) {
    const std::size_t n = factors.mode_count();
    const int procs = comm.grid().rank_count();
    const auto pcount = static_cast<std::size_t>(procs);
    const Eigen::Index rk = factors.rank();
    const auto R = static_cast<std::size_t>(rk);

    SampleBatch batch;
    batch.mode_count = n;
    batch.skip = k;
    batch.count = J;
    batch.X.assign(J * n, 0);
    batch.prob.assign(J, 1.0);
    if (J == 0) {
        batch.H.resize(0, rk);
        return batch;
    }
    comm.set_phase(Phase::sampling);
    const auto world = comm.world();

    // Routed record: id, r, prob, X (n), h (R).
    const std::size_t width = n + R + 3;
    const std::size_t off_x = 3, off_h = 3 + n;
    std::vector<std::vector<double>> held(pcount);
    for (std::size_t p = 0; p < pcount; ++p) {
        const RowRange mine = split_range(J, pcount, p);
        auto& buf = held[p];
        buf.assign(mine.size() * width, 0.0);
        for (std::uint64_t s = 0; s < mine.size(); ++s) {
            double* rec = buf.data() + s * width;
            rec[0] = static_cast<double>(mine.begin + s);
            rec[2] = 1.0;
            std::fill(rec + off_h, rec + off_h + R, 1.0);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (i == k) continue;
        const LeverageTree& tree = trees[i];
        if (tree.mode != i || tree.shared.empty()) throw Error("sts_sample: tree missing for mode " + std::to_string(i));
        const Matrix& u = factors.matrix(i);
        const SquareMatrix cond = sts_condition(grams, gram_pinv, k, i);
        const std::vector<SquareMatrix> wshared = weight_nodes(tree.shared, cond);
        std::vector<std::vector<SquareMatrix>> wlocal(tree.leaf_count());
        parallel_for(tree.leaf_count(), [&](std::size_t t) {
            if (tree.leaf_rank[t] >= 0) wlocal[t] = weight_nodes(tree.local[t].nodes, cond);
        });

        const std::uint64_t uid = stream_id({seed, StreamPurpose::sts_uniform, round, i, kSharedRank});
        for (auto& buf : held)
            for (std::size_t s = 0; s * width < buf.size(); ++s) {
                double* rec = buf.data() + s * width;
                rec[1] = counter_uniform(uid, static_cast<std::uint64_t>(rec[0]));
            }

        const std::size_t leaves = tree.leaf_count();
        for (int level = 0; level < tree.levels; ++level) {
            const int below = tree.levels - level - 1;  // height of the children
            std::vector<std::vector<std::vector<double>>> send(pcount, std::vector<std::vector<double>>(pcount));
            for (std::size_t a = 0; a < pcount; ++a) {
                const auto t = static_cast<std::size_t>(tree.position[a]);
                const std::size_t v = (leaves + t) >> (tree.levels - level);
                auto& buf = held[a];
                const std::size_t count = buf.size() / width;
                std::vector<int> dest(count);
                parallel_for(count, [&](std::size_t s) {
                    double* rec = buf.data() + s * width;
                    const Eigen::Map<const RowVector> hmap(rec + off_h, rk);
                    const RowVector h = hmap;
                    const bool right = branch(quad(wshared[2 * v], h), quad(wshared[2 * v + 1], h), rec[1], rec[2]);
                    const std::size_t child = 2 * v + (right ? 1 : 0);
                    const std::size_t first = (child << below) - leaves;
                    const std::size_t span = std::size_t{1} << below;
                    std::size_t pos = t;
                    if (t < first || t >= first + span) {
                        pos = t ^ span;
                        if (tree.leaf_rank[pos] < 0) pos = first;
                    }
                    dest[s] = tree.leaf_rank[pos];
                });
                for (std::size_t s = 0; s < count; ++s) {
                    auto& out = send[a][static_cast<std::size_t>(dest[s])];
                    out.insert(out.end(), buf.begin() + static_cast<std::ptrdiff_t>(s * width),
                               buf.begin() + static_cast<std::ptrdiff_t>((s + 1) * width));
                }
            }
            held = comm.all_to_allv<double>(world, send);
        }

        for (std::size_t a = 0; a < pcount; ++a) {
            const auto t = static_cast<std::size_t>(tree.position[a]);
            auto& buf = held[a];
            parallel_for(buf.size() / width, [&](std::size_t s) {
                double* rec = buf.data() + s * width;
                Eigen::Map<RowVector> h(rec + off_h, rk);
                const RowVector hv = h;
                const LeafPick pick = local_sts_leaf_search(tree.local[t], wlocal[t], u, hv, cond, rec[1]);
                rec[off_x + i] = static_cast<double>(pick.row);
                rec[2] *= pick.prob;
                h.array() *= u.row(static_cast<Eigen::Index>(pick.row)).array();
            });
        }
    }

    // Every rank learns every sample: id, prob and the sampled indices.
    std::vector<std::vector<double>> payloads(pcount);
    for (std::size_t a = 0; a < pcount; ++a) {
        const auto& buf = held[a];
        for (std::size_t s = 0; s * width < buf.size(); ++s) {
            const double* rec = buf.data() + s * width;
            payloads[a].push_back(rec[0]);
            payloads[a].push_back(rec[2]);
            for (std::size_t m = 0; m < n; ++m)
                if (m != k) payloads[a].push_back(rec[off_x + m]);
        }
    }
    auto all = comm.allgather<double>(world, payloads);
    const std::size_t stride = n + 1;
    for (std::size_t e = 0; e * stride < all->size(); ++e) {
        const double* rec = all->data() + e * stride;
        const auto id = static_cast<std::size_t>(rec[0]);
        batch.prob[id] = rec[1];
        std::size_t c = 2;
        for (std::size_t m = 0; m < n; ++m)
            if (m != k) batch.X[id * n + m] = static_cast<index_t>(rec[c++]);
    }
    batch.weights = sample_weights(batch.prob, J);
    fill_design_rows(batch, factors.matrices());
    return batch;
}

double sts_path_probability(std::span<const LeverageTree> trees, const FactorSet& factors,
                            std::span<const SquareMatrix> grams, const SquareMatrix& gram_pinv, std::size_t k,
                            std::span<const index_t> tuple) {
    const std::size_t n = factors.mode_count();
    if (tuple.size() != n) throw ShapeError("sts_path_probability: tuple arity differs from mode count");
    RowVector h = RowVector::Ones(factors.rank());
    double prob = 1.0;
    // Probability of taking the branch toward `go_right`, sharing the
    // walk's arithmetic.
    auto step = [&](double left, double right, bool go_right) {
        const double total = left + right;
        if (!(total > 0.0)) return 0.0;
        return go_right ? right / total : left / total;
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (i == k) continue;
        const LeverageTree& tree = trees[i];
        const Matrix& u = factors.matrix(i);
        const std::uint64_t x = tuple[i];
        const SquareMatrix cond = sts_condition(grams, gram_pinv, k, i);

        std::size_t t = 0;
        while (t < tree.leaf_count() && !(tree.leaf_rank[t] >= 0 && tree.local[t].rows.contains(x))) ++t;
        if (t == tree.leaf_count()) throw BoundsError("sts_path_probability: row outside the factor");
        const std::size_t leaves = tree.leaf_count();
        for (int level = 0; level < tree.levels; ++level) {
            const std::size_t v = (leaves + t) >> (tree.levels - level);
            const bool right = ((leaves + t) >> (tree.levels - level - 1)) & 1U;
            prob *= step(quad(tree.shared[2 * v].cwiseProduct(cond), h),
                         quad(tree.shared[2 * v + 1].cwiseProduct(cond), h), right);
        }
        const auto& loc = tree.local[t];
        const std::size_t block = (x - loc.rows.begin) / loc.block_rows;
        const int depth = std::countr_zero(loc.leaves);
        for (int level = 0; level < depth; ++level) {
            const std::size_t v = (loc.leaves + block) >> (depth - level);
            const bool right = ((loc.leaves + block) >> (depth - level - 1)) & 1U;
            prob *= step(quad(loc.nodes[2 * v].cwiseProduct(cond), h), quad(loc.nodes[2 * v + 1].cwiseProduct(cond), h),
                         right);
        }
        const RowRange rows = block_range(loc, block);
        double total = 0.0;
        for (std::uint64_t q = rows.begin; q < rows.end; ++q) total += row_mass(u, q, h, cond);
        if (!(total > 0.0)) return 0.0;
        prob *= row_mass(u, x, h, cond) / total;
        h.array() *= u.row(static_cast<Eigen::Index>(x)).array();
    }
    return prob;
}

}  // namespace sketchcp
