// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sketchcp/grid_comm.hpp"
#include "sketchcp/linalg.hpp"
#include "sketchcp/random.hpp"
#include "sketchcp/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sketchcp {

/// J sampled rows of the Khatri-Rao design matrix of mode `skip`.
struct SampleBatch {
    std::size_t mode_count = 0;
    std::size_t skip = 0;
    std::size_t count = 0;
    std::vector<index_t> X;       // count x mode_count, row-major; column `skip` is 0
    std::vector<double> prob;     // probability of drawing each sample
    std::vector<double> weights;  // 1 / sqrt(count * prob)
    Matrix H;                     // count x R, Hadamard product of the sampled factor rows

    std::span<const index_t> row(std::size_t s) const { return {X.data() + s * mode_count, mode_count}; }
    bool operator==(const SampleBatch& o) const {
        return mode_count == o.mode_count && skip == o.skip && count == o.count && X == o.X && prob == o.prob &&
               weights == o.weights && H == o.H;
    }
};

/// weight_s = 1 / sqrt(J p_s). Throws when some p_s <= 0.
std::vector<double> sample_weights(std::span<const double> prob, std::size_t J);

/// H[s, :] = product over modes != skip, ascending, of factors[i][X[s, i], :].
void fill_design_rows(SampleBatch& batch, std::span<const Matrix> factors);

/// Splits J draws over categories with probabilities masses / sum(masses).
/// Every caller seeding `shared` identically gets the identical split.
std::vector<std::size_t> consistent_multinomial(std::span<const double> masses, std::size_t J, Engine& shared);

// ---------------------------------------------------------------------------
// Approximate leverage sampling: products of per-factor leverage scores.

struct ArlsModeState {
    std::size_t mode = 0;
    SquareMatrix gram_pinv;
    std::vector<RowRange> rows;              // per rank
    std::vector<std::vector<double>> dist;   // per rank, normalized local scores
    std::vector<double> mass;                // per rank, 1-norm before normalization
    double total_mass = 0.0;
};

/// Local leverage scores diag(U G^+ U^T) per rank, their masses, and an
/// allgather of the masses (ledger phase: sampler_build).
ArlsModeState arls_lev_build(Communicator& comm, const FactorSet& factors, std::size_t mode,
                             const SquareMatrix& gram);

/// states[i] must be built for every i != k.
SampleBatch arls_lev_sample(Communicator& comm, std::span<const ArlsModeState> states, const FactorSet& factors,
                            std::size_t k, std::size_t J, std::uint64_t seed, std::uint64_t round);

// ---------------------------------------------------------------------------
// Exact leverage sampling by random walks on trees of partial Gram matrices.

/// Binary tree over the rows of one factor. The top `levels` levels span the
/// ranks (leaf position t is the t-th block in row order, padded with empty
/// leaves up to a power of two); below each rank leaf an implicit local tree
/// spans blocks of `leaf_block_size` rows.
struct LeverageTree {
    struct Local {
        RowRange rows;
        std::size_t block_rows = 1;
        std::size_t leaves = 1;            // power of two
        std::vector<SquareMatrix> nodes;   // heap: node 1 is the root
    };

    std::size_t mode = 0;
    Eigen::Index rank = 0;
    int levels = 0;
    std::vector<int> leaf_rank;          // 2^levels entries, -1 for padding
    std::vector<int> position;           // rank -> leaf position
    std::vector<SquareMatrix> shared;    // heap over the shared levels
    std::vector<Local> local;            // per leaf position

    const SquareMatrix& root() const { return shared[1]; }
    std::size_t leaf_count() const { return leaf_rank.size(); }
};

/// 0 selects an automatic size (8 rows, larger for very tall blocks).
LeverageTree sts_build(Communicator& comm, const FactorSet& factors, std::size_t mode,
                       std::size_t leaf_block_size = 0);

/// trees[i] must be current for every i != k; `gram_pinv` is the
/// pseudo-inverse of the Gram chain skipping k.
SampleBatch sts_sample(Communicator& comm, std::span<const LeverageTree> trees, const FactorSet& factors,
                       std::span<const SquareMatrix> grams, const SquareMatrix& gram_pinv, std::size_t k,
                       std::size_t J, std::uint64_t seed, std::uint64_t round);

/// Conditioning matrix for mode i when sampling for mode k:
/// G^+ * (elementwise) product of grams[l] over l > i, l != k.
SquareMatrix sts_condition(std::span<const SquareMatrix> grams, const SquareMatrix& gram_pinv, std::size_t k,
                           std::size_t i);

struct LeafPick {
    std::uint64_t row = 0;
    double prob = 0.0;  // product of branch probabilities inside the local tree
};

/// Continues the walk inside one rank's local tree. `weighted` holds the
/// node Grams multiplied elementwise by `cond`. r must lie in [0, 1).
LeafPick local_sts_leaf_search(const LeverageTree::Local& local, const std::vector<SquareMatrix>& weighted,
                               const Matrix& factor, const RowVector& h, const SquareMatrix& cond, double r);

/// Probability that sts_sample draws the given tuple (column k ignored),
/// following the same branch arithmetic as the walk.
double sts_path_probability(std::span<const LeverageTree> trees, const FactorSet& factors,
                            std::span<const SquareMatrix> grams, const SquareMatrix& gram_pinv, std::size_t k,
                            std::span<const index_t> tuple);

}  // namespace sketchcp
