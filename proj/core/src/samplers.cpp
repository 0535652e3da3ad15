// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/samplers.hpp"

#include "sketchcp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sketchcp {

std::vector<double> sample_weights(std::span<const double> prob, std::size_t J) {
    std::vector<double> w(prob.size());
    for (std::size_t s = 0; s < prob.size(); ++s) {
        if (!(prob[s] > 0.0)) throw Error("sample " + std::to_string(s) + " has probability zero");
        w[s] = 1.0 / std::sqrt(static_cast<double>(J) * prob[s]);
    }
    return w;
}

void fill_design_rows(SampleBatch& batch, std::span<const Matrix> factors) {
    if (factors.size() != batch.mode_count) throw ShapeError("fill_design_rows: factor count differs");
    const Eigen::Index r = factors.front().cols();
    batch.H.setOnes(static_cast<Eigen::Index>(batch.count), r);
    for (std::size_t s = 0; s < batch.count; ++s) {
        auto h = batch.H.row(static_cast<Eigen::Index>(s));
        for (std::size_t i = 0; i < batch.mode_count; ++i) {
            if (i == batch.skip) continue;
            h.array() *= factors[i].row(batch.X[s * batch.mode_count + i]).array();
        }
    }
}

std::vector<std::size_t> consistent_multinomial(std::span<const double> masses, std::size_t J, Engine& shared) {
    std::vector<double> cumulative(masses.size());
    double total = 0.0;
    for (std::size_t p = 0; p < masses.size(); ++p) {
        if (masses[p] < 0.0) throw Error("consistent_multinomial: negative mass");
        total += masses[p];
        cumulative[p] = total;
    }
    std::vector<std::size_t> counts(masses.size(), 0);
    if (J == 0) return counts;
    if (!(total > 0.0)) throw Error("consistent_multinomial: all masses are zero");
    for (std::size_t s = 0; s < J; ++s) {
        const double target = uniform01(shared) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
        std::size_t p = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), masses.size() - 1);
        while (masses[p] == 0.0 && p > 0) --p;
        ++counts[p];
    }
    return counts;
}

ArlsModeState arls_lev_build(Communicator& comm, const FactorSet& factors, std::size_t mode,
                             const SquareMatrix& gram) {
    const ProcessorGrid& grid = comm.grid();
    const int procs = grid.rank_count();
    ArlsModeState st;
    st.mode = mode;
    st.gram_pinv = pseudo_inverse(gram);
    st.rows.resize(static_cast<std::size_t>(procs));
    st.dist.resize(static_cast<std::size_t>(procs));
    st.mass.assign(static_cast<std::size_t>(procs), 0.0);

    const Matrix& u = factors.matrix(mode);
    parallel_for(static_cast<std::size_t>(procs), [&](std::size_t p) {
        const RowRange rows = factors.owned_rows(mode, static_cast<int>(p));
        st.rows[p] = rows;
        auto& d = st.dist[p];
        d.resize(rows.size());
        double c = 0.0;
        for (std::uint64_t q = 0; q < rows.size(); ++q) {
            const auto row = u.row(static_cast<Eigen::Index>(rows.begin + q));
            d[q] = std::max(0.0, row.dot(st.gram_pinv * row.transpose()));
            c += d[q];
        }
        if (c > 0.0)
            for (double& x : d) x /= c;
        st.mass[p] = c;
    });

    comm.set_phase(Phase::sampler_build);
    std::vector<std::vector<double>> payloads;
    for (int p = 0; p < procs; ++p) payloads.push_back({st.mass[static_cast<std::size_t>(p)]});
    const auto world = comm.world();
    auto all = comm.allgather<double>(world, payloads);
    st.total_mass = std::accumulate(all->begin(), all->end(), 0.0);
    return st;
}

SampleBatch arls_lev_sample(Communicator& comm, std::span<const ArlsModeState> states, const FactorSet& factors,
                            std::size_t k, std::size_t J, std::uint64_t seed, std::uint64_t round) {
    const std::size_t n = factors.mode_count();
    const int procs = comm.grid().rank_count();
    SampleBatch batch;
    batch.mode_count = n;
    batch.skip = k;
    batch.count = J;
    batch.X.assign(J * n, 0);
    batch.prob.assign(J, 1.0);
    if (J == 0) {
        batch.H.resize(0, factors.rank());
        return batch;
    }
    comm.set_phase(Phase::sampling);
    const auto world = comm.world();

    for (std::size_t i = 0; i < n; ++i) {
        if (i == k) continue;
        const ArlsModeState& st = states[i];
        if (st.mode != i) throw Error("arls_lev_sample: state missing for mode " + std::to_string(i));
        if (!(st.total_mass > 0.0)) throw Error("arls_lev_sample: every rank has zero leverage mass");

        Engine shared = make_stream({seed, StreamPurpose::multinomial, round, i, kSharedRank});
        const auto quota = consistent_multinomial(st.mass, J, shared);

        // Each rank draws its quota from its local distribution.
        std::vector<std::vector<double>> payloads(static_cast<std::size_t>(procs));
        parallel_for(static_cast<std::size_t>(procs), [&](std::size_t p) {
            const auto& d = st.dist[p];
            if (quota[p] == 0) return;
            Engine local = make_stream({seed, StreamPurpose::arls_local, round, i, static_cast<std::int64_t>(p)});
            std::vector<double> cumulative(d.size());
            std::partial_sum(d.begin(), d.end(), cumulative.begin());
            const double total = cumulative.back();
            auto& out = payloads[p];
            out.reserve(2 * quota[p]);
            for (std::size_t s = 0; s < quota[p]; ++s) {
                const double target = uniform01(local) * total;
                auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
                std::size_t q = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), d.size() - 1);
                while (d[q] == 0.0 && q > 0) --q;
                out.push_back(static_cast<double>(st.rows[p].begin + q));
                out.push_back(d[q] * st.mass[p] / st.total_mass);
            }
        });
        auto gathered = comm.allgather<double>(world, payloads);

        std::vector<std::size_t> perm(J);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Engine permute = make_stream({seed, StreamPurpose::arls_permute, round, i, kSharedRank});
        std::shuffle(perm.begin(), perm.end(), permute);
        for (std::size_t s = 0; s < J; ++s) {
            const std::size_t src = perm[s];
            batch.X[s * n + i] = static_cast<index_t>((*gathered)[2 * src]);
            batch.prob[s] *= (*gathered)[2 * src + 1];
        }
    }
    batch.weights = sample_weights(batch.prob, J);
    fill_design_rows(batch, factors.matrices());
    return batch;
}

}  // namespace sketchcp
