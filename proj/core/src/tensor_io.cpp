// SPDX-License-Identifier: Apache-2.0
#include "sketchcp/tensor_io.hpp"

#include "sketchcp/random.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>

namespace sketchcp {

void SparseTensor::validate() const {
    const std::size_t n = dims.size();
    if (n < 2) throw ShapeError("tensor needs at least two modes");
    for (auto d : dims)
        if (d == 0) throw ShapeError("tensor dimensions must be positive");
    if (indices.size() != values.size() * n) throw ShapeError("index array does not match value count");
    for (std::size_t e = 0; e < values.size(); ++e)
        for (std::size_t k = 0; k < n; ++k)
            if (indices[e * n + k] >= dims[k])
                throw BoundsError("entry " + std::to_string(e) + " index out of bounds in mode " + std::to_string(k));
}

double SparseTensor::norm_squared() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return s;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

}  // namespace

SparseTensor parse_frostt(std::istream& in, const LoadOptions& opts) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    SparseTensor t;
    std::size_t modes = 0;
    std::vector<std::uint64_t> seen_max;
    std::vector<std::uint64_t> row;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        ++line_no;
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const char* p = text.data() + pos;
        const char* end = text.data() + eol;
        pos = eol + 1;

        while (p < end && is_space(*p)) ++p;
        if (p == end || *p == '#') continue;

        // Tokenize: all but the last token are indices.
        std::vector<std::pair<const char*, const char*>> tokens;
        while (p < end) {
            const char* s = p;
            while (p < end && !is_space(*p)) ++p;
            tokens.emplace_back(s, p);
            while (p < end && is_space(*p)) ++p;
        }
        if (modes == 0) {
            if (tokens.size() < 4) throw ParseError(line_no, "expected at least 3 indices and a value");
            modes = tokens.size() - 1;
            seen_max.assign(modes, 0);
            row.resize(modes);
            if (!opts.dims.empty() && opts.dims.size() != modes)
                throw ParseError(line_no, "mode count differs from declared dimensions");
        } else if (tokens.size() != modes + 1) {
            throw ParseError(line_no, "expected " + std::to_string(modes + 1) + " columns, found " +
                                          std::to_string(tokens.size()));
        }
        for (std::size_t k = 0; k < modes; ++k) {
            std::uint64_t v = 0;
            auto [ptr, ec] = std::from_chars(tokens[k].first, tokens[k].second, v);
            if (ec != std::errc() || ptr != tokens[k].second) throw ParseError(line_no, "malformed index");
            if (v == 0) throw ParseError(line_no, "indices are 1-based; found 0");
            if (!opts.dims.empty() && v > opts.dims[k])
                throw BoundsError("line " + std::to_string(line_no) + ": index " + std::to_string(v) +
                                  " exceeds declared extent " + std::to_string(opts.dims[k]) + " of mode " +
                                  std::to_string(k));
            if (v - 1 > std::numeric_limits<index_t>::max()) throw ParseError(line_no, "index too large");
            row[k] = v - 1;
            seen_max[k] = std::max(seen_max[k], v);
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(tokens[modes].first, tokens[modes].second, value);
        if (ec != std::errc() || ptr != tokens[modes].second) throw ParseError(line_no, "malformed value");
        if (opts.log_transform) value = std::log1p(value);
        for (auto idx : row) t.indices.push_back(static_cast<index_t>(idx));
        t.values.push_back(value);
    }
    if (modes == 0) throw Error("tensor file contains no entries");
    t.dims = opts.dims.empty() ? seen_max : opts.dims;
    if (opts.dedup) sum_duplicates(t);
    return t;
}

SparseTensor load_frostt(const std::filesystem::path& path, const LoadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open tensor file " + path.string());
    return parse_frostt(in, opts);
}

void write_frostt(std::ostream& out, const SparseTensor& t) {
    out << std::setprecision(17);
    for (std::size_t e = 0; e < t.nnz(); ++e) {
        for (auto i : t.coords(e)) out << (i + 1) << ' ';
        out << t.values[e] << '\n';
    }
}

void sum_duplicates(SparseTensor& t) {
    const std::size_t n = t.mode_count();
    std::vector<std::size_t> order(t.nnz());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto tuple_less = [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(t.indices.begin() + a * n, t.indices.begin() + a * n + n,
                                            t.indices.begin() + b * n, t.indices.begin() + b * n + n);
    };
    std::stable_sort(order.begin(), order.end(), tuple_less);

    std::vector<index_t> idx;
    std::vector<double> vals;
    idx.reserve(t.indices.size());
    vals.reserve(t.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t e = order[i];
        const bool repeat = !vals.empty() && std::equal(t.indices.begin() + e * n, t.indices.begin() + e * n + n,
                                                        idx.end() - static_cast<std::ptrdiff_t>(n));
        if (repeat) {
            vals.back() += t.values[e];
        } else {
            idx.insert(idx.end(), t.indices.begin() + e * n, t.indices.begin() + e * n + n);
            vals.push_back(t.values[e]);
        }
    }
    t.indices = std::move(idx);
    t.values = std::move(vals);
}

ModePermutations ModePermutations::identity(std::span<const std::uint64_t> dims) {
    ModePermutations p;
    for (auto d : dims) {
        std::vector<index_t> f(d);
        std::iota(f.begin(), f.end(), index_t{0});
        p.forward.push_back(std::move(f));
    }
    return p;
}

ModePermutations ModePermutations::random(std::span<const std::uint64_t> dims, std::uint64_t seed) {
    ModePermutations p = identity(dims);
    p.seed = seed;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        Engine g = make_stream({seed, StreamPurpose::permutation, 0, k, kSharedRank});
        std::shuffle(p.forward[k].begin(), p.forward[k].end(), g);
    }
    return p;
}

ModePermutations ModePermutations::inverse() const {
    ModePermutations inv;
    inv.seed = seed;
    for (const auto& f : forward) {
        std::vector<index_t> b(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) b[f[i]] = static_cast<index_t>(i);
        inv.forward.push_back(std::move(b));
    }
    return inv;
}

SparseTensor apply_permutations(const SparseTensor& t, const ModePermutations& perms) {
    const std::size_t n = t.mode_count();
    if (perms.forward.size() != n) throw ShapeError("permutation count differs from mode count");
    for (std::size_t k = 0; k < n; ++k)
        if (perms.forward[k].size() != t.dims[k]) throw ShapeError("permutation length differs from mode extent");
    SparseTensor out = t;
    for (std::size_t e = 0; e < t.nnz(); ++e)
        for (std::size_t k = 0; k < n; ++k) out.indices[e * n + k] = perms.forward[k][t.indices[e * n + k]];
    return out;
}

std::pair<SparseTensor, ModePermutations> permute_modes(const SparseTensor& t, std::uint64_t seed) {
    ModePermutations perms = ModePermutations::random(t.dims, seed);
    return {apply_permutations(t, perms), std::move(perms)};
}

Matrix unpermute_rows(const Matrix& factor, std::span<const index_t> perm) {
    if (perm.size() != static_cast<std::size_t>(factor.rows())) throw ShapeError("permutation length mismatch");
    Matrix out(factor.rows(), factor.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = factor.row(perm[i]);
    return out;
}

LocalTensorSet partition_to_grid(const SparseTensor& t, const ProcessorGrid& grid, ScheduleKind schedule) {
    const std::size_t n = t.mode_count();
    if (grid.mode_count() != n) throw ShapeError("grid and tensor mode counts differ");
    const int procs = grid.rank_count();

    // Grid coordinate of every index along every mode.
    std::vector<std::vector<int>> block_of(n);
    std::vector<std::vector<int>> owner_of(n);
    for (std::size_t k = 0; k < n; ++k) {
        block_of[k].resize(t.dims[k]);
        for (int c = 0; c < grid.dims()[k]; ++c) {
            const RowRange b = grid.grid_block(k, c, t.dims[k]);
            for (auto i = b.begin; i < b.end; ++i) block_of[k][i] = c;
        }
        if (schedule == ScheduleKind::accumulator_stationary) {
            owner_of[k].resize(t.dims[k]);
            for (int r = 0; r < procs; ++r) {
                const RowRange b = grid.owned_rows(k, r, t.dims[k]);
                for (auto i = b.begin; i < b.end; ++i) owner_of[k][i] = r;
            }
        }
    }

    LocalTensorSet set;
    set.schedule = schedule;
    set.local.resize(static_cast<std::size_t>(procs));
    if (schedule == ScheduleKind::tensor_stationary) {
        std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(procs));
        std::vector<int> c(n);
        for (std::size_t e = 0; e < t.nnz(); ++e) {
            auto tuple = t.coords(e);
            for (std::size_t k = 0; k < n; ++k) c[k] = block_of[k][tuple[k]];
            members[static_cast<std::size_t>(grid.rank_of(c))].push_back(e);
        }
        for (int r = 0; r < procs; ++r)
            for (std::size_t j = 0; j < n; ++j)
                set.local[r].emplace_back(t, j, members[r], grid.grid_block(j, grid.coord(r, j), t.dims[j]));
    } else {
        for (int r = 0; r < procs; ++r) set.local[r].resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(procs));
            for (std::size_t e = 0; e < t.nnz(); ++e) members[owner_of[j][t.coords(e)[j]]].push_back(e);
            for (int r = 0; r < procs; ++r)
                set.local[r][j] = Matricization(t, j, members[r], grid.owned_rows(j, r, t.dims[j]));
        }
    }
    return set;
}

void write_matrix_text(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "# " << m.rows() << ' ' << m.cols() << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
        out << '\n';
    }
}

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
    static_assert(std::endian::native == std::endian::little, "binary factor files are little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    const std::int64_t header[2] = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    if (in.peek() == '#') {
        std::string hash;
        std::int64_t rows = 0, cols = 0;
        in >> hash >> rows >> cols;
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            if (!(in >> m.data()[i])) throw Error("truncated matrix file " + path.string());
        return m;
    }
    std::int64_t header[2] = {0, 0};
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || header[0] < 0 || header[1] < 0) throw Error("bad matrix header in " + path.string());
    Matrix m(header[0], header[1]);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw Error("truncated matrix file " + path.string());
    return m;
}

void write_vector_text(const std::filesystem::path& path, std::span<const double> v) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << std::setprecision(17);
    for (double x : v) out << x << '\n';
}

}  // namespace sketchcp
