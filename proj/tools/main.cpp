// SPDX-License-Identifier: Apache-2.0
#include "verify.hpp"

#include "sketchcp/als.hpp"
#include "sketchcp/parallel.hpp"
#include "sketchcp/schedules.hpp"
#include "sketchcp/tensor_io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using namespace sketchcp;

namespace {

struct DecomposeArgs {
    std::string tensor;
    std::size_t rank = 10;
    std::size_t rounds = 40;
    std::string sampler = "exact";
    std::size_t samples = 65536;
    std::string schedule = "tensor-stationary";
    std::string grid;
    int procs = 1;
    std::uint64_t seed = 1;
    int trials = 1;
    bool log_transform = false;
    std::string out;
    std::size_t fit_every = 5;
    bool no_permute = false;
    bool binary = false;
    std::size_t leaf_block = 0;
};

struct ReportArgs {
    std::string ledger;
    std::vector<std::uint64_t> rounds;
    std::string dims;
    int procs = 1;
    std::size_t rank = 10;
    std::size_t samples = 65536;
};

SamplerKind parse_sampler(const std::string& s) {
    if (s == "exact") return SamplerKind::none;
    if (s == "arls-lev") return SamplerKind::arls_lev;
    return SamplerKind::sts;
}

ScheduleKind parse_schedule(const std::string& s) {
    return s == "accumulator-stationary" ? ScheduleKind::accumulator_stationary : ScheduleKind::tensor_stationary;
}

std::vector<std::uint64_t> parse_dims(const std::string& text) {
    std::vector<std::uint64_t> dims;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, 'x')) dims.push_back(std::stoull(part));
    return dims;
}

void write_trial(const fs::path& dir, const AlsConfig& cfg, const DecompResult& r, bool binary) {
    fs::create_directories(dir);
    for (std::size_t k = 0; k < r.factors.size(); ++k) {
        if (binary) write_matrix_binary(dir / ("factor_" + std::to_string(k) + ".bin"), r.factors[k]);
        else write_matrix_text(dir / ("factor_" + std::to_string(k) + ".txt"), r.factors[k]);
    }
    write_vector_text(dir / "sigma.txt", r.sigma);
    std::ofstream fits(dir / "fit_history.tsv");
    fits << "round\tfit\trunning_max\n" << std::setprecision(10);
    for (const auto& f : r.fits) fits << f.round << '\t' << f.fit << '\t' << f.running_max << '\n';
    std::ofstream(dir / "ledger.tsv") << ledger_to_tsv(r.ledger);
    std::ofstream(dir / "summary.json") << summary_json(cfg, r) << '\n';
}

int cmd_decompose(const DecomposeArgs& a) {
    if (a.trials < 1) throw Error("--trials must be at least 1");
    LoadOptions opts;
    opts.log_transform = a.log_transform;
    const SparseTensor t = load_frostt(a.tensor, opts);
    std::cout << "tensor " << a.tensor << " dims ";
    for (std::size_t k = 0; k < t.dims.size(); ++k) std::cout << (k ? "x" : "") << t.dims[k];
    std::cout << " nnz " << t.nnz() << '\n';

    AlsConfig cfg;
    cfg.rank = a.rank;
    cfg.rounds = a.rounds;
    cfg.sampler = parse_sampler(a.sampler);
    cfg.samples = cfg.sampler == SamplerKind::none ? 0 : a.samples;
    cfg.schedule = parse_schedule(a.schedule);
    if (!a.grid.empty()) {
        for (const auto d : parse_dims(a.grid)) cfg.grid.push_back(static_cast<int>(d));
    }
    cfg.procs = a.procs;
    cfg.fit_every = a.fit_every;
    cfg.permute = !a.no_permute;
    cfg.leaf_block_size = a.leaf_block;
    cfg.validate();

    std::vector<double> finals;
    nlohmann::json trials = nlohmann::json::array();
    for (int trial = 0; trial < a.trials; ++trial) {
        cfg.seed = a.trials == 1 ? a.seed : stream_id({a.seed, StreamPurpose::trial, 0, static_cast<std::uint64_t>(trial)});
        const DecompResult r = run_als(t, cfg);
        finals.push_back(r.final_fit);
        std::cout << "trial " << trial << " seed " << cfg.seed << " grid " << r.grid.to_string()
                  << (r.grid_feasible ? "" : " (infeasible)") << " final_fit " << std::setprecision(6) << r.final_fit
                  << " words " << r.ledger.total_words() << " seconds " << std::setprecision(4) << r.total_seconds
                  << '\n';
        if (!a.out.empty()) write_trial(fs::path(a.out) / ("trial_" + std::to_string(trial)), cfg, r, a.binary);
        trials.push_back({{"trial", trial}, {"seed", cfg.seed}, {"final_fit", r.final_fit}});
    }
    const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / static_cast<double>(finals.size());
    const auto [lo, hi] = std::minmax_element(finals.begin(), finals.end());
    std::cout << std::setprecision(6) << "fit mean " << mean << " min " << *lo << " max " << *hi << '\n';
    if (!a.out.empty()) {
        nlohmann::json doc{{"base_seed", a.seed}, {"trials", trials}, {"mean_fit", mean}, {"min_fit", *lo},
                           {"max_fit", *hi}};
        std::ofstream(fs::path(a.out) / "trials.json") << doc.dump(2) << '\n';
    }
    return 0;
}

int cmd_comm_report(const ReportArgs& a) {
    if (!a.ledger.empty()) {
        std::ifstream in(a.ledger);
        if (!in) throw Error("cannot read " + a.ledger);
        const CommLedger ledger = ledger_from_tsv(in);
        int ranks = 0;
        for (const auto& rec : ledger.records()) ranks = std::max(ranks, rec.rank + 1);
        auto rounds = a.rounds.empty() ? ledger.rounds() : a.rounds;
        nlohmann::json doc = nlohmann::json::array();
        for (auto round : rounds) doc.push_back(nlohmann::json::parse(to_json(ledger_report(ledger, round, ranks))));
        std::cout << doc.dump(2) << '\n';
        return 0;
    }
    if (a.dims.empty()) throw Error("comm-report needs --ledger or --dims");
    const auto dims = parse_dims(a.dims);
    const GridChoice choice = optimal_grid(dims, a.procs);
    const auto n = static_cast<std::uint64_t>(dims.size());
    nlohmann::json doc;
    doc["grid"] = choice.grid.to_string();
    doc["grid_feasible"] = choice.feasible;
    doc["exact_ts_words_per_rank_per_round"] = exact_ts_round_words_per_rank(dims, choice.grid, a.rank);
    doc["sampled_as_gather_words_per_round_total"] = sampled_as_round_gather_words(a.samples, a.rank, n, static_cast<std::uint64_t>(a.procs));
    doc["sampled_as_gather_words_per_round_per_rank"] = static_cast<double>(a.samples * a.rank * n * (n - 1)) *
                                                        (1.0 - 1.0 / static_cast<double>(a.procs));
    std::cout << doc.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse tensor CP decomposition with leverage-score sketched ALS on a simulated processor grid"};
    app.require_subcommand(1);
    int workers = 0;
    app.add_option("--workers", workers, "Worker threads for compute kernels (default: $SKETCHCP_WORKERS or 1)")
        ->check(CLI::PositiveNumber);

    DecomposeArgs d;
    auto* dec = app.add_subcommand("decompose", "Run CP-ALS trials and write factors, fits and ledgers");
    dec->add_option("--tensor", d.tensor, "FROSTT .tns file")->required()->check(CLI::ExistingFile);
    dec->add_option("--rank", d.rank, "CP rank R")->check(CLI::PositiveNumber);
    dec->add_option("--rounds", d.rounds, "ALS rounds")->check(CLI::PositiveNumber);
    dec->add_option("--sampler", d.sampler)->check(CLI::IsMember({"exact", "arls-lev", "sts"}));
    dec->add_option("--samples", d.samples, "Samples J per solve")->check(CLI::PositiveNumber);
    dec->add_option("--schedule", d.schedule)->check(CLI::IsMember({"tensor-stationary", "accumulator-stationary"}));
    auto* grid_opt = dec->add_option("--grid", d.grid, "Processor grid, e.g. 2x2x1");
    auto* procs_opt = dec->add_option("--procs", d.procs, "Simulated ranks; grid chosen automatically")
                          ->check(CLI::PositiveNumber);
    grid_opt->excludes(procs_opt);
    dec->add_option("--seed", d.seed);
    dec->add_option("--trials", d.trials)->check(CLI::PositiveNumber);
    dec->add_flag("--log-transform", d.log_transform, "Replace values v by ln(1+v)");
    dec->add_option("--out", d.out, "Output directory");
    dec->add_option("--fit-every", d.fit_every, "Fit evaluation cadence in rounds (0: final only)");
    dec->add_flag("--no-permute", d.no_permute, "Skip the random index permutation");
    dec->add_flag("--binary", d.binary, "Write factors as binary matrices");
    dec->add_option("--leaf-block", d.leaf_block, "Rows per leaf block of the sampling trees (0: automatic)");
    dec->add_option("--workers", workers)->check(CLI::PositiveNumber);

    std::vector<std::string> suites;
    std::uint64_t verify_seed = 1;
    auto* ver = app.add_subcommand("verify", "Run oracle verification suites");
    ver->add_option("--suite", suites, "samplers|mttkrp|fit|schedules|comm (repeatable; default all)")
        ->check(CLI::IsMember(sketchcp::cli::suite_names()));
    ver->add_option("--seed", verify_seed);
    ver->add_option("--workers", workers)->check(CLI::PositiveNumber);

    ReportArgs rep;
    auto* cr = app.add_subcommand("comm-report", "Summarize a ledger file or evaluate the cost model");
    cr->add_option("--ledger", rep.ledger, "ledger.tsv written by decompose")->check(CLI::ExistingFile);
    cr->add_option("--round", rep.rounds, "Rounds to report (repeatable; default all)");
    cr->add_option("--dims", rep.dims, "Tensor dims, e.g. 183x24x1140x1717");
    cr->add_option("--procs", rep.procs)->check(CLI::PositiveNumber);
    cr->add_option("--rank", rep.rank)->check(CLI::PositiveNumber);
    cr->add_option("--samples", rep.samples)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (workers > 0) set_worker_count(workers);

    try {
        if (*dec) {
            if (d.sampler == "exact" && d.schedule == "accumulator-stationary") {
                std::cerr << "error: the accumulator-stationary schedule requires --sampler arls-lev or sts\n";
                return 2;
            }
            std::cout << "seed " << d.seed << " workers " << worker_count() << '\n';
            return cmd_decompose(d);
        }
        if (*ver) {
            if (suites.empty()) suites = sketchcp::cli::suite_names();
            int failures = 0;
            for (const auto& s : suites) failures += sketchcp::cli::run_suite(s, verify_seed, std::cout);
            std::cout << (failures == 0 ? "all properties passed" : std::to_string(failures) + " properties failed")
                      << '\n';
            return failures == 0 ? 0 : 1;
        }
        return cmd_comm_report(rep);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
