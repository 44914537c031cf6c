#include "sparsekan/checkpoint.hpp"
#include "sparsekan/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sparsekan;

namespace {

std::string default_out_dir() {
    const char* env = std::getenv("SPARSE_KAN_OUT");
    return env && *env ? env : "runs";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::string canon_condition_name(const std::string& raw) {
    // Reuses the config-side names; ConditionSpec construction lives in
    // expand_cells, so route through a one-condition config.
    RunConfig probe;
    probe.conditions = {raw};
    probe.betas = {0.0};
    probe.seeds = {0};
    return expand_cells(probe).front().condition;
}

// ============================================================================
// gen
// ============================================================================

struct GenArgs {
    ProblemSpec spec;
    std::string out;
};

int cmd_gen(const GenArgs& a) {
    Problem p = make_problem(a.spec);
    p.validate();
    const std::string id = normalize_problem_id(a.spec.id);

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    const std::string train_file = (dir / (id + "_train.csv")).string();
    const std::string test_file = (dir / (id + "_test.csv")).string();
    write_dataset_csv(train_file, p.train_x, p.train_y);
    write_dataset_csv(test_file, p.test_x, p.test_y);

    nlohmann::json meta{{"command", "gen"},
                        {"problem", id},
                        {"seed", a.spec.seed},
                        {"n_train", p.train_x.rows()},
                        {"n_test", p.test_x.rows()},
                        {"rejected_rows", p.rejected_rows},
                        {"standardized", p.normalization.active()},
                        {"train_file", id + "_train.csv"},
                        {"test_file", id + "_test.csv"}};
    if (!a.spec.csv.empty()) meta["source_csv"] = a.spec.csv;
    write_text((dir / (id + "_meta.json")).string(), meta.dump(2) + "\n");

    std::cout << "wrote " << train_file << " (" << p.train_x.rows() << " rows), " << test_file
              << " (" << p.test_x.rows() << " rows)\n";
    return 0;
}

// ============================================================================
// train
// ============================================================================

struct TrainArgs {
    std::string config;
    std::string condition;
    double beta = 0.0;
    bool beta_set = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    if (!a.out.empty()) cfg.out_dir = a.out;
    if (cfg.out_dir.empty()) cfg.out_dir = default_out_dir();

    // Narrow the grid to exactly one cell.
    std::string cond;
    if (!a.condition.empty()) {
        cond = canon_condition_name(a.condition);
    } else if (cfg.conditions.size() == 1) {
        cond = canon_condition_name(cfg.conditions.front());
    } else {
        throw std::invalid_argument("config lists several conditions; pick one with --condition");
    }
    cfg.conditions = {cond};

    const bool gated = cond == "gates_only" || cond == "full";
    if (gated) {
        if (a.beta_set)
            cfg.betas = {a.beta};
        else if (cfg.betas.empty())
            throw std::invalid_argument("a gated condition needs --beta or cond.betas");
        else if (cfg.betas.size() != 1)
            throw std::invalid_argument("config lists several betas; pick one with --beta");
    } else {
        cfg.betas.clear();
    }

    if (a.seed_set)
        cfg.seeds = {a.seed};
    else if (cfg.seeds.size() != 1)
        throw std::invalid_argument("config lists several seeds; pick one with --seed");

    cfg.validate();
    Problem problem = make_problem(cfg.problem);
    problem.validate();
    if (problem.input_dim() != cfg.widths.front() || problem.output_dim() != cfg.widths.back())
        throw std::invalid_argument(
            "arch.widths is " + std::to_string(cfg.widths.front()) + " -> " +
            std::to_string(cfg.widths.back()) + " but " + problem.name + " is " +
            std::to_string(problem.input_dim()) + " -> " + std::to_string(problem.output_dim()));

    const CellSpec cell = expand_cells(cfg).front();
    CellResult res = run_cell(cfg, problem, cell, config_hash(cfg));

    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    save_network(res.net, (dir / "checkpoint.json").string());
    write_history((dir / "history.csv").string(), res.history);
    write_text((dir / "final.json").string(), report_row_json(res.row) + "\n");

    std::cout << "trained " << cell.file_stem() << " on " << problem.name << ": epochs="
              << res.row.epochs_run << (res.history.early_stopped ? " (early stop)" : "")
              << " r2=" << res.row.r2 << " rmse=" << res.row.rmse_1step << " active="
              << res.row.trunk_active << "+" << res.row.fc_active << " sparsity="
              << res.row.sparsity_pct << "%\n";
    std::cout << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

// ============================================================================
// eval
// ============================================================================

struct EvalArgs {
    std::string net;
    std::string config;
    int multistep = -1;
    bool multistep_set = false;
    std::string plot;
    std::string out;
};

int dump_plots(const GatedKan& net, const std::string& dir) {
    fs::create_directories(dir);
    const std::vector<int> mask = active_edge_mask(net);
    int written = 0;
    for (int l = 0; l < net.shape.depth(); ++l) {
        const int in_w = net.shape.layer_input_width(l);
        const int out_w = net.shape.widths[static_cast<std::size_t>(l + 1)];
        const int off = net.edge_offset(l);
        for (int i = 0; i < in_w; ++i) {
            for (int j = 0; j < out_w; ++j) {
                if (!mask[static_cast<std::size_t>(off + i * out_w + j)]) continue;
                const SplineActivation& act =
                    net.edges[static_cast<std::size_t>(l)][static_cast<std::size_t>(i * out_w + j)];
                char name[64];
                std::snprintf(name, sizeof name, "edge_l%d_s%d_t%d.csv", l, i, j);
                std::ofstream out(fs::path(dir) / name);
                if (!out) throw std::runtime_error("cannot open plot file in " + dir);
                out << "x,phi\n";
                const double lo = act.grid.domain_lo, hi = act.grid.domain_hi;
                for (int k = 0; k <= 200; ++k) {
                    const double x = lo + (hi - lo) * k / 200.0;
                    char line[64];
                    std::snprintf(line, sizeof line, "%.17g,%.17g\n", x, activation_eval(act, x));
                    out << line;
                }
                ++written;
            }
        }
    }
    return written;
}

int cmd_eval(const EvalArgs& a) {
    GatedKan net = load_network(a.net);
    RunConfig cfg = load_run_config(a.config);
    Problem problem = make_problem(cfg.problem);
    problem.validate();

    int horizon = 0;
    if (a.multistep_set) {
        if (a.multistep < 0) throw std::invalid_argument("--multistep must be >= 0");
        if (problem.kind == ProblemKind::static_map && a.multistep > 0)
            throw std::invalid_argument("--multistep does not apply to the static problem " +
                                        problem.name);
        horizon = a.multistep;
    } else if (problem.kind == ProblemKind::dynamical) {
        horizon = cfg.multistep;
    }

    EvalSummary ev = evaluate_network(net, problem, horizon);

    std::cout << "problem:        " << problem.name << "\n";
    std::cout << "r2:             " << ev.r2 << "\n";
    std::cout << "rmse_1step:     " << ev.rmse_1step << "\n";
    if (ev.multistep_used > 0) {
        std::cout << "rmse_multistep: " << ev.rmse_multistep << " (horizon "
                  << ev.multistep_used << (ev.multistep_diverged ? ", diverged" : "") << ")\n";
    }
    std::cout << "active:         " << ev.active.trunk << " trunk + " << ev.active.fc << " fc\n";
    std::cout << "sparsity:       " << ev.active.sparsity_pct << "%\n";

    if (!a.out.empty()) {
        ReportRow row;
        row.problem = problem.name;
        row.condition = "eval";
        row.r2 = ev.r2;
        row.rmse_1step = ev.rmse_1step;
        row.rmse_multistep = ev.rmse_multistep;
        row.multistep_diverged = ev.multistep_diverged;
        row.trunk_active = ev.active.trunk;
        row.fc_active = ev.active.fc;
        row.sparsity_pct = ev.active.sparsity_pct;
        row.config_hash = config_hash(cfg);
        write_text(a.out, report_row_json(row) + "\n");
    }
    if (!a.plot.empty()) {
        int n = dump_plots(net, a.plot);
        std::cout << "wrote " << n << " activation plots to " << a.plot << "\n";
    }
    return 0;
}

// ============================================================================
// experiment / report
// ============================================================================

struct ExperimentArgs {
    std::string config;
    std::string out;
    bool force = false;
    int jobs = 1;
};

int cmd_experiment(const ExperimentArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    if (!a.out.empty()) cfg.out_dir = a.out;
    if (cfg.out_dir.empty()) cfg.out_dir = default_out_dir();
    return run_experiment(cfg, a.force, a.jobs, std::cout);
}

struct ReportArgs {
    std::string cells;
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(a.cells)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() < 5 || name.substr(name.size() - 5) != ".json") continue;
        if (name.size() >= 9 && name.substr(name.size() - 9) == ".net.json") continue;
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::invalid_argument("no cell records found in " + a.cells);

    ExperimentReport report;
    for (const fs::path& f : files) {
        std::ifstream in(f);
        std::ostringstream ss;
        ss << in.rdbuf();
        report.rows.push_back(report_row_from_json(ss.str()));
    }

    const fs::path out_dir = a.out.empty() ? fs::path(a.cells).parent_path() : fs::path(a.out);
    fs::create_directories(out_dir);
    write_report_text((out_dir / "report.txt").string(), report);
    write_report_records((out_dir / "report.jsonl").string(), report);
    std::cout << "assembled " << report.rows.size() << " rows into " << out_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse Kolmogorov-Arnold networks: data, training, and the 2x2 condition grid"};
    app.require_subcommand(1);

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen", "Generate or import a dataset as CSV files");
    gen->add_option("--problem", gen_args.spec.id,
                    "anecdote, nguyen-f1..f10, ikeda, ecosystem, concrete, superconductor, csv")
        ->required();
    gen->add_option("--n-train", gen_args.spec.n_train, "training rows (generator default)");
    gen->add_option("--n-test", gen_args.spec.n_test, "test rows (generator default)");
    gen->add_option("--seed", gen_args.spec.seed, "data seed (default 1)");
    gen->add_option("--csv", gen_args.spec.csv, "source table for concrete/superconductor");
    gen->add_option("--train-csv", gen_args.spec.train_csv, "existing dataset file (id=csv)");
    gen->add_option("--test-csv", gen_args.spec.test_csv, "existing dataset file (id=csv)");
    gen->add_option("--out", gen_args.out, "output directory (default $SPARSE_KAN_OUT or runs)");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train one condition and save a checkpoint");
    train->add_option("--config", train_args.config, "experiment config file")->required();
    train->add_option("--condition", train_args.condition, "baseline, fc, gates, or full");
    CLI::Option* train_beta = train->add_option("--beta", train_args.beta, "complexity weight");
    CLI::Option* train_seed = train->add_option("--seed", train_args.seed, "training seed");
    train->add_option("--out", train_args.out, "output directory");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint on a problem's test set");
    eval->add_option("--net", eval_args.net, "checkpoint file")->required();
    eval->add_option("--config", eval_args.config, "config naming the problem")->required();
    CLI::Option* eval_ms =
        eval->add_option("--multistep", eval_args.multistep, "rollout horizon (0 disables)");
    eval->add_option("--plot", eval_args.plot, "dump (x, phi(x)) per active edge to this dir");
    eval->add_option("--out", eval_args.out, "write the metrics record to this file");

    ExperimentArgs exp_args;
    CLI::App* exp = app.add_subcommand("experiment", "Run the full condition grid from a config");
    exp->add_option("--config", exp_args.config, "experiment config file")->required();
    exp->add_option("--out", exp_args.out, "output directory override");
    exp->add_flag("--force", exp_args.force, "recompute cells even when records exist");
    exp->add_option("--jobs", exp_args.jobs, "parallel cells (default 1)");

    ReportArgs rep_args;
    CLI::App* rep = app.add_subcommand("report", "Rebuild report files from cell records");
    rep->add_option("--cells", rep_args.cells, "directory of per-cell json records")->required();
    rep->add_option("--out", rep_args.out, "output directory (default: parent of cells)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (gen_args.out.empty()) gen_args.out = default_out_dir();
    train_args.beta_set = train_beta->count() > 0;
    train_args.seed_set = train_seed->count() > 0;
    eval_args.multistep_set = eval_ms->count() > 0;

    auto guard = [&](auto&& body) -> int {
        try {
            return body();
        } catch (const std::invalid_argument& e) {
            std::cerr << "error: " << e.what() << "\n";
            std::cerr << "run '" << argv[0] << " --help' for usage\n";
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    };

    if (gen->parsed()) return guard([&] { return cmd_gen(gen_args); });
    if (train->parsed()) return guard([&] { return cmd_train(train_args); });
    if (eval->parsed()) return guard([&] { return cmd_eval(eval_args); });
    if (exp->parsed()) return guard([&] { return cmd_experiment(exp_args); });
    if (rep->parsed()) return guard([&] { return cmd_report(rep_args); });
    return 2;
}
