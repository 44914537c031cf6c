#include "sparsekan/experiment.hpp"

#include "sparsekan/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;

namespace sparsekan {

// ============================================================================
// Small string helpers
// ============================================================================

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& key, const std::string& tok) {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (errno != 0 || end != tok.c_str() + tok.size() || tok.empty())
        throw std::invalid_argument("config: bad number for " + key + ": '" + tok + "'");
    return v;
}

long long parse_int(const std::string& key, const std::string& tok) {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(tok.c_str(), &end, 10);
    if (errno != 0 || end != tok.c_str() + tok.size() || tok.empty())
        throw std::invalid_argument("config: bad integer for " + key + ": '" + tok + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& tok) {
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (errno != 0 || end != tok.c_str() + tok.size() || tok.empty() || tok[0] == '-')
        throw std::invalid_argument("config: bad seed for " + key + ": '" + tok + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& tok) {
    std::string t = lower(tok);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw std::invalid_argument("config: bad flag for " + key + ": '" + tok + "'");
}

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fmt_g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Display name of a condition token; throws on anything unknown.
std::string canon_condition(const std::string& raw) {
    std::string t = lower(trim(raw));
    if (t == "baseline") return "baseline";
    if (t == "fc" || t == "fc_only") return "fc_only";
    if (t == "gates" || t == "gates_only") return "gates_only";
    if (t == "full") return "full";
    throw std::invalid_argument("config: unknown condition '" + raw + "'");
}

bool condition_gated(const std::string& display) {
    return display == "gates_only" || display == "full";
}

// Per-problem dataset size defaults; -1 marks sizes the problem does not take.
void default_sizes(const std::string& id, int& n_train, int& n_test) {
    if (id == "ikeda" || id == "ecosystem") {
        n_train = 5000;
        n_test = 1000;
    } else if (id == "superconductor") {
        n_train = 1000;
        n_test = 1000;
    } else if (id == "concrete" || id == "csv") {
        n_train = -1;
        n_test = -1;
    } else {
        n_train = 1024;
        n_test = 256;
    }
}

}  // namespace

// ============================================================================
// Problems
// ============================================================================

std::string normalize_problem_id(const std::string& raw) {
    std::string t = lower(trim(raw));
    if (t == "anecdote" || t == "ikeda" || t == "ecosystem" || t == "concrete" ||
        t == "superconductor" || t == "csv")
        return t;
    std::string f = t;
    if (f.rfind("nguyen-", 0) == 0) f = f.substr(7);
    if (f.size() >= 2 && f[0] == 'f') {
        bool digits = true;
        for (std::size_t i = 1; i < f.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(f[i]))) digits = false;
        if (digits) {
            int k = std::atoi(f.c_str() + 1);
            if (k >= 1 && k <= 10) return "F" + std::to_string(k);
        }
    }
    throw std::invalid_argument("unknown problem id '" + raw + "'");
}

Problem make_problem(const ProblemSpec& spec) {
    const std::string id = normalize_problem_id(spec.id);
    int def_train = 0, def_test = 0;
    default_sizes(id, def_train, def_test);
    const int n_train = spec.n_train < 0 ? def_train : spec.n_train;
    const int n_test = spec.n_test < 0 ? def_test : spec.n_test;

    if (id == "ikeda") {
        IkedaSpec s;
        s.n_train = n_train;
        s.n_test = n_test;
        return gen_ikeda(s);
    }
    if (id == "ecosystem") {
        EcosystemSpec s;
        s.n_train = n_train;
        s.n_test = n_test;
        return gen_ecosystem(s);
    }
    if (id == "concrete") return load_concrete(spec.csv, spec.seed);
    if (id == "superconductor")
        return load_superconductor(spec.csv, n_train, n_test, spec.seed);
    if (id == "csv") {
        Problem p;
        p.name = "csv";
        std::tie(p.train_x, p.train_y) = read_dataset_csv(spec.train_csv);
        std::tie(p.test_x, p.test_y) = read_dataset_csv(spec.test_csv);
        p.validate();
        return p;
    }
    return gen_symbolic(id, n_train, n_test, spec.seed);
}

// ============================================================================
// Config file
// ============================================================================

RunConfig parse_run_config(const std::string& text) {
    static const char* known[] = {
        "problem.id",       "problem.n_train",       "problem.n_test",
        "problem.seed",     "problem.csv",           "problem.train_csv",
        "problem.test_csv", "arch.widths",           "cond.list",
        "cond.betas",       "cond.gate_init",        "train.epochs",
        "train.batch_size", "train.lr",              "train.warmup_epochs",
        "train.fc_warmup_epochs", "train.grid_updates", "train.grid_within",
        "train.early_stop", "train.patience",        "train.decisiveness",
        "train.init_grid_fit",    "eval.multistep",  "out.dir",
        "seeds"};

    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        bool ok = false;
        for (const char* k : known)
            if (key == k) ok = true;
        if (!ok)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
        if (value.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty value for '" + key + "'");
        if (!kv.emplace(key, value).second)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": duplicate key '" + key + "'");
    }

    for (const char* req : {"problem.id", "arch.widths", "cond.list", "train.epochs", "seeds"})
        if (!kv.count(req))
            throw std::invalid_argument(std::string("config: missing required key '") + req +
                                        "'");

    RunConfig cfg;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };

    cfg.problem.id = *get("problem.id");
    if (const auto* v = get("problem.n_train"))
        cfg.problem.n_train = static_cast<int>(parse_int("problem.n_train", *v));
    if (const auto* v = get("problem.n_test"))
        cfg.problem.n_test = static_cast<int>(parse_int("problem.n_test", *v));
    if (const auto* v = get("problem.seed")) cfg.problem.seed = parse_u64("problem.seed", *v);
    if (const auto* v = get("problem.csv")) cfg.problem.csv = *v;
    if (const auto* v = get("problem.train_csv")) cfg.problem.train_csv = *v;
    if (const auto* v = get("problem.test_csv")) cfg.problem.test_csv = *v;

    for (const std::string& tok : split_ws(*get("arch.widths")))
        cfg.widths.push_back(static_cast<int>(parse_int("arch.widths", tok)));
    cfg.conditions = split_ws(*get("cond.list"));
    if (const auto* v = get("cond.betas"))
        for (const std::string& tok : split_ws(*v))
            cfg.betas.push_back(parse_double("cond.betas", tok));
    if (const auto* v = get("cond.gate_init")) cfg.gate_init = parse_double("cond.gate_init", *v);

    cfg.train.epochs = static_cast<int>(parse_int("train.epochs", *get("train.epochs")));
    if (const auto* v = get("train.batch_size"))
        cfg.train.batch_size = static_cast<int>(parse_int("train.batch_size", *v));
    if (const auto* v = get("train.lr")) cfg.train.lr = parse_double("train.lr", *v);
    if (const auto* v = get("train.warmup_epochs"))
        cfg.train.warmup_epochs = static_cast<int>(parse_int("train.warmup_epochs", *v));
    if (const auto* v = get("train.fc_warmup_epochs"))
        cfg.train.fc_warmup_epochs = static_cast<int>(parse_int("train.fc_warmup_epochs", *v));
    if (const auto* v = get("train.grid_updates"))
        cfg.train.grid_updates.count = static_cast<int>(parse_int("train.grid_updates", *v));
    if (const auto* v = get("train.grid_within"))
        cfg.train.grid_updates.within_epochs =
            static_cast<int>(parse_int("train.grid_within", *v));
    if (const auto* v = get("train.early_stop"))
        cfg.train.early_stop.enabled = parse_bool("train.early_stop", *v);
    if (const auto* v = get("train.patience"))
        cfg.train.early_stop.patience = static_cast<int>(parse_int("train.patience", *v));
    if (const auto* v = get("train.decisiveness"))
        cfg.train.early_stop.decisiveness_threshold = parse_double("train.decisiveness", *v);
    if (const auto* v = get("train.init_grid_fit"))
        cfg.init_grid_fit = parse_bool("train.init_grid_fit", *v);

    if (const auto* v = get("eval.multistep"))
        cfg.multistep = static_cast<int>(parse_int("eval.multistep", *v));
    if (const auto* v = get("out.dir")) cfg.out_dir = *v;
    for (const std::string& tok : split_ws(*get("seeds")))
        cfg.seeds.push_back(parse_u64("seeds", tok));
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void RunConfig::validate() const {
    const std::string id = normalize_problem_id(problem.id);

    if (widths.size() < 2) throw std::invalid_argument("config: arch.widths needs >= 2 layers");
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("config: arch.widths entries must be positive");

    if (conditions.empty()) throw std::invalid_argument("config: cond.list is empty");
    std::vector<std::string> seen;
    bool any_gated = false;
    for (const std::string& c : conditions) {
        std::string d = canon_condition(c);
        if (std::find(seen.begin(), seen.end(), d) != seen.end())
            throw std::invalid_argument("config: duplicate condition '" + d + "'");
        seen.push_back(d);
        any_gated = any_gated || condition_gated(d);
    }
    if (any_gated && betas.empty())
        throw std::invalid_argument("config: cond.betas is required for gated conditions");
    for (double b : betas)
        if (!(std::isfinite(b) && b >= 0.0))
            throw std::invalid_argument("config: cond.betas entries must be finite and >= 0");
    for (std::size_t i = 0; i < betas.size(); ++i)
        for (std::size_t j = i + 1; j < betas.size(); ++j)
            if (betas[i] == betas[j])
                throw std::invalid_argument("config: duplicate beta " + fmt_g(betas[i]));
    if (!std::isfinite(gate_init))
        throw std::invalid_argument("config: cond.gate_init must be finite");

    train.validate();
    if (multistep < 0) throw std::invalid_argument("config: eval.multistep must be >= 0");

    if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j])
                throw std::invalid_argument("config: duplicate seed " +
                                            std::to_string(seeds[i]));
    if (out_dir.empty()) throw std::invalid_argument("config: out.dir is not set");

    // Path and size fields only make sense for the problems that take them.
    const bool file_backed = id == "concrete" || id == "superconductor";
    if (file_backed) {
        if (problem.csv.empty())
            throw std::invalid_argument("config: problem.csv is required for " + id);
        if (!fs::exists(problem.csv))
            throw std::invalid_argument("config: problem.csv does not exist: " + problem.csv);
    } else if (!problem.csv.empty()) {
        throw std::invalid_argument("config: problem.csv only applies to concrete/superconductor");
    }
    if (id == "csv") {
        if (problem.train_csv.empty() || problem.test_csv.empty())
            throw std::invalid_argument("config: csv problems need train_csv and test_csv");
        for (const std::string& p : {problem.train_csv, problem.test_csv})
            if (!fs::exists(p))
                throw std::invalid_argument("config: dataset file does not exist: " + p);
    } else if (!problem.train_csv.empty() || !problem.test_csv.empty()) {
        throw std::invalid_argument("config: train_csv/test_csv only apply to problem.id=csv");
    }
    if (id == "concrete" && (problem.n_train >= 0 || problem.n_test >= 0))
        throw std::invalid_argument("config: concrete uses a fixed 80/20 split; drop n_train/n_test");
    if (id == "csv" && (problem.n_train >= 0 || problem.n_test >= 0))
        throw std::invalid_argument("config: csv datasets carry their own sizes; drop n_train/n_test");
}

std::string canonical_config(const RunConfig& cfg) {
    const std::string id = normalize_problem_id(cfg.problem.id);
    int def_train = 0, def_test = 0;
    default_sizes(id, def_train, def_test);

    std::ostringstream out;
    out << "problem.id=" << id << "\n";
    out << "problem.n_train=" << (cfg.problem.n_train < 0 ? def_train : cfg.problem.n_train)
        << "\n";
    out << "problem.n_test=" << (cfg.problem.n_test < 0 ? def_test : cfg.problem.n_test) << "\n";
    out << "problem.seed=" << cfg.problem.seed << "\n";
    out << "problem.csv=" << cfg.problem.csv << "\n";
    out << "problem.train_csv=" << cfg.problem.train_csv << "\n";
    out << "problem.test_csv=" << cfg.problem.test_csv << "\n";
    out << "arch.widths=";
    for (std::size_t i = 0; i < cfg.widths.size(); ++i)
        out << (i ? " " : "") << cfg.widths[i];
    out << "\n";
    out << "cond.list=";
    for (std::size_t i = 0; i < cfg.conditions.size(); ++i)
        out << (i ? " " : "") << canon_condition(cfg.conditions[i]);
    out << "\n";
    out << "cond.betas=";
    for (std::size_t i = 0; i < cfg.betas.size(); ++i)
        out << (i ? " " : "") << fmt_g17(cfg.betas[i]);
    out << "\n";
    out << "cond.gate_init=" << fmt_g17(cfg.gate_init) << "\n";
    out << "train.epochs=" << cfg.train.epochs << "\n";
    out << "train.batch_size=" << cfg.train.batch_size << "\n";
    out << "train.lr=" << fmt_g17(cfg.train.lr) << "\n";
    out << "train.warmup_epochs=" << cfg.train.warmup_epochs << "\n";
    out << "train.fc_warmup_epochs=" << cfg.train.fc_warmup_epochs << "\n";
    out << "train.grid_updates=" << cfg.train.grid_updates.count << "\n";
    out << "train.grid_within=" << cfg.train.grid_updates.within_epochs << "\n";
    out << "train.early_stop=" << (cfg.train.early_stop.enabled ? 1 : 0) << "\n";
    out << "train.patience=" << cfg.train.effective_patience() << "\n";
    out << "train.decisiveness=" << fmt_g17(cfg.train.early_stop.decisiveness_threshold) << "\n";
    out << "train.init_grid_fit=" << (cfg.init_grid_fit ? 1 : 0) << "\n";
    out << "eval.multistep=" << cfg.multistep << "\n";
    return out.str();
}

std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canonical_config(cfg)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ============================================================================
// Cells
// ============================================================================

std::string CellSpec::file_stem() const {
    return condition + "_b" + fmt_g(spec.beta) + "_s" + std::to_string(seed);
}

std::vector<CellSpec> expand_cells(const RunConfig& cfg) {
    std::vector<CellSpec> cells;
    for (const std::string& raw : cfg.conditions) {
        const std::string name = canon_condition(raw);
        std::vector<double> betas = condition_gated(name) ? cfg.betas : std::vector<double>{0.0};
        for (double beta : betas) {
            ConditionSpec spec;
            if (name == "baseline") spec = ConditionSpec::baseline();
            if (name == "fc_only") spec = ConditionSpec::fc_only();
            if (name == "gates_only") spec = ConditionSpec::gates_only(beta, cfg.gate_init);
            if (name == "full") spec = ConditionSpec::full(beta, cfg.gate_init);
            for (std::uint64_t seed : cfg.seeds) cells.push_back({name, spec, seed});
        }
    }
    return cells;
}

EvalSummary evaluate_network(const GatedKan& net, const Problem& problem, int multistep) {
    if (net.shape.input_dim() != problem.input_dim() ||
        net.shape.output_dim() != problem.output_dim())
        throw std::invalid_argument(
            "evaluate: network maps " + std::to_string(net.shape.input_dim()) + " -> " +
            std::to_string(net.shape.output_dim()) + " but the data is " +
            std::to_string(problem.input_dim()) + " -> " + std::to_string(problem.output_dim()));

    EvalSummary out;
    ForwardCache cache;
    forward(net, problem.test_x, thresholded_gates(net), cache);
    out.r2 = r_squared(cache.output(), problem.test_y);
    out.rmse_1step = rmse(cache.output(), problem.test_y);

    if (problem.kind == ProblemKind::dynamical && multistep > 0 && problem.test_x.rows() > 1) {
        const int horizon =
            std::min<int>(multistep, static_cast<int>(problem.test_x.rows()) - 1);
        out.rmse_multistep =
            multistep_rmse(net, problem.test_x, horizon, &out.multistep_diverged);
        out.multistep_used = horizon;
    }
    out.active = active_counts(net);
    return out;
}

CellResult run_cell(const RunConfig& cfg, const Problem& problem, const CellSpec& cell,
                    const std::string& hash) {
    TrainConfig tc = cfg.train;
    tc.seed = cell.seed;
    tc.beta = cell.spec.beta;

    Rng init_rng(derive_seed(cell.seed, 2));
    CellResult res;
    res.net = condition_net(cfg.widths, cell.spec, init_rng);
    if (cfg.init_grid_fit) refresh_grids(res.net, problem.train_x);
    res.history = train(res.net, problem.train_x, problem.train_y, tc, cell.spec);

    EvalSummary ev = evaluate_network(res.net, problem, cfg.multistep);
    ReportRow& row = res.row;
    row.problem = problem.name;
    row.condition = cell.condition;
    row.beta = cell.spec.beta;
    row.seed = cell.seed;
    row.epochs_run = static_cast<int>(res.history.epochs.size());
    row.r2 = ev.r2;
    row.rmse_1step = ev.rmse_1step;
    row.rmse_multistep = ev.rmse_multistep;
    row.multistep_diverged = ev.multistep_diverged;
    row.trunk_active = ev.active.trunk;
    row.fc_active = ev.active.fc;
    row.sparsity_pct = ev.active.sparsity_pct;
    row.status = "ok";
    row.config_hash = hash;
    return res;
}

// ============================================================================
// Row persistence
// ============================================================================

namespace {

double json_num(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j[key].get<double>();
}

}  // namespace

ReportRow report_row_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("cell record parse: ") + e.what());
    }
    ReportRow r;
    r.problem = j.value("problem", std::string());
    r.condition = j.value("condition", std::string());
    r.beta = j.value("beta", 0.0);
    r.seed = j.value("seed", static_cast<std::uint64_t>(0));
    r.epochs_run = j.value("epochs_run", 0);
    r.r2 = json_num(j, "r2");
    r.rmse_1step = json_num(j, "rmse_1step");
    r.rmse_multistep = json_num(j, "rmse_multistep");
    r.multistep_diverged = j.value("multistep_diverged", false);
    r.trunk_active = j.value("trunk_active", 0);
    r.fc_active = j.value("fc_active", 0);
    r.sparsity_pct = json_num(j, "sparsity_pct");
    r.status = j.value("status", std::string());
    r.config_hash = j.value("config_hash", std::string());
    return r;
}

// ============================================================================
// Orchestrator
// ============================================================================

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

ReportRow failed_row(const Problem& problem, const CellSpec& cell, const std::string& hash) {
    ReportRow r;
    r.problem = problem.name;
    r.condition = cell.condition;
    r.beta = cell.spec.beta;
    r.seed = cell.seed;
    r.r2 = std::numeric_limits<double>::quiet_NaN();
    r.rmse_1step = std::numeric_limits<double>::quiet_NaN();
    r.sparsity_pct = std::numeric_limits<double>::quiet_NaN();
    r.status = "failed";
    r.config_hash = hash;
    return r;
}

}  // namespace

int run_experiment(const RunConfig& cfg, bool force, int jobs, std::ostream& log) {
    cfg.validate();
    const std::string hash = config_hash(cfg);

    Problem problem = make_problem(cfg.problem);
    problem.validate();
    if (problem.input_dim() != cfg.widths.front() || problem.output_dim() != cfg.widths.back())
        throw std::invalid_argument(
            "config: arch.widths is " + std::to_string(cfg.widths.front()) + " -> " +
            std::to_string(cfg.widths.back()) + " but " + problem.name + " is " +
            std::to_string(problem.input_dim()) + " -> " + std::to_string(problem.output_dim()));

    const fs::path out_dir(cfg.out_dir);
    const fs::path cell_dir = out_dir / "cells";
    fs::create_directories(cell_dir);

    const std::vector<CellSpec> cells = expand_cells(cfg);
    std::vector<ReportRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> any_failed{false};
    std::mutex log_mtx;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const CellSpec& cell = cells[i];
            const std::string stem = cell.file_stem();
            const fs::path record = cell_dir / (stem + ".json");

            if (!force && fs::exists(record)) {
                std::ifstream in(record);
                std::ostringstream ss;
                ss << in.rdbuf();
                try {
                    ReportRow cached = report_row_from_json(ss.str());
                    if (cached.config_hash == hash && cached.status == "ok") {
                        rows[i] = cached;
                        std::lock_guard<std::mutex> lk(log_mtx);
                        log << "cached " << stem << "\n";
                        continue;
                    }
                } catch (const std::exception&) {
                    // unreadable record: recompute below
                }
            }

            try {
                CellResult res = run_cell(cfg, problem, cell, hash);
                rows[i] = res.row;
                save_network(res.net, (cell_dir / (stem + ".net.json")).string());
                write_history((cell_dir / (stem + ".history.csv")).string(), res.history);
            } catch (const std::exception& e) {
                rows[i] = failed_row(problem, cell, hash);
                any_failed = true;
                std::lock_guard<std::mutex> lk(log_mtx);
                log << "failed " << stem << ": " << e.what() << "\n";
            }
            write_text_file(record.string(), report_row_json(rows[i]) + "\n");
            if (rows[i].status == "ok") {
                std::lock_guard<std::mutex> lk(log_mtx);
                char line[160];
                std::snprintf(line, sizeof line,
                              "done %s: epochs=%d r2=%.4f rmse=%.4g active=%d+%d", stem.c_str(),
                              rows[i].epochs_run, rows[i].r2, rows[i].rmse_1step,
                              rows[i].trunk_active, rows[i].fc_active);
                log << line << "\n";
            }
        }
    };

    int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    ExperimentReport report;
    report.rows = std::move(rows);
    write_report_text((out_dir / "report.txt").string(), report);
    write_report_records((out_dir / "report.jsonl").string(), report);
    log << "report written to " << out_dir.string() << "\n";
    return any_failed ? 1 : 0;
}

}  // namespace sparsekan
