#include "sparsekan/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sparsekan {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

}  // namespace

// ============================================================================
// Problem plumbing
// ============================================================================

void Normalization::apply(Matrix& x) const {
    if (!active()) return;
    if (x.cols() != mean.size())
        throw std::invalid_argument("Normalization: column count mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = (x(r, c) - mean[c]) / std[c];
}

void Normalization::invert(Matrix& x) const {
    if (!active()) return;
    if (x.cols() != mean.size())
        throw std::invalid_argument("Normalization: column count mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = x(r, c) * std[c] + mean[c];
}

void Problem::validate() const {
    if (name.empty()) throw std::invalid_argument("Problem: empty name");
    if (train_x.rows() == 0 || test_x.rows() == 0)
        throw std::invalid_argument("Problem: empty split");
    if (train_x.rows() != train_y.rows() || test_x.rows() != test_y.rows())
        throw std::invalid_argument("Problem: x/y row counts differ");
    if (train_x.cols() != test_x.cols() || train_y.cols() != test_y.cols())
        throw std::invalid_argument("Problem: train/test widths differ");
    if (normalization.active() && normalization.mean.size() != train_x.cols())
        throw std::invalid_argument("Problem: normalization width mismatch");
    for (const Matrix* m : {&train_x, &train_y, &test_x, &test_y})
        for (double v : m->data())
            if (!std::isfinite(v)) throw std::invalid_argument("Problem: non-finite value");
}

// ============================================================================
// Closed-form targets
// ============================================================================

const std::vector<SymbolicSpec>& symbolic_catalog() {
    static const double pi = std::numbers::pi;
    static const std::vector<SymbolicSpec> cat = {
        {"anecdote", 2, -2.0, 2.0}, {"F1", 1, -1.0, 1.0}, {"F2", 1, -1.0, 1.0},
        {"F3", 1, -1.0, 1.0},       {"F4", 1, -1.0, 1.0}, {"F5", 1, -1.0, 1.0},
        {"F6", 1, -1.0, 1.0},       {"F7", 1, 0.0, 2.0},  {"F8", 1, 0.0, 4.0},
        {"F9", 2, -1.0, 1.0},       {"F10", 2, -pi, pi},
    };
    return cat;
}

namespace {

const SymbolicSpec& find_symbolic(const std::string& expr_id) {
    const std::string key = lower(expr_id);
    for (const SymbolicSpec& s : symbolic_catalog())
        if (lower(s.id) == key) return s;
    throw std::invalid_argument("unknown expression id: " + expr_id);
}

double poly_sum(double x, int top_power) {
    double acc = 0.0, p = 1.0;
    for (int k = 1; k <= top_power; ++k) {
        p *= x;
        acc += p;
    }
    return acc;
}

}  // namespace

double symbolic_eval(const std::string& expr_id, const double* x) {
    const std::string id = lower(find_symbolic(expr_id).id);
    if (id == "anecdote") return std::sin(x[0] + x[1] * x[1]);
    if (id == "f1") return poly_sum(x[0], 3);
    if (id == "f2") return poly_sum(x[0], 4);
    if (id == "f3") return poly_sum(x[0], 5);
    if (id == "f4") return poly_sum(x[0], 6);
    if (id == "f5") return std::sin(x[0] * x[0]) * std::cos(x[0]) - 1.0;
    if (id == "f6") return std::sin(x[0]) + std::sin(x[0] + x[0] * x[0]);
    if (id == "f7") return std::log(x[0] + 1.0) + std::log(x[0] * x[0] + 1.0);
    if (id == "f8") return std::sqrt(x[0]);
    if (id == "f9") return std::sin(x[0]) + std::sin(x[1] * x[1]);
    return 2.0 * std::sin(x[0]) * std::cos(x[1]);  // f10
}

Problem gen_symbolic(const std::string& expr_id, int n_train, int n_test, std::uint64_t seed) {
    const SymbolicSpec& spec = find_symbolic(expr_id);
    if (n_train < 1 || n_test < 1)
        throw std::invalid_argument("gen_symbolic: need at least one train and test point");

    auto fill = [&](Matrix& x, Matrix& y, int n, Rng& rng) {
        x.resize(static_cast<std::size_t>(n), static_cast<std::size_t>(spec.dim));
        y.resize(static_cast<std::size_t>(n), 1);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < spec.dim; ++c)
                x(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                    rng.uniform(spec.lo, spec.hi);
            y(static_cast<std::size_t>(r), 0) =
                symbolic_eval(spec.id, x.row_ptr(static_cast<std::size_t>(r)));
        }
    };

    Problem p;
    p.name = spec.id;
    p.kind = ProblemKind::static_map;
    Rng rng_train(derive_seed(seed, 0));
    Rng rng_test(derive_seed(seed, 1));
    fill(p.train_x, p.train_y, n_train, rng_train);
    fill(p.test_x, p.test_y, n_test, rng_test);
    return p;
}

// ============================================================================
// Dynamical systems
// ============================================================================

void ikeda_step(double mu, const double state[2], double next[2]) {
    const double x = state[0], y = state[1];
    const double phi = 0.4 - 6.0 / (1.0 + x * x + y * y);
    const double c = std::cos(phi), s = std::sin(phi);
    next[0] = 1.0 + mu * (x * c - y * s);
    next[1] = mu * (x * s + y * c);
}

namespace {

Problem pairs_from_states(std::string name, const std::vector<double>& states, int dim,
                          int n_train, int n_test) {
    Problem p;
    p.name = std::move(name);
    p.kind = ProblemKind::dynamical;
    auto fill = [&](Matrix& x, Matrix& y, int first_pair, int count) {
        x.resize(static_cast<std::size_t>(count), static_cast<std::size_t>(dim));
        y.resize(static_cast<std::size_t>(count), static_cast<std::size_t>(dim));
        for (int r = 0; r < count; ++r)
            for (int c = 0; c < dim; ++c) {
                x(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                    states[static_cast<std::size_t>((first_pair + r) * dim + c)];
                y(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                    states[static_cast<std::size_t>((first_pair + r + 1) * dim + c)];
            }
    };
    fill(p.train_x, p.train_y, 0, n_train);
    fill(p.test_x, p.test_y, n_train, n_test);
    return p;
}

}  // namespace

Problem gen_ikeda(const IkedaSpec& spec) {
    if (!std::isfinite(spec.mu)) throw std::invalid_argument("gen_ikeda: mu must be finite");
    if (spec.transient_discard < 0 || spec.n_train < 1 || spec.n_test < 1)
        throw std::invalid_argument("gen_ikeda: bad trajectory sizes");

    double s[2] = {spec.x0, spec.y0};
    auto check = [&](int iter) {
        if (!(std::hypot(s[0], s[1]) <= 1e6))
            throw std::runtime_error("gen_ikeda: orbit diverged at iteration " +
                                     std::to_string(iter));
    };
    check(0);
    for (int i = 0; i < spec.transient_discard; ++i) {
        double nxt[2];
        ikeda_step(spec.mu, s, nxt);
        s[0] = nxt[0];
        s[1] = nxt[1];
        check(i + 1);
    }

    const int n_states = spec.n_train + spec.n_test + 1;
    std::vector<double> states;
    states.reserve(static_cast<std::size_t>(n_states) * 2);
    for (int i = 0; i < n_states; ++i) {
        states.push_back(s[0]);
        states.push_back(s[1]);
        double nxt[2];
        ikeda_step(spec.mu, s, nxt);
        s[0] = nxt[0];
        s[1] = nxt[1];
        check(spec.transient_discard + i + 1);
    }
    return pairs_from_states("ikeda", states, 2, spec.n_train, spec.n_test);
}

void ecosystem_deriv(const EcosystemSpec& sp, const double state[3], double deriv[3]) {
    const double N = state[0], P = state[1], Q = state[2];
    deriv[0] = N * (1.0 - N / sp.K) - sp.x_p * sp.y_p * N * P / (N + sp.N0);
    deriv[1] = sp.x_p * P * (sp.y_p * N / (N + sp.N0) - 1.0) -
               sp.x_q * sp.y_q * P * Q / (P + sp.P0);
    deriv[2] = sp.x_q * Q * (sp.y_q * P / (P + sp.P0) - 1.0);
}

void ecosystem_rk4_step(const EcosystemSpec& sp, double h, const double state[3],
                        double next[3]) {
    double k1[3], k2[3], k3[3], k4[3], tmp[3];
    ecosystem_deriv(sp, state, k1);
    for (int i = 0; i < 3; ++i) tmp[i] = state[i] + 0.5 * h * k1[i];
    ecosystem_deriv(sp, tmp, k2);
    for (int i = 0; i < 3; ++i) tmp[i] = state[i] + 0.5 * h * k2[i];
    ecosystem_deriv(sp, tmp, k3);
    for (int i = 0; i < 3; ++i) tmp[i] = state[i] + h * k3[i];
    ecosystem_deriv(sp, tmp, k4);
    for (int i = 0; i < 3; ++i)
        next[i] = state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

namespace {

int ecosystem_steps_per_sample(const EcosystemSpec& sp) {
    if (!(sp.h > 0.0) || !(sp.dt > 0.0))
        throw std::invalid_argument("gen_ecosystem: h and dt must be positive");
    const double ratio = sp.dt / sp.h;
    const int steps = static_cast<int>(std::lround(ratio));
    if (steps < 1 || std::fabs(ratio - steps) > 1e-9)
        throw std::invalid_argument("gen_ecosystem: dt must be a whole multiple of h");
    return steps;
}

void ecosystem_advance(const EcosystemSpec& sp, double s[3], int steps, double t_of_error) {
    for (int i = 0; i < steps; ++i) {
        double nxt[3];
        ecosystem_rk4_step(sp, sp.h, s, nxt);
        for (int d = 0; d < 3; ++d) {
            if (nxt[d] < -1e-9)
                throw std::runtime_error(
                    "gen_ecosystem: population went negative near t = " +
                    std::to_string(t_of_error + (i + 1) * sp.h) + "; reduce the step size");
            s[d] = nxt[d];
        }
    }
}

}  // namespace

void ecosystem_sample_step(const EcosystemSpec& sp, const double state[3], double next[3]) {
    const int steps = ecosystem_steps_per_sample(sp);
    for (int i = 0; i < 3; ++i) next[i] = state[i];
    ecosystem_advance(sp, next, steps, 0.0);
}

Problem gen_ecosystem(const EcosystemSpec& sp) {
    if (sp.n_train < 1 || sp.n_test < 1 || sp.transient_time < 0.0)
        throw std::invalid_argument("gen_ecosystem: bad trajectory sizes");
    for (double v : sp.initial)
        if (!(std::isfinite(v) && v >= 0.0))
            throw std::invalid_argument("gen_ecosystem: initial populations must be nonnegative");
    const int steps = ecosystem_steps_per_sample(sp);

    double s[3] = {sp.initial[0], sp.initial[1], sp.initial[2]};
    const int transient_steps = static_cast<int>(std::lround(sp.transient_time / sp.h));
    ecosystem_advance(sp, s, transient_steps, 0.0);

    const int n_states = sp.n_train + sp.n_test + 1;
    std::vector<double> states;
    states.reserve(static_cast<std::size_t>(n_states) * 3);
    for (int i = 0; i < n_states; ++i) {
        states.insert(states.end(), {s[0], s[1], s[2]});
        ecosystem_advance(sp, s, steps, sp.transient_time + i * sp.dt);
    }
    return pairs_from_states("ecosystem", states, 3, sp.n_train, sp.n_test);
}

// ============================================================================
// CSV
// ============================================================================

Csv read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path);
    Csv csv;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = l.find(',', start);
            if (comma == std::string::npos) {
                out.push_back(trim(l.substr(start)));
                break;
            }
            out.push_back(trim(l.substr(start, comma - start)));
            start = comma + 1;
        }
        return out;
    };
    if (!std::getline(in, line)) throw std::runtime_error("CSV file has no header: " + path);
    csv.header = split(line);
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        csv.cells.push_back(split(line));
    }
    return csv;
}

void write_dataset_csv(const std::string& path, const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) throw std::invalid_argument("write_dataset_csv: row mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t c = 0; c < x.cols(); ++c) out << (c ? "," : "") << "x" << c + 1;
    for (std::size_t c = 0; c < y.cols(); ++c) out << ",y" << c + 1;
    out << "\n";
    char buf[40];
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", x(r, c));
            out << (c ? "," : "") << buf;
        }
        for (std::size_t c = 0; c < y.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", y(r, c));
            out << "," << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for: " + path);
}

std::pair<Matrix, Matrix> read_dataset_csv(const std::string& path) {
    Csv csv = read_csv(path);
    std::size_t dx = 0;
    while (dx < csv.header.size() && csv.header[dx] == "x" + std::to_string(dx + 1)) ++dx;
    std::size_t dy = 0;
    while (dx + dy < csv.header.size() &&
           csv.header[dx + dy] == "y" + std::to_string(dy + 1))
        ++dy;
    if (dx == 0 || dy == 0 || dx + dy != csv.header.size())
        throw std::runtime_error("not a dataset CSV (expected x1..xd,y1..yk header): " + path);
    Matrix x(csv.cells.size(), dx), y(csv.cells.size(), dy);
    for (std::size_t r = 0; r < csv.cells.size(); ++r) {
        if (csv.cells[r].size() != dx + dy)
            throw std::runtime_error("dataset CSV row " + std::to_string(r + 2) +
                                     " has the wrong field count: " + path);
        for (std::size_t c = 0; c < dx + dy; ++c) {
            double v;
            if (!parse_double(csv.cells[r][c], v))
                throw std::runtime_error("dataset CSV row " + std::to_string(r + 2) +
                                         " has a non-numeric cell: " + path);
            if (c < dx)
                x(r, c) = v;
            else
                y(r, c - dx) = v;
        }
    }
    return {std::move(x), std::move(y)};
}

// ============================================================================
// Tabular loaders
// ============================================================================

namespace {

// Case-insensitive substring matching against header names, with vetoes to
// keep e.g. "mean_X" from also matching "wtd_mean_X" or "gmean_X".
std::size_t find_column(const Csv& csv, const std::string& what,
                        const std::vector<std::string>& require,
                        const std::vector<std::string>& forbid = {},
                        bool prefix_only = false) {
    std::size_t found = csv.header.size();
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
        const std::string name = lower(csv.header[c]);
        bool ok = true;
        for (const std::string& k : require)
            if (prefix_only ? name.rfind(k, 0) != 0 : name.find(k) == std::string::npos)
                ok = false;
        for (const std::string& k : forbid)
            if (name.find(k) != std::string::npos) ok = false;
        if (!ok) continue;
        if (found != csv.header.size())
            throw std::invalid_argument("ambiguous CSV column for " + what + ": '" +
                                        csv.header[found] + "' and '" + csv.header[c] + "'");
        found = c;
    }
    if (found == csv.header.size())
        throw std::invalid_argument("missing CSV column for " + what);
    return found;
}

struct TableData {
    Matrix x;  // all usable rows, raw features
    Matrix y;
    int rejected = 0;
};

// Pulls the named columns out of the CSV, dropping rows with missing or
// non-numeric cells (and anything build_row rejects).
template <typename RowFn>
TableData extract_rows(const Csv& csv, const std::vector<std::size_t>& cols,
                       std::size_t target_col, std::size_t out_width, RowFn&& build_row) {
    TableData t;
    std::vector<std::vector<double>> rows;
    std::vector<double> raw(cols.size()), feats(out_width);
    for (const std::vector<std::string>& cells : csv.cells) {
        bool ok = true;
        double target = 0.0;
        if (target_col >= cells.size() || !parse_double(cells[target_col], target)) ok = false;
        for (std::size_t k = 0; ok && k < cols.size(); ++k)
            if (cols[k] >= cells.size() || !parse_double(cells[cols[k]], raw[k])) ok = false;
        if (ok) ok = build_row(raw, feats);
        if (!ok) {
            ++t.rejected;
            continue;
        }
        rows.push_back(feats);
        rows.back().push_back(target);
    }
    t.x.resize(rows.size(), out_width);
    t.y.resize(rows.size(), 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < out_width; ++c) t.x(r, c) = rows[r][c];
        t.y(r, 0) = rows[r][out_width];
    }
    return t;
}

// Standardizes in place on train statistics; constant features pass through.
Normalization standardize(Matrix& train_x, Matrix& test_x) {
    Normalization norm;
    const std::size_t d = train_x.cols();
    norm.mean.assign(d, 0.0);
    norm.std.assign(d, 1.0);
    const double n = static_cast<double>(train_x.rows());
    for (std::size_t c = 0; c < d; ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < train_x.rows(); ++r) sum += train_x(r, c);
        norm.mean[c] = sum / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < train_x.rows(); ++r) {
            double dlt = train_x(r, c) - norm.mean[c];
            ss += dlt * dlt;
        }
        double sd = std::sqrt(ss / n);
        norm.std[c] = sd > 1e-12 ? sd : 1.0;
    }
    norm.apply(train_x);
    norm.apply(test_x);
    return norm;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0));
    rng.shuffle(perm);
    return perm;
}

}  // namespace

Problem load_concrete(const std::string& csv_path, std::uint64_t seed) {
    Csv csv = read_csv(csv_path);
    const std::vector<std::size_t> cols = {
        find_column(csv, "cement", {"cement"}),
        find_column(csv, "slag", {"slag"}),
        find_column(csv, "fly ash", {"ash"}),
        find_column(csv, "water", {"water"}),
        find_column(csv, "superplasticizer", {"superplastic"}),
        find_column(csv, "coarse aggregate", {"coarse"}),
        find_column(csv, "fine aggregate", {"fine"}),
        find_column(csv, "age", {"age"}, {"aggregate", "percentage"}, true),
    };
    const std::size_t target = find_column(csv, "compressive strength", {"strength"});

    TableData t = extract_rows(csv, cols, target, 13,
                               [](const std::vector<double>& raw, std::vector<double>& f) {
                                   const double cement = raw[0], slag = raw[1], ash = raw[2];
                                   const double water = raw[3], age = raw[7];
                                   const double binder = cement + slag + ash;
                                   if (cement <= 0.0 || binder <= 0.0 || age < 0.0) return false;
                                   for (int k = 0; k < 8; ++k) f[static_cast<std::size_t>(k)] = raw[static_cast<std::size_t>(k)];
                                   f[8] = water / cement;
                                   f[9] = water / binder;
                                   f[10] = binder;
                                   f[11] = raw[5] + raw[6];
                                   f[12] = std::log(age + 1.0);
                                   return true;
                               });
    if (t.x.rows() < 2) throw std::invalid_argument("load_concrete: too few usable rows");

    const std::size_t n = t.x.rows();
    const std::size_t n_train = (n * 8) / 10;
    std::vector<std::size_t> perm = seeded_permutation(n, seed);
    std::vector<std::size_t> train_idx(perm.begin(),
                                       perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                                      perm.end());

    Problem p;
    p.name = "concrete";
    p.kind = ProblemKind::static_map;
    p.rejected_rows = t.rejected;
    p.train_x = t.x.take_rows(train_idx);
    p.train_y = t.y.take_rows(train_idx);
    p.test_x = t.x.take_rows(test_idx);
    p.test_y = t.y.take_rows(test_idx);
    p.normalization = standardize(p.train_x, p.test_x);
    p.validate();
    return p;
}

Problem load_superconductor(const std::string& csv_path, int n_train, int n_test,
                            std::uint64_t seed) {
    if (n_train < 1 || n_test < 1)
        throw std::invalid_argument("load_superconductor: bad split sizes");
    Csv csv = read_csv(csv_path);
    const std::vector<std::size_t> cols = {
        find_column(csv, "number of elements", {"number", "element"}),
        find_column(csv, "weighted mean valence", {"wtd", "mean", "valence"},
                    {"gmean", "range", "std", "entropy"}),
        find_column(csv, "weighted mean first ionization energy",
                    {"wtd", "mean", "fie"}, {"gmean", "range", "std", "entropy"}),
        find_column(csv, "mean electron affinity", {"mean", "affinity"},
                    {"wtd", "gmean", "range", "std", "entropy"}),
        find_column(csv, "valence entropy", {"entropy", "valence"}, {"wtd"}),
    };
    const std::size_t target = find_column(csv, "critical temperature", {"critical"});

    TableData t = extract_rows(csv, cols, target, 5,
                               [](const std::vector<double>& raw, std::vector<double>& f) {
                                   f.assign(raw.begin(), raw.end());
                                   return true;
                               });
    const std::size_t need = static_cast<std::size_t>(n_train) + static_cast<std::size_t>(n_test);
    if (t.x.rows() < need)
        throw std::invalid_argument("load_superconductor: only " + std::to_string(t.x.rows()) +
                                    " usable rows, need " + std::to_string(need));

    std::vector<std::size_t> perm = seeded_permutation(t.x.rows(), seed);
    std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + n_train);
    std::vector<std::size_t> test_idx(perm.begin() + n_train, perm.begin() + n_train + n_test);

    Problem p;
    p.name = "superconductor";
    p.kind = ProblemKind::static_map;
    p.rejected_rows = t.rejected;
    p.train_x = t.x.take_rows(train_idx);
    p.train_y = t.y.take_rows(train_idx);
    p.test_x = t.x.take_rows(test_idx);
    p.test_y = t.y.take_rows(test_idx);
    p.normalization = standardize(p.train_x, p.test_x);
    p.validate();
    return p;
}

}  // namespace sparsekan
