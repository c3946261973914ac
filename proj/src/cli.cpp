#include "basinforge/cli.hpp"

#include "basinforge/integrator.hpp"
#include "basinforge/ode_system.hpp"
#include "basinforge/planar_basin.hpp"
#include "basinforge/robust_map.hpp"
#include "basinforge/tm_core.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace basinforge::cli {

namespace {

// Raised for bad user input that is not covered by a module exception.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw UsageError("cannot write " + path);
    return out;
}

// Expands --manifest run.json into option tokens placed before the user's own
// flags; with the take-last policy the command line wins.
std::vector<std::string> expand_manifest(const std::vector<std::string>& args) {
    if (args.empty()) return args;
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--manifest" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--manifest=", 0) == 0) path = args[i].substr(11);
    }
    if (path.empty()) return args;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("run manifest " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("run manifest must be a JSON object");
    std::vector<std::string> tokens;
    for (const auto& [key, value] : j.items()) {
        if (key == "command") {
            if (value.get<std::string>() != args[0])
                throw UsageError("run manifest is for command \"" + value.get<std::string>() + "\"");
            continue;
        }
        if (key == "manifest") continue;
        if (value.is_boolean()) {
            tokens.push_back((value.get<bool>() ? "--" : "--no-") + key);
        } else if (value.is_string()) {
            tokens.push_back("--" + key);
            tokens.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            tokens.push_back("--" + key);
            std::ostringstream os;
            os << std::setprecision(17) << value.get<double>();
            tokens.push_back(value.is_number_integer() ? value.dump() : os.str());
        } else {
            throw UsageError("run manifest value for \"" + key + "\" must be a string, number or boolean");
        }
    }
    std::vector<std::string> out{args[0]};
    out.insert(out.end(), tokens.begin(), tokens.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

tm::BigInt parse_bigint(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw UsageError("input must be a non-negative decimal integer (got \"" + s + "\")");
    return tm::BigInt(s);
}

std::optional<PerturbationSpec::Kind> parse_kind(const std::string& s) {
    if (s == "none") return std::nullopt;
    if (s == "constant") return PerturbationSpec::Kind::Constant;
    if (s == "sinusoidal") return PerturbationSpec::Kind::Sinusoidal;
    if (s == "gaussian" || s == "gaussian-tail") return PerturbationSpec::Kind::GaussianTail;
    if (s == "bump") return PerturbationSpec::Kind::Bump;
    throw UsageError("unknown perturbation kind \"" + s + "\"");
}

std::string vec_str(const Eigen::VectorXd& v) {
    std::ostringstream os;
    os << "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << ")";
    return os.str();
}

// ---- compile ---------------------------------------------------------------

struct CompileArgs {
    std::string machine, stage = "full", out;
    double gamma = 0, lambda = 0.5, c = 0;
    bool robust = true;
};

int cmd_compile(const CompileArgs& a, std::ostream& out) {
    const auto M = tm::TuringMachine::from_file(a.machine);
    const auto stage = ode::parse_stage(a.stage);
    if (stage == ode::Stage::Targeting) throw ode::BadStage("compile builds machine fields: pair, six or full");
    const bool full = stage == ode::Stage::Full;
    const double gamma = a.gamma > 0 ? a.gamma : (full ? 1.0 / 16 : 0.25);
    const bool robust = full && a.robust;
    const double c = a.c > 0 ? a.c : ode::choose_c(gamma, ode::phi_window_integral(), robust);
    auto field = ode::build_field(M, stage, c, a.lambda);
    {
        auto f = open_out(a.out);
        f << ode::field_manifest(field, M) << "\n";
    }
    out << std::setprecision(17);
    out << "compile: stage " << ode::to_string(stage) << ", m = " << M.num_states() << ", b = " << M.base()
        << ", dimension " << field.dim() << "\n";
    out << "c = " << c << " (gamma = " << gamma << (robust ? ", robust" : "") << ")\n";
    if (full) out << "x_halt = " << vec_str(ode::halting_point(M)) << "\n";
    out << "wrote " << a.out << "\n";
    return kExitOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string machine, field, input = "0", out, perturb = "none";
    int kmax = 50;
    double offset = 0.0, alpha = 1.0 / 32, rtol = 1e-10, atol = 1e-10;
    std::uint64_t seed = 1;
    std::uint64_t oracle_steps = 100000;
    std::uint64_t max_steps = 100'000'000;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    if (a.machine.empty() == a.field.empty()) throw UsageError("simulate needs exactly one of --machine or --field");
    std::optional<tm::TuringMachine> machine;
    std::optional<ode::Field> field;
    if (!a.field.empty()) {
        auto loaded = ode::field_from_manifest(read_file(a.field));
        machine.emplace(std::move(loaded.machine));
        field.emplace(std::move(loaded.field));
    } else {
        machine.emplace(tm::TuringMachine::from_file(a.machine));
        field.emplace(ode::build_field(*machine, ode::Stage::Full,
                                       ode::choose_c(1.0 / 16, ode::phi_window_integral(), true)));
    }
    if (field->params().stage != ode::Stage::Full) throw ode::BadStage("simulate needs a stage-full field manifest");
    const auto& M = *machine;
    const tm::BigInt w = parse_bigint(a.input);
    std::mt19937_64 rng(a.seed);

    ode::VecX offset = ode::VecX::Zero(7);
    if (a.offset > 0) {
        std::uniform_real_distribution<double> U(-a.offset, a.offset);
        for (int i = 0; i < 7; ++i) offset[i] = U(rng);
    }
    std::string perturbation = "none";
    if (const auto kind = parse_kind(a.perturb)) {
        const auto p = random_perturbation(*kind, 7, a.alpha, a.alpha, rng(), ode::halting_point(M));
        field.emplace(integ::perturb_field(*field, p));
        perturbation = p.describe();
    }
    const auto oracle = tm::run(M, w, a.oracle_steps);
    integ::Options opt;
    opt.rtol = a.rtol;
    opt.atol = a.atol;
    opt.max_steps = a.max_steps;
    const auto rep = integ::track_against_discrete(*field, M, w, a.kmax, offset, opt);

    if (!a.out.empty()) {
        auto f = open_out(a.out);
        f << "# basin-forge simulate seed=" << a.seed << " input=" << w << " offset=" << a.offset
          << " perturbation=" << perturbation << "\n";
        integ::write_trajectory_csv(f, rep.trajectory);
    }
    const bool in = rep.entered_halt_ball >= 0 && rep.max_distance_after_entry <= 0.125;
    out << std::setprecision(6);
    out << "simulate: m = " << M.num_states() << ", b = " << M.base() << ", w = " << w << ", seed = " << a.seed
        << ", perturbation = " << perturbation << "\n";
    out << "oracle: " << (oracle.reached_halting_config() ? "halts cleanly" : oracle.halted ? "halts (dirty tape)" : "no halt")
        << " after " << oracle.steps_used << " steps\n";
    out << "max deviation " << rep.max_deviation << " over " << rep.per_clock.size() << " clock integers\n";
    if (rep.entered_halt_ball >= 0)
        out << "entered B(x_halt,1/8) at t=" << rep.entered_halt_ball << "; verdict " << (in ? "IN" : "NOT_YET") << "\n";
    else
        out << "did not enter B(x_halt,1/8) by t=" << rep.final_time << "; verdict NOT_YET\n";
    return kExitOk;
}

// ---- sweep -----------------------------------------------------------------

struct SweepArgs {
    std::string machine, kind = "constant", out;
    long long from = 0, to = 20;
    double alpha = 0.01, eps = 0.2;
    std::uint64_t seed = 1, oracle_steps = 500;
    int budget_factor = 10;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    if (a.from < 0 || a.to < a.from) throw UsageError("sweep range must satisfy 0 <= from <= to");
    if (a.budget_factor < 1) throw UsageError("budget factor must be positive");
    const auto M = tm::TuringMachine::from_file(a.machine);
    std::string perturbation = "none";
    robust::PerturbedMap g(robust::build_extension(M));
    if (const auto kind = parse_kind(a.kind)) {
        const auto p = random_perturbation(*kind, 3, a.alpha, a.alpha, a.seed);
        g = robust::PerturbedMap(robust::build_extension(M), p);
        perturbation = p.describe();
    }
    const robust::Vec3 sink = robust::find_sink(g, robust::Vec3(0, 0, M.halting_state())).point;

    std::ostringstream csv;
    csv << "# basin-forge sweep seed=" << a.seed << " perturbation=" << perturbation << " eps=" << a.eps
        << " budget=" << a.budget_factor << "x oracle steps\n";
    csv << std::setprecision(17);
    csv << "w,verdict,steps,oracle_halted,oracle_steps,match\n";
    long long matches = 0, total = 0;
    for (long long w = a.from; w <= a.to; ++w) {
        const auto oracle = tm::run(M, w, a.oracle_steps);
        const auto budget = static_cast<std::uint64_t>(a.budget_factor) * std::max<std::uint64_t>(oracle.steps_used, 1);
        const auto v = robust::basin_membership(g, sink, w, a.eps, budget);
        const bool match = (v.verdict == robust::Verdict::In) == oracle.reached_halting_config();
        matches += match;
        ++total;
        csv << w << "," << robust::to_string(v.verdict) << "," << v.steps << ","
            << (oracle.reached_halting_config() ? 1 : 0) << "," << oracle.steps_used << "," << (match ? 1 : 0) << "\n";
    }
    if (a.out.empty()) {
        out << csv.str();
    } else {
        auto f = open_out(a.out);
        f << csv.str();
    }
    out << "sweep: " << total << " inputs, " << matches << " verdicts match the oracle, sink "
        << vec_str(sink) << ", perturbation " << perturbation << "\n";
    return kExitOk;
}

// ---- planar ----------------------------------------------------------------

struct PlanarArgs {
    std::string field, out, legend, gamma_csv, annuli_csv;
    int sink = 1, k = 8, level = 0, threads = 0, seed_resolution = 24;
    double tmax = 0.0;
    bool oracle = false;
};

int cmd_planar(const PlanarArgs& a, std::ostream& out) {
    using namespace planar;
    const auto m = load_field_manifest_file(a.field);
    const auto inv = build_inventory(m.field, m.hints, a.k, a.seed_resolution);
    BasinOptions opt;
    opt.l = a.level;
    opt.T_max = a.tmax > 0 ? a.tmax : m.T_max;
    opt.threads = a.threads;
    const auto bc = m.field.inward_check();
    if (!bc.inward)
        out << "note: field is not inward on the boundary (" << bc.violations
            << "/360 samples); orbits may leave the disk\n";
    const auto res = compute_basin(m.field, inv, a.sink, a.k, opt);
    {
        auto f = open_out(a.out, true);
        write_pgm(f, res.raster);
    }
    std::string legend = a.legend;
    if (legend.empty()) {
        const auto dot = a.out.rfind('.');
        legend = (dot == std::string::npos ? a.out : a.out.substr(0, dot)) + ".json";
    }
    {
        auto f = open_out(legend);
        f << legend_json(res.raster, inv, a.sink) << "\n";
    }
    if (!a.gamma_csv.empty()) {
        auto f = open_out(a.gamma_csv);
        write_polylines_csv(f, res.gammas);
    }
    if (!a.annuli_csv.empty()) {
        auto f = open_out(a.annuli_csv);
        write_annuli_csv(f, inv.annuli);
    }
    int sinks = 0, saddles = 0, sources = 0;
    for (const auto& b : inv.equilibria) {
        sinks += b.kind == EquilibriumKind::Sink;
        saddles += b.kind == EquilibriumKind::Saddle;
        sources += b.kind == EquilibriumKind::Source;
    }
    const auto& r = res.raster;
    out << "planar: " << (m.field.name().empty() ? a.field : m.field.name()) << ", R = " << m.field.radius()
        << ", sinks " << sinks << ", saddles " << saddles << ", sources " << sources << ", periodic orbits "
        << inv.annuli.size() << "\n";
    out << "raster " << r.n << "x" << r.n << " (l = " << r.l << "), target sink " << a.sink << " at "
        << vec_str(inv.sink(a.sink).equilibrium) << ": target " << r.count(static_cast<std::uint8_t>(res.target_code))
        << ", classified " << res.classified << ", margin " << res.margin << ", excluded " << res.excluded
        << ", exited " << res.exited << ", timeouts " << res.timeouts << "\n";
    if (a.oracle) {
        std::vector<Vec2> s;
        for (const auto* b : inv.sinks()) s.push_back(b->equilibrium);
        std::vector<Polyline> cycles;
        for (const auto& an : inv.annuli)
            if (an.kind == OrbitKind::Attracting) cycles.push_back(an.orbit);
        const auto bf = brute_force_classify(m.field, r.l, 200.0, s, cycles, 0.05, a.threads);
        out << "oracle (T = 200): agreement " << agreement(r, bf) << ", hausdorff of complements "
            << hausdorff(r, bf, complement_of(res.target_code)) << " (bound " << 1.0 / a.k + std::sqrt(2.0) * r.cell()
            << ")\n";
    }
    out << "wrote " << a.out << " and " << legend << "\n";
    return kExitOk;
}

// ---- render ----------------------------------------------------------------

struct RenderArgs {
    std::string in, out;
    int scale = 1;
};

std::array<std::uint8_t, 3> colour(std::uint8_t code) {
    static const std::uint8_t sinks[][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},   {148, 103, 189},
                                            {140, 86, 75},  {227, 119, 194}, {188, 189, 34}, {23, 190, 207}};
    static const std::uint8_t cycles[][3] = {{255, 215, 0}, {0, 128, 128}, {128, 0, 128}, {128, 128, 0}};
    switch (code) {
        case planar::label::Outside: return {255, 255, 255};
        case planar::label::Excluded: return {64, 64, 64};
        case planar::label::Margin: return {200, 200, 200};
        case planar::label::Unknown: return {220, 0, 0};
        case planar::label::Exited: return {0, 0, 0};
        default: break;
    }
    if (code >= planar::label::CycleBase) {
        const auto* c = cycles[(code - planar::label::CycleBase) % 4];
        return {c[0], c[1], c[2]};
    }
    if (code >= planar::label::SinkBase) {
        const auto* c = sinks[(code - planar::label::SinkBase) % 8];
        return {c[0], c[1], c[2]};
    }
    return {255, 0, 255};
}

void write_png(const std::string& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw UsageError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("libpng failed writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

int cmd_render(const RenderArgs& a, std::ostream& out) {
    if (a.scale < 1 || a.scale > 16) throw UsageError("scale must be in 1..16");
    std::ifstream in(a.in, std::ios::binary);
    if (!in) throw UsageError("cannot open " + a.in);
    const auto r = planar::read_pgm(in, 1.0);
    const int n = r.n * a.scale;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(n) * n * 3);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const auto c = colour(r.at(x / a.scale, y / a.scale));
            std::copy(c.begin(), c.end(), rgb.begin() + (static_cast<std::size_t>(y) * n + x) * 3);
        }
    write_png(a.out, n, n, rgb);
    out << "render: " << a.in << " -> " << a.out << " (" << n << "x" << n << ")\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"basin-forge: Turing-machine fields, perturbation sweeps and planar basins", "basin-forge"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    std::string manifest;  // consumed by expand_manifest

    CompileArgs ca;
    auto* compile = app.add_subcommand("compile", "Compile a machine into a field manifest");
    compile->add_option("--manifest", manifest, "Run manifest (JSON)");
    compile->add_option("--machine", ca.machine, "Machine JSON")->required();
    compile->add_option("--stage", ca.stage, "pair, six or full");
    compile->add_option("--gamma", ca.gamma, "Targeting radius (default 1/16 for full, 1/4 otherwise)");
    compile->add_option("--lambda", ca.lambda, "Contraction factor of the real extension");
    compile->add_option("--c", ca.c, "Override the targeting constant");
    compile->add_flag("--robust,!--no-robust", ca.robust, "Use the perturbation-robust c (full stage)");
    compile->add_option("--out", ca.out, "Output field manifest")->required();

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Integrate a stage-full field and track the machine");
    simulate->add_option("--manifest", manifest, "Run manifest (JSON)");
    simulate->add_option("--machine", sa.machine, "Machine JSON");
    simulate->add_option("--field", sa.field, "Field manifest from compile");
    simulate->add_option("--input,-w", sa.input, "Input word as a decimal integer");
    simulate->add_option("--kmax", sa.kmax, "Clock horizon when the machine does not halt");
    simulate->add_option("--offset", sa.offset, "Random initial offset per coordinate (max norm)");
    simulate->add_option("--perturb", sa.perturb, "none, constant, sinusoidal, gaussian or bump");
    simulate->add_option("--alpha", sa.alpha, "C0 and C1 budget of the random perturbation");
    simulate->add_option("--rtol", sa.rtol);
    simulate->add_option("--atol", sa.atol);
    simulate->add_option("--seed", sa.seed, "Seed for offsets and perturbations");
    simulate->add_option("--oracle-steps", sa.oracle_steps, "Step budget of the discrete oracle");
    simulate->add_option("--max-steps", sa.max_steps, "Integrator step budget");
    simulate->add_option("--out", sa.out, "Trajectory CSV");

    SweepArgs wa;
    auto* sweep = app.add_subcommand("sweep", "Discrete basin membership against the halting oracle");
    sweep->add_option("--manifest", manifest, "Run manifest (JSON)");
    sweep->add_option("--machine", wa.machine, "Machine JSON")->required();
    sweep->add_option("--from", wa.from, "First input");
    sweep->add_option("--to", wa.to, "Last input");
    sweep->add_option("--kind", wa.kind, "none, constant, sinusoidal, gaussian or bump");
    sweep->add_option("--alpha", wa.alpha, "C0 and C1 budget of the random perturbation");
    sweep->add_option("--eps", wa.eps, "Tracking radius epsilon");
    sweep->add_option("--seed", wa.seed, "Seed of the perturbation");
    sweep->add_option("--oracle-steps", wa.oracle_steps, "Step budget of the discrete oracle");
    sweep->add_option("--budget-factor", wa.budget_factor, "Iteration budget as a multiple of oracle steps");
    sweep->add_option("--out", wa.out, "Verdict CSV (stdout when absent)");

    PlanarArgs pa;
    auto* plan = app.add_subcommand("planar", "Basin of a sink of a planar field");
    plan->add_option("--manifest", manifest, "Run manifest (JSON)");
    plan->add_option("--field", pa.field, "Field manifest (JSON)")->required();
    plan->add_option("--sink", pa.sink, "Target sink (1-based, equilibria sorted by x then y)");
    plan->add_option("-k", pa.k, "Accuracy parameter: margin 1/k, grid <= 1/(4k)");
    plan->add_option("--level,-l", pa.level, "Grid level l (2^l cells per side); 0 picks the default");
    plan->add_option("--tmax", pa.tmax, "Per-cell integration budget (default from the manifest, else 200)");
    plan->add_option("--threads", pa.threads, "Worker threads (default BASIN_FORGE_THREADS or all cores)");
    plan->add_option("--seed-resolution", pa.seed_resolution, "Newton seed grid per axis");
    plan->add_option("--out", pa.out, "Label raster (PGM)")->required();
    plan->add_option("--legend", pa.legend, "Legend JSON (default: next to --out)");
    plan->add_option("--gamma-csv", pa.gamma_csv, "Stable-manifold polylines (CSV)");
    plan->add_option("--annuli-csv", pa.annuli_csv, "Periodic annuli polylines (CSV)");
    plan->add_flag("--oracle,!--no-oracle", pa.oracle, "Also run the brute-force oracle and report agreement");

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "Colour a label raster as PNG");
    render->add_option("--manifest", manifest, "Run manifest (JSON)");
    render->add_option("--in", ra.in, "Label raster (PGM)")->required();
    render->add_option("--out", ra.out, "PNG image")->required();
    render->add_option("--scale", ra.scale, "Pixels per cell");

    try {
        std::vector<std::string> args = expand_manifest(raw_args);
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        if (compile->parsed()) return cmd_compile(ca, out);
        if (simulate->parsed()) return cmd_simulate(sa, out);
        if (sweep->parsed()) return cmd_sweep(wa, out);
        if (plan->parsed()) return cmd_planar(pa, out);
        if (render->parsed()) return cmd_render(ra, out);
    } catch (const planar::IncompleteInventory& e) {
        err << "error: incomplete inventory: " << e.what() << "\n";
        return kExitInventory;
    } catch (const integ::IntegrationError& e) {
        err << "error: integrator: " << e.what() << "\n";
        return kExitIntegrator;
    } catch (const robust::NewtonDiverged& e) {
        err << "error: sink search: " << e.what() << "\n";
        return kExitIntegrator;
    } catch (const robust::NotASink& e) {
        err << "error: sink search: " << e.what() << "\n";
        return kExitIntegrator;
    } catch (const tm::MachineFormatError& e) {
        err << "error: machine: " << e.what() << "\n";
        return kExitValidation;
    } catch (const planar::NonHyperbolicEquilibrium& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const planar::NewtonMiss& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const planar::NoOrbitInHint& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const planar::AmbiguousHint& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const planar::SaddleConnectionSuspected& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ode::ZeroGateIntegral& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {  // format errors, bad stage, budgets, usage
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::out_of_range& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace basinforge::cli
