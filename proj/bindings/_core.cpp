#include "basinforge/cli.hpp"
#include "basinforge/integrator.hpp"
#include "basinforge/ode_system.hpp"
#include "basinforge/planar_basin.hpp"
#include "basinforge/robust_map.hpp"
#include "basinforge/tm_core.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace basinforge;

namespace {

tm::BigInt to_big(const py::int_& v) {
    const auto s = py::str(static_cast<py::handle>(v)).cast<std::string>();
    if (!s.empty() && s[0] == '-') throw py::value_error("tape words are non-negative");
    return tm::BigInt(s);
}

py::int_ to_py(const tm::BigInt& v) { return py::int_(py::str(v.str())); }

py::tuple config_tuple(const tm::EncodedConfig& c) { return py::make_tuple(to_py(c.w1), to_py(c.w2), c.q); }

tm::EncodedConfig config_of(const py::tuple& t) {
    if (t.size() != 3) throw py::value_error("configuration is (w1, w2, q)");
    tm::EncodedConfig c;
    c.w1 = to_big(t[0].cast<py::int_>());
    c.w2 = to_big(t[1].cast<py::int_>());
    c.q = t[2].cast<int>();
    return c;
}

py::array_t<std::uint8_t> labels_array(const planar::Raster& r) {
    py::array_t<std::uint8_t> a({r.n, r.n});
    std::copy(r.labels.begin(), r.labels.end(), a.mutable_data());
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "basin-forge core: Turing machines, robust maps, ODE simulation and planar basins";

    py::register_exception<tm::MachineFormatError>(m, "MachineFormatError", PyExc_ValueError);
    py::register_exception<planar::IncompleteInventory>(m, "IncompleteInventory", PyExc_RuntimeError);
    py::register_exception<integ::IntegrationError>(m, "IntegrationError", PyExc_RuntimeError);

    // ---- machines
    py::class_<tm::TuringMachine>(m, "TuringMachine")
        .def_static("from_json", &tm::TuringMachine::from_json)
        .def_static("from_file", &tm::TuringMachine::from_file)
        .def_static("eraser", &tm::make_eraser)
        .def_static("looper", &tm::make_looper)
        .def_static("binary_incrementer", &tm::make_binary_incrementer)
        .def_property_readonly("num_states", &tm::TuringMachine::num_states)
        .def_property_readonly("base", &tm::TuringMachine::base)
        .def("to_json", &tm::TuringMachine::to_json)
        .def("__repr__", [](const tm::TuringMachine& M) {
            std::ostringstream os;
            os << "TuringMachine(m=" << M.num_states() << ", b=" << M.base() << ")";
            return os.str();
        });

    m.def("encode_input", [](const tm::TuringMachine& M, const py::int_& w) {
        return config_tuple(tm::encode_input(M, to_big(w)));
    });
    m.def("step", [](const tm::TuringMachine& M, const py::tuple& c) { return config_tuple(tm::step(M, config_of(c))); });
    m.def(
        "run",
        [](const tm::TuringMachine& M, const py::int_& w, std::uint64_t max_steps) {
            const auto r = tm::run(M, to_big(w), max_steps);
            py::dict d;
            d["halted"] = r.halted;
            d["clean"] = r.clean;
            d["steps"] = r.steps_used;
            d["final"] = config_tuple(r.final);
            return d;
        },
        py::arg("machine"), py::arg("w"), py::arg("max_steps") = 10000);

    // ---- robust map
    m.def(
        "fbar",
        [](const tm::TuringMachine& M, const Eigen::Vector3d& x, double lambda) {
            return Eigen::Vector3d(robust::build_extension(M, lambda)(x));
        },
        py::arg("machine"), py::arg("x"), py::arg("lam") = 0.5);
    m.def(
        "basin_membership",
        [](const tm::TuringMachine& M, const py::int_& w, double eps, std::uint64_t budget) {
            const robust::PerturbedMap g(robust::build_extension(M));
            const auto v = robust::basin_membership(g, to_big(w), eps, budget);
            return py::make_tuple(std::string(robust::to_string(v.verdict)), v.steps);
        },
        py::arg("machine"), py::arg("w"), py::arg("eps") = 0.2, py::arg("budget") = 1000);

    // ---- ODE
    m.def("phi_window_integral", &ode::phi_window_integral);
    m.def("choose_c", py::overload_cast<double, double, bool>(&ode::choose_c), py::arg("gamma"),
          py::arg("integral"), py::arg("robust") = false);
    m.def("halting_point", [](const tm::TuringMachine& M) { return Eigen::VectorXd(ode::halting_point(M)); });
    m.def(
        "track",
        [](const tm::TuringMachine& M, const py::int_& w, int k_max) {
            const auto f = ode::build_field(M, ode::Stage::Full,
                                            ode::choose_c(1.0 / 16, ode::phi_window_integral(), true));
            const auto rep = integ::track_against_discrete(f, M, to_big(w), k_max);
            py::dict d;
            d["max_deviation"] = rep.max_deviation;
            d["entered_halt_ball"] = rep.entered_halt_ball;
            d["max_distance_after_entry"] = rep.max_distance_after_entry;
            d["final_time"] = rep.final_time;
            d["per_clock"] = rep.per_clock;
            return d;
        },
        py::arg("machine"), py::arg("w"), py::arg("k_max") = 50);

    // ---- planar
    py::class_<planar::PlanarField>(m, "PlanarField")
        .def_static("from_expressions", &planar::PlanarField::from_expressions, py::arg("fx"), py::arg("fy"),
                    py::arg("radius"), py::arg("name") = "")
        .def_static("from_manifest", [](const std::string& path) { return planar::load_field_manifest_file(path).field; })
        .def("__call__", [](const planar::PlanarField& f, const Eigen::Vector2d& x) { return Eigen::Vector2d(f(x)); })
        .def("jacobian", [](const planar::PlanarField& f, const Eigen::Vector2d& x) { return Eigen::Matrix2d(f.jacobian(x)); })
        .def_property_readonly("radius", &planar::PlanarField::radius)
        .def_property_readonly("name", &planar::PlanarField::name);

    m.def(
        "equilibria",
        [](const planar::PlanarField& f, int seed_resolution, int k) {
            py::list out;
            for (const auto& b : planar::find_equilibria(f, seed_resolution, k)) {
                py::dict d;
                d["point"] = Eigen::Vector2d(b.equilibrium);
                d["kind"] = std::string(planar::to_string(b.kind));
                d["side"] = b.side;
                out.append(d);
            }
            return out;
        },
        py::arg("field"), py::arg("seed_resolution") = 24, py::arg("k") = 8);
    m.def(
        "compute_basin",
        [](const planar::PlanarField& f, int sink, int k, int level, double t_max, int threads) {
            const auto inv = planar::build_inventory(f, {}, k);
            planar::BasinOptions opt;
            opt.l = level;
            opt.T_max = t_max;
            opt.threads = threads;
            const auto res = planar::compute_basin(f, inv, sink, k, opt);
            py::dict d;
            d["labels"] = labels_array(res.raster);
            d["target_code"] = res.target_code;
            d["cell"] = res.raster.cell();
            d["classified"] = res.classified;
            d["margin"] = res.margin;
            d["timeouts"] = res.timeouts;
            return d;
        },
        py::arg("field"), py::arg("sink") = 1, py::arg("k") = 8, py::arg("level") = 0, py::arg("t_max") = 200.0,
        py::arg("threads") = 0);

    // ---- command line
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
