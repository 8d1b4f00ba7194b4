#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dfest/bench.hpp"
#include "dfest/error.hpp"

namespace py = pybind11;
using namespace dfest;

namespace {

std::vector<Matrix> blocks(const MarkovSequence& s) { return s.blocks(); }

GainOptions gain_options(const std::string& strategy, const std::vector<Complex>& poles) {
    GainOptions g;
    if (strategy == "riccati")
        g.strategy = GainStrategy::riccati;
    else if (strategy == "pole_placement")
        g.strategy = GainStrategy::pole_placement;
    else
        throw ValidationError("stabilize", "strategy must be 'riccati' or 'pole_placement'");
    g.poles = poles;
    return g;
}

py::dict algorithm_dict(const AlgorithmResult& a) {
    py::dict d;
    d["ok"] = a.ok;
    d["error"] = a.error;
    d["estimates"] = a.estimates;
    d["errors"] = a.errors;
    d["mean"] = a.stats.mean;
    d["covariance"] = a.stats.covariance;
    d["semi_axes"] = a.stats.semi_axes;
    d["spectral_radius"] = a.spectral_radius;
    d["order"] = a.order;
    d["step_time_ns"] = a.step_time_ns;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sensor fault estimation from identified Markov parameters";

    static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
    static py::exception<NumericalError> numerical(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ValidationError& e) {
            py::set_error(validation, (e.stage() + ": " + e.what()).c_str());
        } catch (const NumericalError& e) {
            py::set_error(numerical, (e.stage() + ": " + e.what()).c_str());
        }
    });

    py::class_<PredictorModel>(m, "Predictor")
        .def_readonly("Phi", &PredictorModel::Phi)
        .def_readonly("Btilde", &PredictorModel::Btilde)
        .def_readonly("K", &PredictorModel::K)
        .def_readonly("C", &PredictorModel::C)
        .def_readonly("D", &PredictorModel::D)
        .def_readonly("Etilde", &PredictorModel::Etilde)
        .def_readonly("G", &PredictorModel::G)
        .def_readonly("SigmaE", &PredictorModel::SigmaE)
        .def("markov", [](const PredictorModel& p, const std::string& channel, std::size_t length) {
            const Channel ch = channel == "u" ? Channel::u : channel == "y" ? Channel::y : channel == "f" ? Channel::f
                : throw ValidationError("markov", "channel must be 'u', 'y' or 'f'");
            return blocks(markov_parameters(p, ch, length));
        }, py::arg("channel"), py::arg("length"));

    m.def("predictor",
          [](const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& Q, const Matrix& R,
             const std::vector<int>& sensors, std::optional<Matrix> D) {
              const Eigen::Index n = A.rows();
              const Matrix Dm = D ? *D : Matrix::Zero(C.rows(), B.cols());
              return to_predictor(make_sensor_fault_model(A, B, C, Dm, Matrix::Identity(n, n), Q, R, sensors));
          },
          py::arg("A"), py::arg("B"), py::arg("C"), py::arg("Q"), py::arg("R"), py::arg("sensors"),
          py::arg("D") = py::none(), "Kalman predictor of a plant with faults on `sensors` (0-based).");

    m.def("registry_predictor", [](const std::string& name) { return to_predictor(registry_plant(name).model); },
          py::arg("name") = "sub4");
    m.def("plant_names", &plant_names);

    py::class_<IdentifiedXi>(m, "Xi")
        .def_property_readonly("hu", [](const IdentifiedXi& x) { return blocks(x.hu); })
        .def_property_readonly("hy", [](const IdentifiedXi& x) { return blocks(x.hy); })
        .def_readonly("past_horizon", &IdentifiedXi::past_horizon)
        .def_readonly("residual_variance", &IdentifiedXi::residual_variance);

    m.def("identify",
          [](const Matrix& u, const Matrix& y, std::size_t p, double ridge, bool feedthrough) {
              return identify_xi(IOData{u, y}, p, IdentifyOptions{ridge, feedthrough});
          },
          py::arg("u"), py::arg("y"), py::arg("past_horizon"), py::arg("ridge") = 0.0,
          py::arg("feedthrough") = true);

    m.def("closed_loop_data",
          [](const std::string& plant, Eigen::Index samples, std::uint64_t seed) {
              const PlantSpec p = registry_plant(plant);
              const FeedbackController ctrl(p.model, p.controller_gain);
              const IOData d = collect_identification_data(
                  p.model, ctrl, samples, Matrix::Identity(p.model.inputs(), p.model.inputs()), seed);
              return py::make_tuple(d.u, d.y);
          },
          py::arg("plant"), py::arg("samples"), py::arg("seed"), "Closed-loop identification record (u, y).");

    py::class_<FaultEstimationFilter>(m, "Filter")
        .def_property_readonly("Af", &FaultEstimationFilter::Af)
        .def_property_readonly("Bu", &FaultEstimationFilter::Bu)
        .def_property_readonly("By", &FaultEstimationFilter::By)
        .def_property_readonly("Cf", &FaultEstimationFilter::Cf)
        .def_property_readonly("Du", &FaultEstimationFilter::Du)
        .def_property_readonly("Dy", &FaultEstimationFilter::Dy)
        .def_property_readonly("order", &FaultEstimationFilter::order)
        .def("spectral_radius", &FaultEstimationFilter::spectral_radius)
        .def("markov", [](const FaultEstimationFilter& f, std::size_t length) {
            return blocks(markov_parameters(f.as_state_space(), length));
        })
        .def("run", [](const FaultEstimationFilter& f, const Matrix& u, const Matrix& y) {
            return run_filter(f, IOData{u, y});
        }, py::arg("u"), py::arg("y"));

    m.def("model_filter",
          [](const PredictorModel& pred, const std::string& strategy, const std::vector<Complex>& poles) {
              const InverseMatrices inv = open_loop_inverse(pred);
              return reduced_filter(pred, stabilizing_gain(inv.Phi1, inv.C2, gain_options(strategy, poles)));
          },
          py::arg("predictor"), py::arg("strategy") = "riccati", py::arg("poles") = std::vector<Complex>{});

    m.def("design",
          [](const std::vector<Matrix>& hu, const std::vector<Matrix>& hy, const std::vector<int>& sensors,
             std::size_t markov_length, std::size_t hankel_rows, std::size_t hankel_cols,
             std::optional<Eigen::Index> order, const std::string& strategy, const std::vector<Complex>& poles) {
              DesignConfig cfg;
              cfg.sensors = sensors;
              cfg.markov_length = markov_length;
              cfg.hankel_rows = hankel_rows;
              cfg.hankel_cols = hankel_cols;
              cfg.order = order;
              cfg.gain = gain_options(strategy, poles);
              const DesignResult r = design_filter_from_markov(MarkovSequence(hu), MarkovSequence(hy), cfg);
              return py::make_tuple(r.filter, r.realized.singular_values);
          },
          py::arg("hu"), py::arg("hy"), py::arg("sensors"), py::arg("markov_length") = 100,
          py::arg("hankel_rows") = 20, py::arg("hankel_cols") = 20, py::arg("order") = py::none(),
          py::arg("strategy") = "riccati", py::arg("poles") = std::vector<Complex>{},
          "Filter from Markov parameters; returns (filter, Hankel singular values).");

    m.def("invariant_zeros",
          [](const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G, double margin) {
              const InvariantZeros z = invariant_zeros_stable(Phi, Etilde, C, G, margin);
              return py::make_tuple(z.zeros, z.stable);
          },
          py::arg("Phi"), py::arg("Etilde"), py::arg("C"), py::arg("G"), py::arg("margin") = 1e-6);

    m.def("compare",
          [](const std::string& plant, std::uint64_t seed, const std::string& config_text) {
              const PlantSpec p = resolve_plant(plant);
              const ComparisonConfig cfg = ComparisonConfig::from_config(Config::from_string(config_text), p);
              const ExperimentReport r = run_comparison(cfg, seed);
              py::dict out;
              out["fault"] = r.fault;
              out["eval_start"] = r.eval_start;
              out["eval_length"] = r.eval_length;
              for (const auto& a : r.algorithms) out[py::str(a.name)] = algorithm_dict(a);
              return out;
          },
          py::arg("plant") = "sub4", py::arg("seed") = 1, py::arg("config") = "");
}
