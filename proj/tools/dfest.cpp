// dfest: data-driven sensor fault estimation filters from the command line.

#include "dfest/bench.hpp"
#include "dfest/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace {

using namespace dfest;

struct Common {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string out = ".";
    std::string plant;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--plant", c.plant, "registry plant name or plant config file");
}

Config load_config(const Common& c) { return c.config_path.empty() ? Config() : Config::from_file(c.config_path); }

PlantSpec pick_plant(const Common& c, const Config& cfg) {
    if (!c.plant.empty()) return resolve_plant(c.plant);
    if (cfg.has_section("plant")) return load_plant(cfg);
    return registry_plant("sub4");
}

std::filesystem::path out_dir(const Common& c) {
    std::filesystem::path dir(c.out);
    std::filesystem::create_directories(dir);
    return dir;
}

IOData identification_data(const Common& c, const Config& cfg, const std::string& data_path, PlantSpec* used) {
    if (!data_path.empty()) return read_iodata_csv(std::filesystem::path(data_path));
    const PlantSpec plant = pick_plant(c, cfg);
    const ComparisonConfig cc = ComparisonConfig::from_config(cfg, plant);
    if (used) *used = plant;
    const FeedbackController controller(plant.model, plant.controller_gain);
    return collect_identification_data(plant.model, controller, cc.identification_samples, cc.eta_covariance, c.seed);
}

int cmd_identify(const Common& c, const std::string& data_path, std::optional<long> horizon, double ridge,
                 std::optional<bool> feedthrough) {
    const Config cfg = load_config(c);
    PlantSpec plant;
    const IOData data = identification_data(c, cfg, data_path, &plant);
    const auto dir = out_dir(c);
    if (data_path.empty()) write_iodata_csv(dir / "data.csv", data);
    const long p = horizon.value_or(cfg.get_int("horizons", "past_horizon", 100));
    if (p < 1) throw ValidationError("identify", "past horizon must be positive");
    IdentifyOptions opts;
    opts.ridge = ridge;
    opts.estimate_feedthrough = feedthrough.value_or(cfg.get_bool("identification", "estimate_feedthrough", true));
    const IdentifiedXi xi = identify_xi(data, static_cast<std::size_t>(p), opts);
    write_xi_csv(dir / "xi.csv", xi);
    std::cout << "identified p=" << p << " n_u=" << xi.inputs() << " n_y=" << xi.outputs() << " from "
              << data.sample_count() << " samples -> " << (dir / "xi.csv").string() << '\n';
    return 0;
}

int cmd_design(const Common& c, const std::string& xi_path, const std::string& data_path, bool model_based) {
    const Config cfg = load_config(c);
    const auto dir = out_dir(c);
    DesignConfig design;
    FilterManifest manifest;
    FaultEstimationFilter filter;
    if (model_based) {
        const PlantSpec plant = pick_plant(c, cfg);
        design = ComparisonConfig::from_config(cfg, plant).design;
        const StateSpaceModel m = make_sensor_fault_model(plant.model.A, plant.model.B, plant.model.C, plant.model.D,
                                                          plant.model.F, plant.model.Q, plant.model.R, design.sensors);
        const PredictorModel pred = to_predictor(m);
        const InverseMatrices inv = open_loop_inverse(pred);
        filter = reduced_filter(pred, stabilizing_gain(inv.Phi1, inv.C2, design.gain));
    } else {
        DesignResult result;
        if (!xi_path.empty()) {
            const IdentifiedXi xi = read_xi_csv(std::filesystem::path(xi_path));
            design = DesignConfig::from_config(cfg, DesignConfig{});
            if (!c.plant.empty() || cfg.has_section("plant"))
                design = ComparisonConfig::from_config(cfg, pick_plant(c, cfg)).design;
            result = design_filter_from_markov(xi.hu, xi.hy, design);
        } else {
            PlantSpec plant;
            const IOData data = identification_data(c, cfg, data_path, &plant);
            std::size_t p = static_cast<std::size_t>(cfg.get_int("horizons", "past_horizon", 100));
            IdentifyOptions opts;
            if (data_path.empty()) {
                const ComparisonConfig cc = ComparisonConfig::from_config(cfg, plant);
                design = cc.design;
                p = cc.past_horizon;
                opts.estimate_feedthrough = cc.estimate_feedthrough;
            } else {
                design = DesignConfig::from_config(cfg, DesignConfig{});
                opts.estimate_feedthrough = cfg.get_bool("identification", "estimate_feedthrough", true);
            }
            result = design_filter_from_data(data, p, design, opts);
        }
        for (const auto& w : result.realized.warnings) std::cerr << "dfest: warning [realize]: " << w << '\n';
        write_realization_audit(dir / "audit", result.realized);
        filter = result.filter;
    }
    manifest.strategy = design.gain.strategy == GainStrategy::riccati ? "riccati" : "pole_placement";
    manifest.poles = design.gain.poles;
    write_filter_bundle(dir / "filter", filter, manifest);
    std::cout << "filter order " << filter.order() << ", spectral radius " << filter.spectral_radius() << " -> "
              << (dir / "filter").string() << '\n';
    return 0;
}

int cmd_estimate(const Common& c, const std::string& filter_path, const std::string& data_path) {
    const FaultEstimationFilter filter = read_filter_bundle(filter_path);
    const IOData data = read_iodata_csv(std::filesystem::path(data_path));
    const Matrix est = run_filter(filter, data);
    const auto dir = out_dir(c);
    std::ofstream out(dir / "estimates.csv");
    if (!out) throw ValidationError("io", "cannot write estimates.csv");
    out << std::setprecision(17) << 'k';
    for (Eigen::Index j = 0; j < est.cols(); ++j) out << ",fhat" << j + 1;
    out << '\n';
    for (Eigen::Index k = 0; k < est.rows(); ++k) {
        out << k;
        for (Eigen::Index j = 0; j < est.cols(); ++j) out << ',' << est(k, j);
        out << '\n';
    }
    std::cout << est.rows() << " estimates -> " << (dir / "estimates.csv").string() << '\n';
    return 0;
}

int cmd_simulate(const Common& c) {
    const Config cfg = load_config(c);
    const PlantSpec plant = pick_plant(c, cfg);
    const ComparisonConfig cc = ComparisonConfig::from_config(cfg, plant);
    const StateSpaceModel m = make_sensor_fault_model(plant.model.A, plant.model.B, plant.model.C, plant.model.D,
                                                      plant.model.F, plant.model.Q, plant.model.R, cc.scenario.sensors);
    const FeedbackController controller(m, plant.controller_gain);
    const Eigen::Index N = cc.eval_start + cc.eval_length;
    const Matrix f = cc.scenario.generate(N);
    const IOData data = simulate_closed_loop(m, controller, Matrix::Zero(N, m.inputs()), f, c.seed);
    const auto dir = out_dir(c);
    write_iodata_csv(dir / "faulty.csv", data);
    write_matrix_csv(dir / "fault.csv", f);
    std::cout << N << " faulty closed-loop samples -> " << (dir / "faulty.csv").string() << '\n';
    return 0;
}

int cmd_compare(const Common& c) {
    const Config cfg = load_config(c);
    const PlantSpec plant = pick_plant(c, cfg);
    const ComparisonConfig cc = ComparisonConfig::from_config(cfg, plant);
    const ExperimentReport report = run_comparison(cc, c.seed);
    const auto dir = out_dir(c);
    write_report(dir, report);
    std::cout << "plant " << report.plant << ", seed " << report.seed << ", errors over k in [" << report.eval_start
              << ", " << report.eval_start + report.eval_length << ")\n";
    for (const auto& a : report.algorithms) {
        std::cout << "  " << a.name << ": ";
        if (a.ok)
            std::cout << "trace(cov) " << a.stats.covariance.trace() << ", spectral radius " << a.spectral_radius
                      << ", step " << a.step_time_ns << " ns\n";
        else
            std::cout << "failed (" << a.error << ")\n";
    }
    return 0;
}

int cmd_zeros(const Common& c, double margin) {
    const Config cfg = load_config(c);
    const PlantSpec plant = pick_plant(c, cfg);
    const DesignConfig design = ComparisonConfig::from_config(cfg, plant).design;
    const StateSpaceModel m = make_sensor_fault_model(plant.model.A, plant.model.B, plant.model.C, plant.model.D,
                                                      plant.model.F, plant.model.Q, plant.model.R, design.sensors);
    const PredictorModel pred = to_predictor(m);
    const InvariantZeros z = invariant_zeros_stable(pred.Phi, pred.Etilde, pred.C, pred.G, margin);
    if (z.warning) std::cerr << "dfest: warning [zeros]: " << *z.warning << '\n';
    const auto dir = out_dir(c);
    std::ofstream out(dir / "zeros.csv");
    out << std::setprecision(17) << "real,imag,modulus\n";
    std::cout << "invariant zeros of the fault subsystem (" << z.zeros.size() << "):\n";
    for (const auto& zz : z.zeros) {
        out << zz.real() << ',' << zz.imag() << ',' << std::abs(zz) << '\n';
        std::cout << "  " << zz.real() << (zz.imag() < 0 ? " - " : " + ") << std::abs(zz.imag()) << "i  |z| = "
                  << std::abs(zz) << '\n';
    }
    std::cout << "stabilizability condition: " << (z.stable ? "satisfied" : "violated") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sensor fault estimation filters from identified Markov parameters"};
    app.require_subcommand(1);
    Common common;

    auto* identify = app.add_subcommand("identify", "identify the predictor Markov parameters (data -> xi.csv)");
    add_common(identify, common);
    std::string data_path, xi_path, filter_path;
    std::optional<long> horizon;
    std::optional<bool> feedthrough;
    double ridge = 0.0;
    identify->add_option("--data", data_path, "I/O data CSV; simulated from the plant when omitted");
    identify->add_option("--past-horizon", horizon, "past horizon p");
    identify->add_option("--ridge", ridge, "Tikhonov weight")->check(CLI::NonNegativeNumber);
    identify->add_option("--feedthrough", feedthrough, "estimate H_0^u (true/false)");

    auto* design = app.add_subcommand("design", "design the data-driven filter (xi or data -> filter bundle)");
    add_common(design, common);
    bool model_based = false;
    design->add_option("--xi", xi_path, "identified Markov parameters CSV");
    design->add_option("--data", data_path, "I/O data CSV");
    design->add_flag("--model-based", model_based, "design from the true plant model instead");

    auto* estimate = app.add_subcommand("estimate", "run a filter bundle on data (-> estimates.csv)");
    add_common(estimate, common);
    estimate->add_option("--filter", filter_path, "filter bundle directory")->required();
    estimate->add_option("--data", data_path, "I/O data CSV")->required();

    auto* compare = app.add_subcommand("compare", "four-way comparison on one faulty closed-loop run");
    add_common(compare, common);

    auto* zeros = app.add_subcommand("zeros", "invariant zeros of the fault subsystem");
    add_common(zeros, common);
    double margin = 1e-6;
    zeros->add_option("--margin", margin, "stability margin");

    auto* simulate = app.add_subcommand("simulate", "faulty closed-loop run (-> faulty.csv, fault.csv)");
    add_common(simulate, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*identify) return cmd_identify(common, data_path, horizon, ridge, feedthrough);
        if (*design) return cmd_design(common, xi_path, data_path, model_based);
        if (*estimate) return cmd_estimate(common, filter_path, data_path);
        if (*compare) return cmd_compare(common);
        if (*zeros) return cmd_zeros(common, margin);
        if (*simulate) return cmd_simulate(common);
    } catch (const ValidationError& e) {
        std::cerr << "dfest: error [" << e.stage() << "]: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "dfest: error [" << e.stage() << "]: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "dfest: error [io]: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
