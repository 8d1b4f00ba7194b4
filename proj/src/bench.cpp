#include "dfest/bench.hpp"

#include "csv_util.hpp"
#include "dfest/error.hpp"
#include "dfest/linalg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace dfest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Matrix sub4_A() {
    Matrix A(4, 4);
    A << 0.35, -0.5, 0.2, -0.55,
        -0.5, 0.75, 0.0, -0.5,
        0.55, -0.35, 0.55, -0.55,
        -0.05, 0.55, -0.25, -0.3;
    return A;
}

Matrix sub4_B() {
    Matrix B(4, 2);
    B << -0.2, 0.1,
        -0.6, -0.8,
        -0.7, 0.4,
        -0.2, -0.6;
    return B;
}

Matrix sub4_C() {
    Matrix C(2, 4);
    C << -0.6, -0.7, -0.5, 0.2,
        0.9, 0.0, -0.9, 0.5;
    return C;
}

Matrix sub4_gain() {
    Matrix K(2, 2);
    K << 0.1, 1.4,
        -0.95, 0.0;
    return K;
}

std::vector<int> one_based_sensors(const std::vector<double>& values) {
    std::vector<int> out;
    for (double s : values) {
        if (s != std::floor(s) || s < 1) throw ValidationError("config", "sensor indices are positive integers (1-based)");
        out.push_back(static_cast<int>(s) - 1);
    }
    return out;
}

Vector draw(std::mt19937_64& rng, std::normal_distribution<double>& normal, Eigen::Index size) {
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = normal(rng);
    return v;
}

double parse_frequency(const std::string& text) {
    std::string t = text;
    double scale = 1.0;
    if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
        scale = std::numbers::pi;
        t.erase(t.size() - 2);
        if (t.empty()) t = "1";
        if (t.back() == '*') t.pop_back();
    }
    return csv::to_double(t, "fault frequency") * scale;
}

FaultComponent parse_component(const std::string& text) {
    const auto parts = csv::split(text, ':');
    FaultComponent c;
    const std::string& kind = parts[0];
    auto field = [&](std::size_t i, double fallback) {
        return parts.size() > i && !parts[i].empty() ? csv::to_double(parts[i], "fault signal") : fallback;
    };
    if (kind == "sin" || kind == "sinusoid") {
        c.kind = FaultComponent::Kind::sinusoid;
        c.amplitude = field(1, 1.0);
        if (parts.size() < 3) throw ValidationError("config", "sinusoid fault needs sin:amplitude:frequency");
        c.frequency = parse_frequency(parts[2]);
        c.phase = field(3, 0.0);
    } else if (kind == "step") {
        c.kind = FaultComponent::Kind::step;
        c.amplitude = field(1, 1.0);
        c.delay = static_cast<long>(field(2, 0.0));
        if (c.delay < 0) throw ValidationError("config", "step delay must be non-negative");
    } else if (kind == "const" || kind == "constant") {
        c.kind = FaultComponent::Kind::constant;
        c.amplitude = field(1, 1.0);
    } else {
        throw ValidationError("config", "unknown fault component '" + kind + "' (use sin, step or const)");
    }
    return c;
}

void run_guarded(AlgorithmResult& result, const std::function<void()>& body) {
    try {
        body();
        result.ok = true;
    } catch (const Error& e) {
        result.ok = false;
        result.error = e.stage() + ": " + e.what();
    }
}

PredictorModel realized_predictor(const Realization& rz, Eigen::Index inputs, const std::vector<int>& sensors,
                                  const Matrix& sigma) {
    PredictorModel pred;
    const Eigen::Index ny = rz.system.C.rows();
    pred.Phi = rz.system.A;
    pred.Btilde = rz.system.B.leftCols(inputs);
    pred.K = rz.system.B.rightCols(ny);
    pred.C = rz.system.C;
    pred.D = rz.system.D.leftCols(inputs);
    pred.G = sensor_fault_directions(ny, sensors);
    pred.Etilde = -pred.K * pred.G;
    pred.SigmaE = sigma;
    return pred;
}

double median(std::vector<double> v) {
    if (v.empty()) return kNaN;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

double time_filter(const FaultEstimationFilter& filter, const IOData& data, Eigen::Index steps) {
    FaultEstimationFilter runner = filter;
    runner.reset();
    const RowMajorMatrix u = data.u, y = data.y;
    const Eigen::Index N = data.sample_count();
    Vector fhat(filter.faults());
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(steps));
    double sink = 0.0;
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Eigen::Index k = t % N;
        const Eigen::Map<const Vector> uk(u.data() + k * u.cols(), u.cols());
        const Eigen::Map<const Vector> yk(y.data() + k * y.cols(), y.cols());
        const auto start = std::chrono::steady_clock::now();
        runner.step(uk, yk, fhat);
        const auto stop = std::chrono::steady_clock::now();
        sink += fhat(0);
        times.push_back(std::chrono::duration<double, std::nano>(stop - start).count());
    }
    volatile double keep = sink;
    (void)keep;
    return median(std::move(times));
}

// Per-step moving-horizon cost: VARX residual of the newest sample plus the
// last-block window product.
double time_mhe(const MheProblem& mhe, const IdentifiedXi& xi, const IOData& data, Eigen::Index steps) {
    const auto p = static_cast<Eigen::Index>(xi.past_horizon);
    const Eigen::Index nu = xi.inputs(), ny = xi.outputs(), nz = nu + ny;
    const auto L = static_cast<Eigen::Index>(mhe.window);
    const Eigen::Index N = data.sample_count();
    if (N <= p) throw ValidationError("timing", "record shorter than the past horizon");

    RowMajorMatrix theta(ny, p * nz);
    for (Eigen::Index lag = p; lag >= 1; --lag) {
        const Eigen::Index c = (p - lag) * nz;
        theta.block(0, c, ny, nu) = xi.hu[static_cast<std::size_t>(lag)];
        theta.block(0, c + nu, ny, ny) = xi.hy[static_cast<std::size_t>(lag)];
    }
    const Matrix h0 = xi.hu[0];
    RowMajorMatrix z(N, nz);
    z << data.u, data.y;

    Vector ring = Vector::Zero(2 * L * ny);
    Vector r(ny), fhat(mhe.faults);
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(steps));
    double sink = 0.0;
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Eigen::Index k = p + t % (N - p);
        const Eigen::Index slot = t % L;
        const auto start = std::chrono::steady_clock::now();
        const Eigen::Map<const Vector> past(z.data() + (k - p) * nz, p * nz);
        r = z.row(k).tail(ny).transpose();
        r.noalias() -= theta * past;
        r.noalias() -= h0 * z.row(k).head(nu).transpose();
        ring.segment(slot * ny, ny) = r;
        ring.segment((slot + L) * ny, ny) = r;
        fhat.noalias() = mhe.last_rows * ring.segment((slot + 1) * ny, L * ny);
        const auto stop = std::chrono::steady_clock::now();
        sink += fhat(0);
        times.push_back(std::chrono::duration<double, std::nano>(stop - start).count());
    }
    volatile double keep = sink;
    (void)keep;
    return median(std::move(times));
}

std::string fmt(double v, int digits = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

const char* const kColors[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};

}  // namespace

std::vector<std::string> plant_names() { return {"sub4", "sub4x3"}; }

PlantSpec registry_plant(const std::string& name) {
    PlantSpec spec;
    spec.name = name;
    spec.sample_period = 0.5;
    spec.controller_gain = sub4_gain();
    if (name == "sub4") {
        spec.description = "4-state, 2-input, 2-output open-loop unstable plant (eigenvalue 1.207); fault on sensor 1";
        spec.sensors = {0};
        spec.model = make_sensor_fault_model(sub4_A(), sub4_B(), sub4_C(), Matrix(), Matrix::Identity(4, 4),
                                             1e-4 * Matrix::Identity(4, 4), 0.01 * Matrix::Identity(2, 2), spec.sensors);
    } else if (name == "sub4x3") {
        Matrix C(3, 4);
        C << sub4_C(), (Matrix(1, 4) << 0.6, 1.0, 0.9, 0.6).finished();
        Matrix gain = Matrix::Zero(2, 3);
        gain.leftCols(2) = sub4_gain();
        spec.controller_gain = gain;
        spec.description = "sub4 with a third sensor; faults on sensors 1 and 2";
        spec.sensors = {0, 1};
        spec.model = make_sensor_fault_model(sub4_A(), sub4_B(), C, Matrix(), Matrix::Identity(4, 4),
                                             1e-4 * Matrix::Identity(4, 4), 0.01 * Matrix::Identity(3, 3), spec.sensors);
    } else {
        std::ostringstream os;
        os << "unknown plant '" << name << "' (registry:";
        for (const auto& n : plant_names()) os << ' ' << n;
        os << ")";
        throw ValidationError("plant", os.str());
    }
    FeedbackController check(spec.model, spec.controller_gain);
    return spec;
}

PlantSpec load_plant(const Config& config) {
    if (!config.has_section("plant")) throw ValidationError("plant", "config has no [plant] section");
    PlantSpec spec;
    spec.name = config.get_string("plant", "name", "custom");
    spec.description = config.get_string("plant", "description", "user-supplied plant");
    spec.sample_period = config.get_double("plant", "sample_period", 0.5);
    const Matrix A = config.get_matrix("plant", "A");
    const Matrix B = config.get_matrix("plant", "B");
    const Matrix C = config.get_matrix("plant", "C");
    const Eigen::Index n = A.rows(), ny = C.rows();
    const Matrix D = config.has("plant", "D") ? config.get_matrix("plant", "D") : Matrix::Zero(ny, B.cols());
    const Matrix F = config.has("plant", "F") ? config.get_matrix("plant", "F") : Matrix::Identity(n, n);
    Matrix Q = config.has("plant", "Q") ? config.get_matrix("plant", "Q")
                                        : config.get_double("plant", "process_variance", 1e-4) * Matrix::Identity(F.cols(), F.cols());
    Matrix R = config.has("plant", "R") ? config.get_matrix("plant", "R")
                                        : config.get_double("plant", "measurement_variance", 0.01) * Matrix::Identity(ny, ny);
    spec.sensors = config.has("plant", "sensors") ? one_based_sensors(config.get_list("plant", "sensors"))
                                                  : std::vector<int>{0};
    spec.model = make_sensor_fault_model(A, B, C, D, F, std::move(Q), std::move(R), spec.sensors);
    if (!config.has("controller", "gain")) throw ValidationError("plant", "config has no [controller] gain");
    spec.controller_gain = config.get_matrix("controller", "gain");
    FeedbackController check(spec.model, spec.controller_gain);
    return spec;
}

PlantSpec resolve_plant(const std::string& name_or_file) {
    const auto names = plant_names();
    if (std::find(names.begin(), names.end(), name_or_file) != names.end()) return registry_plant(name_or_file);
    if (std::filesystem::exists(name_or_file)) return load_plant(Config::from_file(name_or_file));
    return registry_plant(name_or_file);  // throws with the registry list
}

PlantSpec with_sensors(PlantSpec plant, const std::vector<int>& sensors) {
    auto& m = plant.model;
    plant.model = make_sensor_fault_model(m.A, m.B, m.C, m.D, m.F, m.Q, m.R, sensors);
    plant.sensors = sensors;
    return plant;
}

PlantSpec with_noise(PlantSpec plant, double process_variance, double measurement_variance) {
    if (process_variance < 0.0 || measurement_variance < 0.0) throw ValidationError("plant", "noise variances must be non-negative");
    plant.model.Q = process_variance * Matrix::Identity(plant.model.noises(), plant.model.noises());
    plant.model.R = measurement_variance * Matrix::Identity(plant.model.outputs(), plant.model.outputs());
    return plant;
}

FeedbackController::FeedbackController(const StateSpaceModel& model, Matrix gain) : gain_(std::move(gain)) {
    if (gain_.rows() != model.inputs() || gain_.cols() != model.outputs())
        throw ValidationError("controller", "controller gain must be n_u x n_y");
    const Eigen::Index ny = model.outputs();
    const Matrix loop = Matrix::Identity(ny, ny) + model.D * gain_;
    Eigen::FullPivLU<Matrix> lu(loop);
    if (!lu.isInvertible()) throw ValidationError("controller", "algebraic loop I + D gain is singular");
    const Matrix Acl = model.A - model.B * gain_ * lu.solve(model.C);
    radius_ = linalg::spectral_radius(Acl);
    if (!(radius_ < 1.0)) {
        std::ostringstream os;
        os << "closed loop is not stable (spectral radius " << radius_ << ")";
        throw ValidationError("controller", os.str());
    }
}

IOData simulate_closed_loop(const StateSpaceModel& model, const FeedbackController& controller, const Matrix& eta,
                            const Matrix& f, std::uint64_t seed, const Vector& x0) {
    model.validate();
    const Eigen::Index N = eta.rows();
    const Eigen::Index nu = model.inputs(), ny = model.outputs();
    if (eta.cols() != nu) throw ValidationError("simulate", "reference width must equal n_u");
    if (f.rows() != N || f.cols() != model.faults()) throw ValidationError("simulate", "fault series must be N x n_f");
    if (x0.size() != 0 && x0.size() != model.states()) throw ValidationError("simulate", "x0 has the wrong dimension");

    const Matrix& K = controller.gain();
    const Eigen::FullPivLU<Matrix> loop(Matrix::Identity(ny, ny) + model.D * K);
    const Matrix Lw = linalg::psd_factor(model.Q);
    const Matrix Lv = linalg::psd_factor(model.R);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;

    IOData out;
    out.u.resize(N, nu);
    out.y.resize(N, ny);
    Vector x = x0.size() == 0 ? Vector::Zero(model.states()) : x0;
    for (Eigen::Index k = 0; k < N; ++k) {
        const Vector v = Lv * draw(rng, normal, ny);
        const Vector w = Lw * draw(rng, normal, model.noises());
        const Vector etak = eta.row(k).transpose();
        const Vector fk = f.row(k).transpose();
        const Vector y = loop.solve(model.C * x + model.D * etak + model.G * fk + v);
        const Vector u = -K * y + etak;
        out.y.row(k) = y.transpose();
        out.u.row(k) = u.transpose();
        x = model.A * x + model.B * u + model.E * fk + model.F * w;
    }
    return out;
}

IOData collect_identification_data(const StateSpaceModel& model, const FeedbackController& controller,
                                   Eigen::Index samples, const Matrix& eta_covariance, std::uint64_t seed) {
    const Eigen::Index nu = model.inputs();
    if (samples < 1) throw ValidationError("identify", "sample count must be positive");
    const Matrix cov = eta_covariance.size() == 0 ? Matrix::Identity(nu, nu) : eta_covariance;
    if (cov.rows() != nu || cov.cols() != nu) throw ValidationError("identify", "reference covariance must be n_u x n_u");
    const Matrix Le = linalg::psd_factor(cov);
    std::mt19937_64 rng(stream_seed(seed, 1));
    std::normal_distribution<double> normal;
    Matrix eta(samples, nu);
    for (Eigen::Index k = 0; k < samples; ++k) eta.row(k) = (Le * draw(rng, normal, nu)).transpose();
    return simulate_closed_loop(model, controller, eta, Matrix::Zero(samples, model.faults()), stream_seed(seed, 2));
}

Matrix FaultScenario::generate(Eigen::Index samples) const {
    validate();
    Matrix f = Matrix::Zero(samples, static_cast<Eigen::Index>(sensors.size()));
    for (Eigen::Index k = onset; k < samples; ++k) {
        for (std::size_t s = 0; s < signals.size(); ++s) {
            double value = 0.0;
            for (const auto& c : signals[s]) {
                switch (c.kind) {
                    case FaultComponent::Kind::constant: value += c.amplitude; break;
                    case FaultComponent::Kind::step: value += k >= onset + c.delay ? c.amplitude : 0.0; break;
                    case FaultComponent::Kind::sinusoid:
                        value += c.amplitude * std::sin(c.frequency * static_cast<double>(k) + c.phase);
                        break;
                }
            }
            f(k, static_cast<Eigen::Index>(s)) = value;
        }
    }
    return f;
}

void FaultScenario::validate() const {
    if (onset < 0) throw ValidationError("scenario", "fault onset must be non-negative");
    if (sensors.empty()) throw ValidationError("scenario", "scenario needs at least one faulty sensor");
    if (signals.size() != sensors.size()) throw ValidationError("scenario", "one signal list per faulty sensor is required");
}

FaultScenario FaultScenario::sinusoid_plus_step(const std::vector<int>& sensors, long onset) {
    FaultScenario sc;
    sc.onset = onset;
    sc.sensors = sensors;
    sc.signals.assign(sensors.size(), {});
    FaultComponent sine{FaultComponent::Kind::sinusoid, 1.0, 0.1 * std::numbers::pi, 0.0, 0};
    FaultComponent step{FaultComponent::Kind::step, 1.0, 0.0, 0.0, 0};
    if (sensors.size() == 1) {
        sc.signals[0] = {sine, step};
    } else if (sensors.size() >= 2) {
        sc.signals[0] = {sine};
        sc.signals[1] = {step};
    }
    return sc;
}

FaultScenario FaultScenario::from_config(const Config& config, const std::vector<int>& default_sensors) {
    const std::vector<int> sensors = config.has("scenario", "sensors")
                                         ? one_based_sensors(config.get_list("scenario", "sensors"))
                                         : default_sensors;
    const long onset = config.get_int("scenario", "onset", 51);
    FaultScenario sc = sinusoid_plus_step(sensors, onset);
    for (std::size_t s = 0; s < sensors.size(); ++s) {
        const std::string key = "signal" + std::to_string(s + 1);
        const auto text = config.find("scenario", key);
        if (!text) continue;
        sc.signals[s].clear();
        for (const auto& term : csv::split(*text, '+')) {
            if (term.empty()) continue;
            sc.signals[s].push_back(parse_component(term));
        }
    }
    sc.validate();
    return sc;
}

EllipseStats ellipse_stats(const Matrix& errors, double level) {
    const Eigen::Index N = errors.rows(), d = errors.cols();
    if (d < 1) throw ValidationError("ellipse", "error series has no components");
    if (N < d + 1) throw ValidationError("ellipse", "at least n_f + 1 samples are required");
    if (!errors.allFinite()) throw ValidationError("ellipse", "error series contains non-finite values");
    EllipseStats st;
    st.level = level;
    st.samples = N;
    st.mean = errors.colwise().mean().transpose();
    const Matrix centered = errors.rowwise() - st.mean.transpose();
    st.covariance = centered.transpose() * centered / static_cast<double>(N - 1);
    st.covariance = 0.5 * (st.covariance + st.covariance.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(st.covariance);
    const Vector lambda = es.eigenvalues();
    st.axes = es.eigenvectors();
    st.semi_axes = (level * lambda.cwiseMax(0.0)).cwiseSqrt();
    const double top = lambda(d - 1);
    st.degenerate = !(top > 0.0) || lambda(0) <= 1e-12 * top;
    if (d == 2) st.orientation = std::atan2(st.axes(1, 1), st.axes(0, 1));
    return st;
}

ComparisonConfig ComparisonConfig::defaults(const PlantSpec& plant) {
    ComparisonConfig cfg;
    cfg.plant = plant;
    cfg.scenario = FaultScenario::sinusoid_plus_step(plant.sensors);
    cfg.eta_covariance = Matrix::Identity(plant.model.inputs(), plant.model.inputs());
    cfg.plant_order = plant.model.states();
    cfg.design.sensors = plant.sensors;
    cfg.design.order = plant.model.states();
    if (plant.model.states() == 4) {
        cfg.design.gain.strategy = GainStrategy::pole_placement;
        cfg.design.gain.poles = {0.948, 0.532, 0.225, 0.141};
    }
    return cfg;
}

ComparisonConfig ComparisonConfig::from_config(const Config& config, const PlantSpec& plant) {
    ComparisonConfig cfg = defaults(plant);
    cfg.design = DesignConfig::from_config(config, cfg.design);
    cfg.scenario = FaultScenario::from_config(config, cfg.design.sensors);
    if (config.has("horizons", "past_horizon")) {
        const long p = config.get_int("horizons", "past_horizon", 100);
        if (p < 1) throw ValidationError("config", "past_horizon must be positive");
        cfg.past_horizon = static_cast<std::size_t>(p);
    }
    if (config.has("horizons", "plant_order")) {
        const std::string v = config.get_string("horizons", "plant_order", "auto");
        if (v == "auto")
            cfg.plant_order.reset();
        else
            cfg.plant_order = config.get_int("horizons", "plant_order", 4);
    }
    cfg.identification_samples = config.get_int("identification", "samples", cfg.identification_samples);
    if (config.has("identification", "eta_covariance"))
        cfg.eta_covariance = config.get_matrix("identification", "eta_covariance");
    else if (config.has("identification", "eta_variance"))
        cfg.eta_covariance = config.get_double("identification", "eta_variance", 1.0) *
                             Matrix::Identity(plant.model.inputs(), plant.model.inputs());
    cfg.estimate_feedthrough = config.get_bool("identification", "estimate_feedthrough", cfg.estimate_feedthrough);
    cfg.eval_start = config.get_int("evaluation", "eval_start", cfg.eval_start);
    cfg.eval_length = config.get_int("evaluation", "eval_length", cfg.eval_length);
    cfg.measure_timing = config.get_bool("evaluation", "timing", cfg.measure_timing);
    if (cfg.eval_start < 0 || cfg.eval_length < 2) throw ValidationError("config", "evaluation window is invalid");
    if (cfg.design.sensors != cfg.scenario.sensors)
        throw ValidationError("config", "scenario sensors must match the design sensors");
    return cfg;
}

const AlgorithmResult& ExperimentReport::algorithm(const std::string& name) const {
    for (const auto& a : algorithms)
        if (a.name == name) return a;
    throw ValidationError("report", "no algorithm named " + name);
}

StepTiming time_per_step(const FaultEstimationFilter& filter, const MheProblem& mhe, const IdentifiedXi& xi,
                         const IOData& data, Eigen::Index steps) {
    return StepTiming{time_filter(filter, data, steps), time_mhe(mhe, xi, data, steps)};
}

ExperimentReport run_comparison(const ComparisonConfig& config, std::uint64_t seed) {
    const StateSpaceModel& model = config.plant.model;
    const std::vector<int>& sensors = config.design.sensors;
    if (config.scenario.sensors != sensors) throw ValidationError("compare", "scenario sensors must match the design sensors");
    const StateSpaceModel plant = make_sensor_fault_model(model.A, model.B, model.C, model.D, model.F, model.Q,
                                                          model.R, sensors);
    config.design.validate(plant.inputs(), plant.outputs());
    if (config.past_horizon + 1 < config.design.markov_length)
        throw ValidationError("compare", "past horizon must be at least the Markov length minus one");
    if (config.eval_start < config.scenario.onset)
        throw ValidationError("compare", "evaluation window must start after the fault onset");
    const FeedbackController controller(plant, config.plant.controller_gain);

    ExperimentReport report;
    report.plant = config.plant.name;
    report.seed = seed;
    report.eval_start = config.eval_start;
    report.eval_length = config.eval_length;
    const Eigen::Index samples = config.eval_start + config.eval_length;
    report.fault = config.scenario.generate(samples);
    report.faulty = simulate_closed_loop(plant, controller, Matrix::Zero(samples, plant.inputs()), report.fault,
                                         stream_seed(seed, 3));

    const IOData id_data =
        collect_identification_data(plant, controller, config.identification_samples, config.eta_covariance, seed);

    report.algorithms.resize(4);
    const char* names[] = {"Alg0", "Alg1", "Alg2", "Alg3"};
    for (std::size_t i = 0; i < 4; ++i) report.algorithms[i].name = names[i];
    auto& alg0 = report.algorithms[0];
    auto& alg1 = report.algorithms[1];
    auto& alg2 = report.algorithms[2];
    auto& alg3 = report.algorithms[3];

    const Eigen::Index timing_steps = 10000;
    auto model_based = [&](AlgorithmResult& res, const PredictorModel& pred) {
        const InverseMatrices inv = open_loop_inverse(pred);
        const Matrix Kr = stabilizing_gain(inv.Phi1, inv.C2, config.design.gain);
        const FaultEstimationFilter filter = reduced_filter(pred, Kr);
        res.estimates = run_filter(filter, report.faulty);
        res.spectral_radius = filter.spectral_radius();
        res.order = filter.order();
        if (config.measure_timing) res.step_time_ns = time_filter(filter, report.faulty, timing_steps);
    };

    run_guarded(alg0, [&] { model_based(alg0, to_predictor(plant)); });

    IdentifiedXi xi;
    std::optional<Realization> plant_rz;
    std::string id_error;
    try {
        xi = identify_xi(id_data, config.past_horizon, IdentifyOptions{0.0, config.estimate_feedthrough});
    } catch (const Error& e) {
        id_error = e.stage() + ": " + e.what();
    }
    if (id_error.empty()) {
        run_guarded(alg1, [&] {
            plant_rz = ho_kalman(xi.joint(), config.design.hankel_rows, config.design.hankel_cols, config.plant_order,
                                 config.design.rank_tol);
            model_based(alg1, realized_predictor(*plant_rz, plant.inputs(), sensors, xi.residual_variance));
        });
        run_guarded(alg2, [&] {
            const DesignResult design = design_filter_from_markov(xi.hu, xi.hy, config.design);
            alg2.estimates = run_filter(design.filter, report.faulty);
            alg2.spectral_radius = design.filter.spectral_radius();
            alg2.order = design.filter.order();
            if (config.measure_timing) alg2.step_time_ns = time_filter(design.filter, report.faulty, timing_steps);
        });
        run_guarded(alg3, [&] {
            if (!plant_rz) throw NumericalError("mhe", "needs the plant realization, which failed");
            const std::size_t L = config.design.markov_length;
            const MheProblem mhe = build_mhe(extended_observability(plant_rz->system.A, plant_rz->system.C, L),
                                             fault_markov(xi.hy, sensors, L), L);
            const MheEstimates est = run_mhe(mhe, varx_residuals(xi, report.faulty));
            alg3.estimates = est.estimates;
            alg3.order = static_cast<Eigen::Index>(L);
            if (config.measure_timing) alg3.step_time_ns = time_mhe(mhe, xi, report.faulty, timing_steps);
        });
    } else {
        for (auto* a : {&alg1, &alg2, &alg3}) a->error = id_error;
    }

    for (auto& a : report.algorithms) {
        if (!a.ok) continue;
        a.errors = a.estimates.middleRows(config.eval_start, config.eval_length) -
                   report.fault.middleRows(config.eval_start, config.eval_length);
        if (!a.errors.allFinite()) {
            a.ok = false;
            a.error = "evaluate: estimates are not finite over the evaluation window";
            continue;
        }
        a.stats = ellipse_stats(a.errors);
    }
    return report;
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir);
    const Eigen::Index nf = report.fault.cols();
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw ValidationError("io", "cannot write " + (dir / name).string());
        csv::set_precision(out);
        return out;
    };
    {
        auto out = open("report.csv");
        out << "algorithm,ok,order,spectral_radius,eval_start,eval_length";
        for (Eigen::Index i = 0; i < nf; ++i) out << ",mean_" << i + 1;
        for (Eigen::Index i = 0; i < nf; ++i)
            for (Eigen::Index j = i; j < nf; ++j) out << ",cov_" << i + 1 << j + 1;
        out << ",trace_cov";
        for (Eigen::Index i = 0; i < nf; ++i) out << ",semi_axis_" << i + 1;
        out << ",orientation,degenerate,error\n";
        for (const auto& a : report.algorithms) {
            out << a.name << ',' << (a.ok ? 1 : 0) << ',' << a.order << ',' << a.spectral_radius << ','
                << report.eval_start << ',' << report.eval_length;
            const bool have = a.ok && a.stats.samples > 0;
            for (Eigen::Index i = 0; i < nf; ++i) out << ',' << (have ? a.stats.mean(i) : kNaN);
            for (Eigen::Index i = 0; i < nf; ++i)
                for (Eigen::Index j = i; j < nf; ++j) out << ',' << (have ? a.stats.covariance(i, j) : kNaN);
            out << ',' << (have ? a.stats.covariance.trace() : kNaN);
            for (Eigen::Index i = 0; i < nf; ++i) out << ',' << (have ? a.stats.semi_axes(i) : kNaN);
            out << ',' << (have ? a.stats.orientation : kNaN) << ',' << (have && a.stats.degenerate ? 1 : 0) << ',';
            std::string err = a.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            out << err << '\n';
        }
    }
    {
        auto out = open("estimates.csv");
        out << "k";
        for (Eigen::Index j = 0; j < nf; ++j) out << ",f_" << j + 1;
        for (const auto& a : report.algorithms)
            for (Eigen::Index j = 0; j < nf; ++j) out << ',' << a.name << "_" << j + 1;
        out << '\n';
        for (Eigen::Index k = 0; k < report.fault.rows(); ++k) {
            out << k;
            for (Eigen::Index j = 0; j < nf; ++j) out << ',' << report.fault(k, j);
            for (const auto& a : report.algorithms)
                for (Eigen::Index j = 0; j < nf; ++j)
                    out << ',' << (a.ok && k < a.estimates.rows() ? a.estimates(k, j) : kNaN);
            out << '\n';
        }
    }
    {
        auto out = open("errors.csv");
        out << "k";
        for (const auto& a : report.algorithms)
            for (Eigen::Index j = 0; j < nf; ++j) out << ',' << a.name << "_" << j + 1;
        out << '\n';
        for (Eigen::Index t = 0; t < report.eval_length; ++t) {
            out << report.eval_start + t;
            for (const auto& a : report.algorithms)
                for (Eigen::Index j = 0; j < nf; ++j) out << ',' << (a.ok ? a.errors(t, j) : kNaN);
            out << '\n';
        }
    }
    {
        auto out = open("timing.csv");
        out << "algorithm,step_time_ns\n";
        for (const auto& a : report.algorithms) out << a.name << ',' << a.step_time_ns << '\n';
    }
    {
        std::ofstream out(dir / "ellipses.svg");
        if (!out) throw ValidationError("io", "cannot write ellipses.svg");
        out << render_svg(report);
    }
}

std::string render_svg(const ExperimentReport& report) {
    const double W = 640, H = 640, margin = 60;
    const Eigen::Index nf = report.fault.cols();
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
        << ' ' << H << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
        << "Fault estimation errors, plant " << report.plant << ", seed " << report.seed << ", k in ["
        << report.eval_start << ", " << report.eval_start + report.eval_length << ")</text>\n";

    std::vector<const AlgorithmResult*> shown;
    for (const auto& a : report.algorithms)
        if (a.ok && a.stats.samples > 0) shown.push_back(&a);

    if (nf >= 2) {
        double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
        for (const auto* a : shown) {
            xmin = std::min(xmin, a->errors.col(0).minCoeff());
            xmax = std::max(xmax, a->errors.col(0).maxCoeff());
            ymin = std::min(ymin, a->errors.col(1).minCoeff());
            ymax = std::max(ymax, a->errors.col(1).maxCoeff());
        }
        const double span = std::max({xmax - xmin, ymax - ymin, 1e-12}) * 1.1;
        const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
        auto px = [&](double x) { return margin + (x - cx + span / 2) / span * (W - 2 * margin); };
        auto py = [&](double y) { return H - margin - (y - cy + span / 2) / span * (H - 2 * margin); };
        svg << "<line x1=\"" << fmt(px(cx - span / 2), 2) << "\" y1=\"" << fmt(py(0), 2) << "\" x2=\""
            << fmt(px(cx + span / 2), 2) << "\" y2=\"" << fmt(py(0), 2) << "\" stroke=\"#bbb\"/>\n";
        svg << "<line x1=\"" << fmt(px(0), 2) << "\" y1=\"" << fmt(py(cy - span / 2), 2) << "\" x2=\"" << fmt(px(0), 2)
            << "\" y2=\"" << fmt(py(cy + span / 2), 2) << "\" stroke=\"#bbb\"/>\n";
        for (std::size_t i = 0; i < shown.size(); ++i) {
            const auto& a = *shown[i];
            const char* color = kColors[i % 6];
            svg << "<g fill=\"" << color << "\" fill-opacity=\"0.35\">\n";
            for (Eigen::Index t = 0; t < a.errors.rows(); ++t)
                svg << "<circle cx=\"" << fmt(px(a.errors(t, 0)), 2) << "\" cy=\"" << fmt(py(a.errors(t, 1)), 2)
                    << "\" r=\"1.5\"/>\n";
            svg << "</g>\n";
            const EllipseStats plane = ellipse_stats(a.errors.leftCols(2), a.stats.level);
            svg << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" d=\"";
            for (int s = 0; s <= 128; ++s) {
                const double th = 2.0 * std::numbers::pi * s / 128.0;
                const Vector pt = plane.mean + plane.axes * (plane.semi_axes.array() *
                                                             Eigen::Array2d(std::cos(th), std::sin(th))).matrix();
                svg << (s == 0 ? 'M' : 'L') << fmt(px(pt(0)), 2) << ',' << fmt(py(pt(1)), 2) << ' ';
            }
            svg << "Z\"/>\n";
        }
        svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            << "font-size=\"12\">error on faulty sensor 1</text>\n";
        svg << "<text x=\"20\" y=\"" << H / 2 << "\" transform=\"rotate(-90 20 " << H / 2
            << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">error on faulty sensor 2</text>\n";
    } else {
        double lo = 0, hi = 0;
        for (const auto* a : shown) {
            lo = std::min({lo, a->errors.minCoeff(), a->stats.mean(0) - a->stats.semi_axes(0)});
            hi = std::max({hi, a->errors.maxCoeff(), a->stats.mean(0) + a->stats.semi_axes(0)});
        }
        const double span = std::max(hi - lo, 1e-12) * 1.1, mid = 0.5 * (lo + hi);
        auto px = [&](double x) { return margin + (x - mid + span / 2) / span * (W - 2 * margin); };
        const double row = (H - 2 * margin) / std::max<std::size_t>(shown.size(), 1);
        for (std::size_t i = 0; i < shown.size(); ++i) {
            const auto& a = *shown[i];
            const char* color = kColors[i % 6];
            const double y0 = margin + row * (static_cast<double>(i) + 0.5);
            svg << "<g fill=\"" << color << "\" fill-opacity=\"0.35\">\n";
            for (Eigen::Index t = 0; t < a.errors.rows(); ++t)
                svg << "<circle cx=\"" << fmt(px(a.errors(t, 0)), 2) << "\" cy=\"" << fmt(y0 + 12.0 * std::sin(0.7 * t), 2)
                    << "\" r=\"1.5\"/>\n";
            svg << "</g>\n";
            const double m = a.stats.mean(0), h = a.stats.semi_axes(0);
            svg << "<line x1=\"" << fmt(px(m - h), 2) << "\" y1=\"" << fmt(y0, 2) << "\" x2=\"" << fmt(px(m + h), 2)
                << "\" y2=\"" << fmt(y0, 2) << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
        }
        svg << "<line x1=\"" << fmt(px(0), 2) << "\" y1=\"" << margin << "\" x2=\"" << fmt(px(0), 2) << "\" y2=\""
            << H - margin << "\" stroke=\"#bbb\"/>\n";
        svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            << "font-size=\"12\">estimation error (bars: mean +/- sqrt(3) sigma)</text>\n";
    }
    for (std::size_t i = 0; i < shown.size(); ++i)
        svg << "<text x=\"" << W - margin - 60 << "\" y=\"" << 50 + 16 * i << "\" fill=\"" << kColors[i % 6]
            << "\" font-family=\"sans-serif\" font-size=\"13\">" << shown[i]->name << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace dfest
