#pragma once

#include "dfest/config.hpp"
#include "dfest/inverse_filter.hpp"
#include "dfest/markov_design.hpp"
#include "dfest/mhe.hpp"
#include "dfest/sysid.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dfest {

/// A plant together with a stabilizing static output-feedback gain.
struct PlantSpec {
    std::string name;
    std::string description;
    StateSpaceModel model;  // E/G describe `sensors`
    Matrix controller_gain;  // u = -gain * y + eta
    std::vector<int> sensors;
    double sample_period = 0.5;  // seconds, informational
};

std::vector<std::string> plant_names();

/// Built-in plants: `sub4` (4 states, 2 inputs, 2 outputs, fault on sensor 1)
/// and `sub4x3` (same dynamics with a third sensor, faults on sensors 1 and 2).
PlantSpec registry_plant(const std::string& name);

/// Plant from `[plant]` (A, B, C, optional D, F, Q, R, sensors, name) and
/// `[controller]` (gain) sections.
PlantSpec load_plant(const Config& config);

/// Registry name, or a path to a config file holding a `[plant]` section.
PlantSpec resolve_plant(const std::string& name_or_file);

/// Same plant with faults on `sensors` (0-based).
PlantSpec with_sensors(PlantSpec plant, const std::vector<int>& sensors);
PlantSpec with_noise(PlantSpec plant, double process_variance, double measurement_variance);

/// Static output feedback u(k) = -gain y(k) + eta(k).
class FeedbackController {
public:
    /// Throws ValidationError when the closed loop of `model` is not stable.
    FeedbackController(const StateSpaceModel& model, Matrix gain);

    const Matrix& gain() const { return gain_; }
    double closed_loop_radius() const { return radius_; }

private:
    Matrix gain_;
    double radius_ = 0.0;
};

/// Closed-loop run; `eta` and `f` have one row per sample.
IOData simulate_closed_loop(const StateSpaceModel& model, const FeedbackController& controller, const Matrix& eta,
                            const Matrix& f, std::uint64_t seed, const Vector& x0 = Vector());

/// Fault-free closed-loop experiment with white reference of covariance
/// `eta_covariance`.
IOData collect_identification_data(const StateSpaceModel& model, const FeedbackController& controller,
                                   Eigen::Index samples, const Matrix& eta_covariance, std::uint64_t seed);

struct FaultComponent {
    enum class Kind { constant, step, sinusoid };
    Kind kind = Kind::constant;
    double amplitude = 1.0;
    double frequency = 0.0;  // rad/sample, sinusoid only
    double phase = 0.0;
    long delay = 0;  // step only: samples after onset
};

struct FaultScenario {
    long onset = 51;  // f(k) = 0 for k < onset
    std::vector<int> sensors;
    std::vector<std::vector<FaultComponent>> signals;  // one list per sensor, summed

    /// N x n_f fault matrix.
    Matrix generate(Eigen::Index samples) const;
    void validate() const;

    /// sin(0.1 pi k) on the first sensor and a unit step on the second; with
    /// a single sensor both components are summed on it.
    static FaultScenario sinusoid_plus_step(const std::vector<int>& sensors, long onset = 51);

    /// `[scenario]` section: onset, sensors (1-based), and per sensor
    /// `signal<i> = sin:A:w[:phase] + step:A[:delay] + const:A`.
    static FaultScenario from_config(const Config& config, const std::vector<int>& default_sensors);
};

struct EllipseStats {
    Vector mean;
    Matrix covariance;
    Vector semi_axes;  // sqrt(level * eigenvalue), ascending eigenvalue order
    Matrix axes;       // unit eigenvectors (columns)
    double orientation = 0.0;  // angle of the major axis (2-D only)
    double level = 3.0;
    bool degenerate = false;
    Eigen::Index samples = 0;
};

/// Sample mean/covariance of the rows of `errors` and the level set
/// e^T Sigma^-1 e = level around the mean.
EllipseStats ellipse_stats(const Matrix& errors, double level = 3.0);

struct ComparisonConfig {
    PlantSpec plant;
    FaultScenario scenario;
    Eigen::Index identification_samples = 1000;
    Matrix eta_covariance;  // defaults to I
    std::size_t past_horizon = 100;
    DesignConfig design;  // L, l, m, filter order, gain
    std::optional<Eigen::Index> plant_order = 4;  // Alg1 realization order
    long eval_start = 200;
    long eval_length = 1000;
    bool estimate_feedthrough = false;
    bool measure_timing = true;

    static ComparisonConfig defaults(const PlantSpec& plant);
    /// Applies `[scenario]`, `[horizons]`, `[identification]`,
    /// `[stabilization]` and `[evaluation]` overrides to `defaults(plant)`.
    static ComparisonConfig from_config(const Config& config, const PlantSpec& plant);
};

struct AlgorithmResult {
    std::string name;
    bool ok = false;
    std::string error;
    Matrix estimates;  // run_length x n_f (NaN where not available)
    Matrix errors;     // eval_length x n_f
    EllipseStats stats;
    double spectral_radius = 0.0;
    Eigen::Index order = 0;
    double step_time_ns = 0.0;  // median per-step wall clock
};

struct ExperimentReport {
    std::string plant;
    std::uint64_t seed = 0;
    long eval_start = 0;
    long eval_length = 0;
    Matrix fault;  // true fault
    IOData faulty;
    std::vector<AlgorithmResult> algorithms;  // Alg0..Alg3

    const AlgorithmResult& algorithm(const std::string& name) const;
};

/// Alg0: true predictor; Alg1: Ho-Kalman plant realization from Xi then
/// model-based design; Alg2: Markov-parameter design; Alg3: moving-horizon LS
/// from Xi. All run on one faulty closed-loop trajectory with eta = 0.
ExperimentReport run_comparison(const ComparisonConfig& config, std::uint64_t seed);

/// report.csv (per-algorithm statistics), estimates.csv, errors.csv,
/// ellipses.svg and timing.csv. Everything except timing.csv is a pure
/// function of config and seed.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);
std::string render_svg(const ExperimentReport& report);

/// Median per-step wall-clock time of the filter recursion and of the
/// moving-horizon window product, over `steps` steps.
struct StepTiming {
    double filter_ns = 0.0;
    double mhe_ns = 0.0;
};
StepTiming time_per_step(const FaultEstimationFilter& filter, const MheProblem& mhe, const IdentifiedXi& xi,
                         const IOData& data, Eigen::Index steps);

}  // namespace dfest
