#include <doctest.h>

#include "dfest/bench.hpp"
#include "dfest/config.hpp"
#include "dfest/error.hpp"
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dfest;
using dfest::test::max_abs_diff;
using dfest::test::randn;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ComparisonConfig quick_config(const PlantSpec& plant) {
    ComparisonConfig cfg = ComparisonConfig::defaults(plant);
    cfg.past_horizon = 40;
    cfg.design.markov_length = 40;
    cfg.design.hankel_rows = cfg.design.hankel_cols = 15;
    cfg.eval_length = 300;
    cfg.measure_timing = false;
    return cfg;
}

const char* kPlantText = R"(
# comment line
; another comment
[plant]
name = tiny
A = 0.5 0.1; 0 0.3
B = 1; 0.5
C = 1 0; 0 1
sensors = 2
process_variance = 1e-3
measurement_variance = 1e-2

[controller]
gain = 0.1 0.1
)";

}  // namespace

TEST_CASE("config parsing") {
    const Config c = Config::from_string(R"(
top = 1
[a]
x = 2.5
n = 7
flag = yes
off = 0
list = 1, 2 3
M = 1 2; 3 4
)");
    CHECK(c.get_int("", "top", 0) == 1);
    CHECK(c.get_double("a", "x", 0.0) == 2.5);
    CHECK(c.get_int("a", "n", 0) == 7);
    CHECK(c.get_bool("a", "flag", false));
    CHECK_FALSE(c.get_bool("a", "off", true));
    CHECK(c.get_list("a", "list") == std::vector<double>{1, 2, 3});
    CHECK(max_abs_diff(c.get_matrix("a", "M"), (Matrix(2, 2) << 1, 2, 3, 4).finished()) == 0.0);
    CHECK(c.get_double("a", "missing", 4.0) == 4.0);
    CHECK(c.has_section("a"));
    CHECK_FALSE(c.has("b", "x"));
    CHECK_THROWS_AS(c.get_int("a", "x", 0), ValidationError);
    CHECK_THROWS_AS(c.get_bool("a", "x", false), ValidationError);
    CHECK_THROWS_AS(parse_matrix("1 2; 3"), ValidationError);
    CHECK_THROWS_AS(parse_list("1 two"), ValidationError);
}

TEST_CASE("complex list parsing and formatting") {
    const auto z = parse_complex_list("0.5+0.2i, 0.5-0.2i 0.1 -0.3j 2i");
    REQUIRE(z.size() == 5);
    CHECK(z[0] == Complex(0.5, 0.2));
    CHECK(z[1] == Complex(0.5, -0.2));
    CHECK(z[2] == Complex(0.1, 0.0));
    CHECK(z[3] == Complex(0.0, -0.3));
    CHECK(z[4] == Complex(0.0, 2.0));
    CHECK(parse_complex_list(format_complex_list(z)) == z);
    CHECK_THROWS_AS(parse_complex_list("0.5+x"), ValidationError);
}

TEST_CASE("fault scenarios") {
    const FaultScenario one = FaultScenario::sinusoid_plus_step({0}, 10);
    const Matrix f = one.generate(30);
    CHECK(f.cols() == 1);
    for (Eigen::Index k = 0; k < 10; ++k) CHECK(f(k, 0) == 0.0);
    for (Eigen::Index k = 10; k < 30; ++k)
        CHECK(f(k, 0) == doctest::Approx(std::sin(0.1 * M_PI * static_cast<double>(k)) + 1.0).epsilon(1e-12));

    const Matrix g = FaultScenario::sinusoid_plus_step({0, 1}, 5).generate(20);
    CHECK(g(12, 0) == doctest::Approx(std::sin(1.2 * M_PI)).epsilon(1e-12));
    CHECK(g(12, 1) == 1.0);
    CHECK(g(4, 1) == 0.0);

    const Config c = Config::from_string(R"(
[scenario]
onset = 3
sensors = 2
signal1 = sin:2:0.5pi:0.1 + step:1:4 + const:0.25
)");
    const FaultScenario sc = FaultScenario::from_config(c, {0});
    CHECK(sc.sensors == std::vector<int>{1});
    const Matrix h = sc.generate(12);
    CHECK(h(2, 0) == 0.0);
    CHECK(h(3, 0) == doctest::Approx(2 * std::sin(0.5 * M_PI * 3 + 0.1) + 0.25).epsilon(1e-12));
    CHECK(h(7, 0) == doctest::Approx(2 * std::sin(0.5 * M_PI * 7 + 0.1) + 1.25).epsilon(1e-12));
    CHECK_THROWS_AS(FaultScenario::from_config(Config::from_string("[scenario]\nsignal1 = ramp:1\n"), {0}),
                    ValidationError);
}

TEST_CASE("error ellipse statistics") {
    Matrix pts(4, 2);
    pts << 1, 0, -1, 0, 0, 2, 0, -2;
    const EllipseStats st = ellipse_stats(pts);
    CHECK(max_abs_diff(st.mean, Vector::Zero(2)) == 0.0);
    CHECK(st.covariance(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(st.covariance(1, 1) == doctest::Approx(8.0 / 3.0));
    CHECK(st.semi_axes(0) == doctest::Approx(std::sqrt(3.0 * 2.0 / 3.0)));
    CHECK(st.semi_axes(1) == doctest::Approx(std::sqrt(3.0 * 8.0 / 3.0)));
    CHECK(std::abs(std::abs(st.orientation) - M_PI / 2) <= 1e-12);
    CHECK_FALSE(st.degenerate);

    Matrix line(3, 2);
    line << 0, 0, 1, 1, 2, 2;
    CHECK(ellipse_stats(line).degenerate);

    Matrix scalar(3, 1);
    scalar << 1, 2, 3;
    const EllipseStats s1 = ellipse_stats(scalar, 1.0);
    CHECK(s1.mean(0) == 2.0);
    CHECK(s1.semi_axes(0) == doctest::Approx(1.0));

    CHECK_THROWS_AS(ellipse_stats(Matrix::Zero(2, 2)), ValidationError);
    Matrix bad = Matrix::Zero(5, 1);
    bad(2, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ellipse_stats(bad), ValidationError);
}

TEST_CASE("registry plants and closed-loop controller") {
    for (const auto& name : plant_names()) {
        const PlantSpec p = registry_plant(name);
        CHECK(p.name == name);
        CHECK(p.model.states() == 4);
        const FeedbackController ctrl(p.model, p.controller_gain);
        CHECK(ctrl.closed_loop_radius() < 1.0);
        CHECK(linalg::spectral_radius(p.model.A) > 1.0);
    }
    CHECK(registry_plant("sub4x3").sensors == std::vector<int>{0, 1});
    CHECK_THROWS_AS(registry_plant("nope"), ValidationError);
    const PlantSpec p = registry_plant("sub4");
    CHECK_THROWS_AS(FeedbackController(p.model, Matrix::Zero(2, 2)), ValidationError);
    CHECK_THROWS_AS(FeedbackController(p.model, Matrix::Zero(1, 2)), ValidationError);

    const PlantSpec moved = with_sensors(p, {1});
    CHECK(max_abs_diff(moved.model.G, sensor_fault_directions(2, {1})) == 0.0);
    const PlantSpec quiet = with_noise(p, 1e-6, 1e-4);
    CHECK(quiet.model.Q(0, 0) == 1e-6);
    CHECK(quiet.model.R(1, 1) == 1e-4);
}

TEST_CASE("closed-loop simulation obeys the feedback law") {
    const PlantSpec p = registry_plant("sub4");
    const FeedbackController ctrl(p.model, p.controller_gain);
    std::mt19937_64 rng(1);
    const Matrix eta = randn(rng, 100, 2);
    const IOData d = simulate_closed_loop(p.model, ctrl, eta, Matrix::Zero(100, 1), 5);
    for (Eigen::Index k = 0; k < 100; ++k)
        CHECK(max_abs_diff(d.u.row(k), -(p.controller_gain * d.y.row(k).transpose()).transpose() + eta.row(k)) <=
              1e-12);
    const IOData again = simulate_closed_loop(p.model, ctrl, eta, Matrix::Zero(100, 1), 5);
    CHECK(max_abs_diff(d.y, again.y) == 0.0);
    CHECK_THROWS_AS(simulate_closed_loop(p.model, ctrl, eta, Matrix::Zero(99, 1), 5), ValidationError);
}

TEST_CASE("plant from configuration") {
    const PlantSpec p = load_plant(Config::from_string(kPlantText));
    CHECK(p.name == "tiny");
    CHECK(p.sensors == std::vector<int>{1});
    CHECK(p.model.Q(0, 0) == 1e-3);
    CHECK(p.model.R(0, 0) == 1e-2);
    CHECK(p.model.D.cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(p.model.G, sensor_fault_directions(2, {1})) == 0.0);

    const auto path = std::filesystem::temp_directory_path() / "dfest_test_plant.ini";
    std::ofstream(path) << kPlantText;
    CHECK(resolve_plant(path.string()).name == "tiny");
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_plant(Config::from_string("[plant]\nA = 1\nB = 1\nC = 1\n")), ValidationError);
    CHECK_THROWS_AS(load_plant(Config::from_string("[controller]\ngain = 1\n")), ValidationError);
    CHECK_THROWS_AS(load_plant(Config::from_string("[plant]\nA = 1 2\nB = 1\nC = 1\n[controller]\ngain = 0\n")),
                    ValidationError);
}

TEST_CASE("comparison configuration overrides") {
    const PlantSpec p = registry_plant("sub4");
    const ComparisonConfig d = ComparisonConfig::defaults(p);
    CHECK(d.design.gain.strategy == GainStrategy::pole_placement);
    CHECK(d.past_horizon == 100);
    const ComparisonConfig c = ComparisonConfig::from_config(Config::from_string(R"(
[horizons]
past_horizon = 60
markov_length = 50
plant_order = auto
[identification]
samples = 2000
eta_variance = 4
[evaluation]
eval_start = 100
eval_length = 50
timing = false
[stabilization]
strategy = riccati
)"),
                                                             p);
    CHECK(c.past_horizon == 60);
    CHECK(c.design.markov_length == 50);
    CHECK_FALSE(c.plant_order.has_value());
    CHECK(c.identification_samples == 2000);
    CHECK(c.eta_covariance(1, 1) == 4.0);
    CHECK(c.eval_start == 100);
    CHECK(c.eval_length == 50);
    CHECK_FALSE(c.measure_timing);
    CHECK(c.design.gain.strategy == GainStrategy::riccati);
    CHECK_THROWS_AS(ComparisonConfig::from_config(Config::from_string("[evaluation]\neval_length = 1\n"), p),
                    ValidationError);
}

TEST_CASE("comparison is deterministic for a fixed seed") {
    const PlantSpec plant = registry_plant("sub4");
    const ComparisonConfig cfg = quick_config(plant);
    const ExperimentReport a = run_comparison(cfg, 3);
    const ExperimentReport b = run_comparison(cfg, 3);
    REQUIRE(a.algorithms.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK_MESSAGE(a.algorithms[i].ok, a.algorithms[i].name << ": " << a.algorithms[i].error);
        CHECK((a.algorithms[i].estimates.array() == b.algorithms[i].estimates.array() ||
               (a.algorithms[i].estimates.array().isNaN() && b.algorithms[i].estimates.array().isNaN()))
                  .all());
    }

    const auto dir_a = std::filesystem::temp_directory_path() / "dfest_test_cmp_a";
    const auto dir_b = std::filesystem::temp_directory_path() / "dfest_test_cmp_b";
    write_report(dir_a, a);
    write_report(dir_b, b);
    for (const char* f : {"report.csv", "estimates.csv", "errors.csv", "ellipses.svg"}) {
        CHECK_MESSAGE(slurp(dir_a / f) == slurp(dir_b / f), f);
        CHECK_FALSE(slurp(dir_a / f).empty());
    }
    CHECK(std::filesystem::exists(dir_a / "timing.csv"));
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);

    const ExperimentReport other = run_comparison(cfg, 4);
    CHECK(max_abs_diff(other.faulty.y, a.faulty.y) > 0.0);

    CHECK(a.algorithm("Alg0").stats.covariance.trace() < a.algorithm("Alg2").stats.covariance.trace());
}

TEST_CASE("model-based filter is exact on noise-free closed-loop data") {
    const PlantSpec plant = registry_plant("sub4");
    const ComparisonConfig cfg = quick_config(plant);
    const PredictorModel pred = to_predictor(plant.model);
    const InverseMatrices inv = open_loop_inverse(pred);
    const FaultEstimationFilter filter = reduced_filter(pred, stabilizing_gain(inv.Phi1, inv.C2, cfg.design.gain));

    const PlantSpec clean = with_noise(plant, 0.0, 0.0);
    const FeedbackController ctrl(clean.model, clean.controller_gain);
    const Matrix f = cfg.scenario.generate(400);
    std::mt19937_64 rng(2);
    const IOData data = simulate_closed_loop(clean.model, ctrl, randn(rng, 400, 2), f, 7);
    CHECK(max_abs_diff(run_filter(filter, data), f) <= 1e-6);

    const IOData zero = simulate_closed_loop(clean.model, ctrl, Matrix::Zero(50, 2), Matrix::Zero(50, 1), 7);
    CHECK(zero.y.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("comparison reports a failing stage instead of aborting") {
    ComparisonConfig cfg = quick_config(registry_plant("sub4"));
    cfg.design.gain.poles = {0.5, 0.4, 0.3};
    const ExperimentReport r = run_comparison(cfg, 1);
    CHECK_FALSE(r.algorithm("Alg0").ok);
    CHECK(r.algorithm("Alg0").error.find("stabilize") != std::string::npos);
    CHECK(r.algorithm("Alg3").ok);

    cfg = quick_config(registry_plant("sub4"));
    cfg.eval_start = 10;
    CHECK_THROWS_AS(run_comparison(cfg, 1), ValidationError);
}
