#include <doctest.h>

#include "dfest/bench.hpp"
#include "dfest/error.hpp"
#include "dfest/inverse_filter.hpp"
#include "support.hpp"

#include <algorithm>
#include <filesystem>

using namespace dfest;
using dfest::test::max_abs_diff;
using dfest::test::randn;

namespace {

std::vector<double> sorted_real(const std::vector<Complex>& z) {
    std::vector<double> out;
    for (const auto& v : z) out.push_back(v.real());
    std::sort(out.begin(), out.end());
    return out;
}

Matrix similar_to(std::mt19937_64& rng, const Vector& diag) {
    const Eigen::Index n = diag.size();
    Matrix S = randn(rng, n, n) + 3.0 * Matrix::Identity(n, n);
    return S * diag.asDiagonal() * S.inverse();
}

struct FaultSubsystem {
    Matrix Phi, Etilde, C, G;
};

// Square case (n_y = n_f = 1, G = 1): the zeros are eig(Phi - Etilde C).
FaultSubsystem square_subsystem(std::mt19937_64& rng, const Vector& zeros) {
    const Eigen::Index n = zeros.size();
    FaultSubsystem s;
    s.C = randn(rng, 1, n);
    s.Etilde = randn(rng, n, 1);
    s.G = Matrix::Identity(1, 1);
    s.Phi = similar_to(rng, zeros) + s.Etilde * s.C;
    return s;
}

// Non-square case (n_y = 2, n_f = 1, fault on output 1). Phi1 has the modes
// `modes`; C2 annihilates the eigenvector of modes(0), which is then the
// only invariant zero.
FaultSubsystem nonsquare_subsystem(std::mt19937_64& rng, const Vector& modes) {
    const Eigen::Index n = modes.size();
    Matrix S = randn(rng, n, n) + 3.0 * Matrix::Identity(n, n);
    const Matrix Phi1 = S * modes.asDiagonal() * S.inverse();
    Matrix c2 = randn(rng, 1, n);
    const Vector v = S.col(0);
    c2 -= (c2 * v)(0, 0) / v.squaredNorm() * v.transpose();
    FaultSubsystem s;
    s.C.resize(2, n);
    s.C << randn(rng, 1, n), c2;
    s.G = sensor_fault_directions(2, {0});
    s.Etilde = randn(rng, n, 1);
    s.Phi = Phi1 + s.Etilde * s.C.topRows(1);
    return s;
}

PredictorModel stable_inverse_predictor(std::uint64_t seed, Eigen::Index nu = 1) {
    std::mt19937_64 rng(seed);
    test::RandomModelSpec spec;
    spec.inputs = nu;
    spec.max_inverse_radius = 0.95;
    return test::random_predictor(rng, spec);
}

}  // namespace

TEST_CASE("left_inverse of full column rank directions") {
    std::mt19937_64 rng(1);
    const Matrix G = randn(rng, 4, 2);
    const Matrix Gm = left_inverse(G);
    CHECK(max_abs_diff(Gm * G, Matrix::Identity(2, 2)) <= 1e-12);
    CHECK(max_abs_diff(Gm, linalg::pinv(G)) <= 1e-12);

    const Matrix sel = sensor_fault_directions(3, {0, 2});
    CHECK(max_abs_diff(left_inverse(sel), sel.transpose()) == 0.0);
}

TEST_CASE("left_inverse rejects rank-deficient and wide directions") {
    Matrix G(3, 2);
    G << 1, 2, 2, 4, 3, 6;
    try {
        left_inverse(G);
        FAIL("expected an error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("fault direction rank") != std::string::npos);
        CHECK(e.stage() == "inverse");
    }
    CHECK_THROWS_AS(left_inverse(Matrix::Ones(1, 2)), NumericalError);
}

TEST_CASE("residual generator reproduces the innovation") {
    const PredictorModel pred = stable_inverse_predictor(2);
    std::mt19937_64 rng(3);
    const Eigen::Index N = 300;
    const Matrix u = randn(rng, N, 1);
    const Matrix e = randn(rng, N, 2);
    const IOData data = test::predictor_run(pred, u, Matrix::Zero(N, 1), e);
    Matrix z(N, 3);
    z << data.u, data.y;
    const Matrix r = simulate_system(residual_generator(pred), z);
    CHECK(max_abs_diff(r, e) <= 1e-9);

    const IOData clean = test::predictor_run(pred, u, Matrix::Zero(N, 1), Matrix::Zero(N, 2));
    z << clean.u, clean.y;
    CHECK(simulate_system(residual_generator(pred), z).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("residual covariance of plant data matches the innovation covariance") {
    std::mt19937_64 rng(4);
    test::RandomModelSpec spec;
    spec.radius_hi = 0.9;
    const StateSpaceModel plant = test::random_plant(rng, spec);
    const PredictorModel pred = to_predictor(plant);
    const Eigen::Index N = 40000;
    const IOData data = simulate(plant, randn(rng, N, 1), Matrix::Zero(N, 1), 99);
    Matrix z(N, 3);
    z << data.u, data.y;
    const Matrix r = simulate_system(residual_generator(pred), z).bottomRows(N - 200);
    const Matrix cov = r.transpose() * r / static_cast<double>(r.rows());
    CHECK(max_abs_diff(cov, pred.SigmaE) <= 0.1 * pred.SigmaE.cwiseAbs().maxCoeff());
}

TEST_CASE("open-loop inverse matrices") {
    std::mt19937_64 rng(5);
    const Matrix Phi = randn(rng, 3, 3), Et = randn(rng, 3, 1), C = randn(rng, 2, 3);
    const Matrix G = sensor_fault_directions(2, {1});
    const InverseMatrices inv = open_loop_inverse(Phi, Et, C, G);
    CHECK(max_abs_diff(inv.D1, G.transpose()) == 0.0);
    CHECK(max_abs_diff(inv.Phi1, Phi - Et * C.row(1)) <= 1e-14);
    CHECK(max_abs_diff(inv.C1, -C.row(1)) == 0.0);
    CHECK(inv.C2.row(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(inv.C2.row(0), C.row(0)) == 0.0);
    CHECK(max_abs_diff(inv.D2, G * G.transpose()) == 0.0);

    // All outputs faulty: nothing is left for output injection.
    const InverseMatrices full = open_loop_inverse(Phi, randn(rng, 3, 2), C, Matrix::Identity(2, 2));
    CHECK(full.C2.cwiseAbs().maxCoeff() <= 1e-15);

    CHECK_THROWS_AS(open_loop_inverse(Phi, Et, C, Matrix::Identity(2, 2)), ValidationError);
}

TEST_CASE("invariant zeros: square pencil") {
    std::mt19937_64 rng(6);
    Vector z(3);
    z << 0.5, 0.2, -0.3;
    FaultSubsystem s = square_subsystem(rng, z);
    InvariantZeros res = invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G);
    REQUIRE(res.zeros.size() == 3);
    const auto got = sorted_real(res.zeros);
    CHECK(got[0] == doctest::Approx(-0.3).epsilon(1e-9));
    CHECK(got[1] == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(got[2] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(res.stable);
    CHECK_FALSE(res.warning.has_value());
    for (const auto& zero : res.zeros) CHECK(rosenbrock_rank_drop(s.Phi, s.Etilde, s.C, s.G, zero) <= 1e-10);
    CHECK(rosenbrock_rank_drop(s.Phi, s.Etilde, s.C, s.G, Complex(0.9, 0.0)) > 1e-4);

    z(0) = 1.2;
    s = square_subsystem(rng, z);
    res = invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G);
    CHECK_FALSE(res.stable);
    CHECK(sorted_real(res.zeros)[2] == doctest::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("invariant zeros: unit circle counts as unstable, margin tightens") {
    std::mt19937_64 rng(7);
    Vector z(2);
    z << 1.0, 0.1;
    FaultSubsystem s = square_subsystem(rng, z);
    CHECK_FALSE(invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G).stable);
    z << 0.995, 0.1;
    s = square_subsystem(rng, z);
    CHECK(invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G, 0.0).stable);
    CHECK_FALSE(invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G, 0.01).stable);
}

TEST_CASE("invariant zeros: non-square system") {
    std::mt19937_64 rng(8);
    Vector modes(3);
    modes << 0.5, 0.3, -0.2;
    FaultSubsystem s = nonsquare_subsystem(rng, modes);
    InvariantZeros res = invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G);
    REQUIRE(res.zeros.size() == 1);
    CHECK(res.zeros[0].real() == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(std::abs(res.zeros[0].imag()) <= 1e-10);
    CHECK(res.stable);
    CHECK(rosenbrock_rank_drop(s.Phi, s.Etilde, s.C, s.G, res.zeros[0]) <= 1e-9);
    CHECK(rosenbrock_rank_drop(s.Phi, s.Etilde, s.C, s.G, Complex(0.3, 0.0)) > 1e-6);

    modes(0) = 1.2;
    s = nonsquare_subsystem(rng, modes);
    res = invariant_zeros_stable(s.Phi, s.Etilde, s.C, s.G);
    REQUIRE(res.zeros.size() == 1);
    CHECK(res.zeros[0].real() == doctest::Approx(1.2).epsilon(1e-8));
    CHECK_FALSE(res.stable);

    const InverseMatrices inv = open_loop_inverse(s.Phi, s.Etilde, s.C, s.G);
    try {
        stabilizing_gain(inv.Phi1, inv.C2);
        FAIL("expected an error");
    } catch (const NumericalError& e) {
        CHECK(e.stage() == "stabilize");
        CHECK(std::string(e.what()).find("stabilizability condition violated") != std::string::npos);
    }
}

TEST_CASE("stabilizing gain: riccati strategy") {
    std::mt19937_64 rng(9);
    const Matrix Phi1 = test::random_dynamics(rng, 4, 1.3);
    const Matrix C2 = randn(rng, 2, 4);
    const Matrix Kr = stabilizing_gain(Phi1, C2);
    CHECK(linalg::spectral_radius(Phi1 - Kr * C2) < 1.0);
    const DareSolution dual = solve_riccati(Phi1, C2, Matrix::Identity(4, 4), Matrix::Identity(2, 2));
    CHECK(max_abs_diff(Kr, dual.K) == 0.0);
}

TEST_CASE("stabilizing gain: pole placement on the benchmark plant") {
    const PredictorModel pred = to_predictor(registry_plant("sub4").model);
    const InverseMatrices inv = open_loop_inverse(pred);
    CHECK(linalg::spectral_radius(inv.Phi1) > 1.0);
    GainOptions opts;
    opts.strategy = GainStrategy::pole_placement;
    opts.poles = {0.948, 0.532, 0.225, 0.141};
    const Matrix Kr = stabilizing_gain(inv.Phi1, inv.C2, opts);
    const auto placed = sorted_real(linalg::eigenvalues(inv.Phi1 - Kr * inv.C2));
    const std::vector<double> want{0.141, 0.225, 0.532, 0.948};
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(placed[i] - want[i]) <= 1e-8);

    opts.poles = {Complex(0.5, 0.2), Complex(0.5, -0.2), 0.1, -0.1};
    const Matrix Kc = stabilizing_gain(inv.Phi1, inv.C2, opts);
    const auto eig = linalg::eigenvalues(inv.Phi1 - Kc * inv.C2);
    for (const auto& p : opts.poles) {
        double best = 1.0;
        for (const auto& e : eig) best = std::min(best, std::abs(e - p));
        CHECK(best <= 1e-8);
    }
}

TEST_CASE("stabilizing gain: scalar pole placement") {
    GainOptions opts;
    opts.strategy = GainStrategy::pole_placement;
    opts.poles = {0.6};
    const Matrix Kr = stabilizing_gain(Matrix::Constant(1, 1, 1.1), Matrix::Identity(1, 1), opts);
    CHECK(Kr(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("stabilizing gain: invalid requests") {
    const Matrix Phi1 = (Matrix(2, 2) << 1.1, 0.0, 0.0, 0.5).finished();
    const Matrix C2 = (Matrix(1, 2) << 1.0, 1.0).finished();
    GainOptions opts;
    opts.strategy = GainStrategy::pole_placement;
    opts.poles = {0.3};
    CHECK_THROWS_AS(stabilizing_gain(Phi1, C2, opts), ValidationError);
    opts.poles = {Complex(0.3, 0.1), 0.2};
    CHECK_THROWS_AS(stabilizing_gain(Phi1, C2, opts), ValidationError);

    // Stable but unobservable mode: riccati works, pole placement cannot move it.
    const Matrix C2u = (Matrix(1, 2) << 1.0, 0.0).finished();
    CHECK(linalg::spectral_radius(Phi1 - stabilizing_gain(Phi1, C2u) * C2u) < 1.0);
    opts.poles = {0.3, 0.2};
    try {
        stabilizing_gain(Phi1, C2u, opts);
        FAIL("expected an error");
    } catch (const NumericalError& e) {
        const std::string what = e.what();
        CHECK(what.find("observable") != std::string::npos);
        CHECK(what.find("riccati") != std::string::npos);
    }
    CHECK_THROWS_AS(stabilizing_gain(Phi1, Matrix::Ones(1, 3)), ValidationError);
}

TEST_CASE("closed-loop inverse") {
    const PredictorModel pred = stable_inverse_predictor(10);
    const InverseMatrices inv = open_loop_inverse(pred);
    const Matrix Kr = stabilizing_gain(inv.Phi1, inv.C2);
    const ClosedLoopInverse cl = closed_loop_inverse(inv, Kr);
    CHECK(max_abs_diff(cl.Phi2, inv.Phi1 - Kr * inv.C2) == 0.0);
    CHECK(max_abs_diff(cl.B2, inv.B1 + Kr * (Matrix::Identity(2, 2) - inv.D2)) == 0.0);
    CHECK_THROWS_AS(closed_loop_inverse(inv, Matrix::Zero(4, 1)), ValidationError);
}

TEST_CASE("reduced filter equals the cascaded residual generator and inverse") {
    for (std::uint64_t seed = 11; seed < 16; ++seed) {
        const PredictorModel pred = stable_inverse_predictor(seed, 2);
        const InverseMatrices inv = open_loop_inverse(pred);
        const Matrix Kr = stabilizing_gain(inv.Phi1, inv.C2);
        const FaultEstimationFilter filt = reduced_filter(pred, Kr);
        CHECK(filt.order() == 4);
        const MarkovSequence reduced = markov_parameters(filt.as_state_space(), 30);
        const MarkovSequence cascade = markov_parameters(cascade_filter(pred, Kr), 30);
        for (std::size_t i = 0; i < 30; ++i) CHECK(max_abs_diff(reduced[i], cascade[i]) <= 1e-9);
    }
}

TEST_CASE("filter matrices without feedthrough") {
    PredictorModel pred = stable_inverse_predictor(16);
    pred.D.setZero();
    const FilterFactors f = filter_factors(pred);
    const Matrix Kr = Matrix::Zero(4, 2);
    const FaultEstimationFilter filt = assemble_filter(f, Kr);
    CHECK(max_abs_diff(filt.Bu(), pred.Btilde) == 0.0);
    CHECK(filt.Du().cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(filt.Dy(), left_inverse(pred.G)) == 0.0);
}

TEST_CASE("filter reconstructs the fault exactly without noise and forgets its initial state") {
    const PredictorModel pred = stable_inverse_predictor(17);
    const InverseMatrices inv = open_loop_inverse(pred);
    const Matrix Kr = stabilizing_gain(inv.Phi1, inv.C2);
    const FaultEstimationFilter filt = reduced_filter(pred, Kr);
    std::mt19937_64 rng(18);
    const Eigen::Index N = 200;
    const Matrix f = randn(rng, N, 1);
    const Vector x0 = randn(rng, 4, 1);
    const IOData data = test::predictor_run(pred, randn(rng, N, 1), f, Matrix::Zero(N, 2), x0);

    CHECK(max_abs_diff(run_filter(filt, data, x0), f) <= 1e-9);

    // Started from zero, the error is the free response of the filter to the
    // state mismatch.
    const Matrix err = run_filter(filt, data) - f;
    Vector d = -x0;
    for (Eigen::Index k = 0; k < N; ++k) {
        CHECK(std::abs(err(k, 0) - (filt.Cf() * d)(0)) <= 1e-9);
        d = filt.Af() * d;
    }
    CHECK(std::abs(err(N - 1, 0)) <= 1e-6 * std::abs(err(0, 0)) + 1e-12);
}

TEST_CASE("filter step matches run_filter and rejects mismatched data") {
    const PredictorModel pred = stable_inverse_predictor(19);
    const InverseMatrices inv = open_loop_inverse(pred);
    FaultEstimationFilter filt = reduced_filter(pred, stabilizing_gain(inv.Phi1, inv.C2));
    std::mt19937_64 rng(20);
    const IOData data{randn(rng, 50, 1), randn(rng, 50, 2)};
    const Matrix batch = run_filter(filt, data);
    Vector fhat(1);
    for (Eigen::Index k = 0; k < 50; ++k) {
        filt.step(data.u.row(k).transpose(), data.y.row(k).transpose(), fhat);
        CHECK(fhat(0) == batch(k, 0));
    }
    const IOData wrong{randn(rng, 5, 2), randn(rng, 5, 2)};
    CHECK_THROWS_AS(run_filter(filt, wrong), ValidationError);
    CHECK_THROWS_AS(FaultEstimationFilter(Matrix::Zero(2, 2), Matrix::Zero(3, 1), Matrix::Zero(2, 1),
                                          Matrix::Zero(1, 2), Matrix::Zero(1, 1), Matrix::Zero(1, 1)),
                    ValidationError);
}

TEST_CASE("filter bundle round trip") {
    const PredictorModel pred = stable_inverse_predictor(21);
    const InverseMatrices inv = open_loop_inverse(pred);
    const FaultEstimationFilter filt = reduced_filter(pred, stabilizing_gain(inv.Phi1, inv.C2));
    const auto dir = std::filesystem::temp_directory_path() / "dfest_test_bundle";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    FilterManifest manifest;
    manifest.strategy = "pole_placement";
    manifest.poles = {Complex(0.5, 0.25), Complex(0.5, -0.25), 0.1, 0.2};
    write_filter_bundle(dir, filt, manifest);
    FilterManifest back_manifest;
    const FaultEstimationFilter back = read_filter_bundle(dir, &back_manifest);
    CHECK((back.Af().array() == filt.Af().array()).all());
    CHECK((back.Bu().array() == filt.Bu().array()).all());
    CHECK((back.By().array() == filt.By().array()).all());
    CHECK((back.Cf().array() == filt.Cf().array()).all());
    CHECK((back.Du().array() == filt.Du().array()).all());
    CHECK((back.Dy().array() == filt.Dy().array()).all());
    CHECK(back_manifest.strategy == "pole_placement");
    REQUIRE(back_manifest.poles.size() == 4);
    CHECK(back_manifest.poles[0] == Complex(0.5, 0.25));
    CHECK(back_manifest.poles[1] == Complex(0.5, -0.25));

    std::filesystem::remove(dir / "Af.csv");
    CHECK_THROWS_AS(read_filter_bundle(dir), ValidationError);
    std::filesystem::remove_all(dir);
}
