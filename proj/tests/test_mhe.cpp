#include <doctest.h>

#include "dfest/error.hpp"
#include "dfest/mhe.hpp"
#include "support.hpp"

#include <cmath>
#include <limits>

using namespace dfest;
using dfest::test::max_abs_diff;
using dfest::test::randn;

namespace {

PredictorModel sample_predictor(std::uint64_t seed, Eigen::Index ny = 3, std::vector<int> sensors = {0}) {
    std::mt19937_64 rng(seed);
    test::RandomModelSpec spec;
    spec.states = 3;
    spec.outputs = ny;
    spec.sensors = std::move(sensors);
    spec.radius_hi = 0.9;
    return test::random_predictor(rng, spec);
}

// Residual of a predictor started from zero when the true predictor state
// starts at x0: r = O x0 + T^f f over any window.
Matrix faulty_residuals(const PredictorModel& pred, const Matrix& f, const Vector& x0) {
    const Eigen::Index N = f.rows();
    std::mt19937_64 rng(123);
    const Matrix u = randn(rng, N, pred.inputs());
    const IOData data = test::predictor_run(pred, u, f, Matrix::Zero(N, pred.outputs()), x0);
    Matrix z(N, pred.inputs() + pred.outputs());
    z << data.u, data.y;
    return simulate_system(residual_generator(pred), z);
}

}  // namespace

TEST_CASE("MHE matrices: fault inverse and projection structure") {
    const PredictorModel pred = sample_predictor(1);
    const MheProblem mhe = build_mhe(pred, 8);
    CHECK(mhe.gain.rows() == 8);
    CHECK(mhe.gain.cols() == 24);
    CHECK(max_abs_diff(mhe.Gp * mhe.Tf, Matrix::Identity(8, 8)) <= 1e-10);
    CHECK(max_abs_diff(mhe.Delta, mhe.Delta.transpose()) <= 1e-12);
    CHECK(linalg::numerical_rank(mhe.Delta) == 3);
    CHECK(max_abs_diff(mhe.gain * mhe.Tf, Matrix::Identity(8, 8)) <= 1e-9);
    CHECK(mhe.gain.cwiseAbs().maxCoeff() > 0.0);
    CHECK(max_abs_diff(mhe.gain * mhe.O, Matrix::Zero(8, 3)) <= 1e-9);
    CHECK(max_abs_diff(mhe.last_rows, mhe.gain.bottomRows(1)) == 0.0);
}

TEST_CASE("MHE gain equals the fault rows of the full least-squares pseudo-inverse") {
    for (std::uint64_t seed = 2; seed < 6; ++seed) {
        const PredictorModel pred = sample_predictor(seed);
        const MheProblem mhe = build_mhe(pred, 10);
        REQUIRE(linalg::numerical_rank(mhe.Psi) == mhe.Psi.cols());
        const Matrix oracle = linalg::pinv(mhe.Psi).bottomRows(10);
        CHECK(max_abs_diff(mhe.gain, oracle) <= 1e-8 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("MHE is exact on noise-free residuals with unknown initial state") {
    const PredictorModel pred = sample_predictor(6);
    const std::size_t L = 100;
    const Eigen::Index N = 300;
    Matrix f(N, 1);
    for (Eigen::Index k = 0; k < N; ++k) f(k, 0) = std::sin(0.1 * M_PI * static_cast<double>(k)) + (k >= 150 ? 1.0 : 0.0);
    std::mt19937_64 rng(7);
    const Matrix r = faulty_residuals(pred, f, randn(rng, 3, 1));

    const MheProblem mhe = build_mhe(pred, L);
    const Eigen::Index k0 = 120;
    Vector window(static_cast<Eigen::Index>(L) * 3);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(L); ++i) window.segment(3 * i, 3) = r.row(k0 + i).transpose();
    const Vector est = mhe_estimate(mhe, window);
    CHECK(max_abs_diff(est, f.middleRows(k0, static_cast<Eigen::Index>(L))) <= 1e-6);

    CHECK(mhe_estimate(mhe, Vector::Zero(window.size())).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(mhe_estimate(mhe, Vector::Zero(5)), ValidationError);
}

TEST_CASE("run_mhe: warm-up, NaN windows and agreement with the batch estimate") {
    const PredictorModel pred = sample_predictor(8);
    const std::size_t L = 6;
    const MheProblem mhe = build_mhe(pred, L);
    std::mt19937_64 rng(9);
    Matrix r = randn(rng, 40, 3);
    r(30, 1) = std::numeric_limits<double>::quiet_NaN();
    const MheEstimates out = run_mhe(mhe, r);
    for (Eigen::Index k = 0; k < 40; ++k) {
        const bool expect_valid = k >= 5 && !(k >= 30 && k < 36);
        CHECK(out.valid[static_cast<std::size_t>(k)] == expect_valid);
        if (!expect_valid) {
            CHECK(std::isnan(out.estimates(k, 0)));
            continue;
        }
        Vector window(18);
        for (Eigen::Index i = 0; i < 6; ++i) window.segment(3 * i, 3) = r.row(k - 5 + i).transpose();
        CHECK(std::abs(out.estimates(k, 0) - mhe_estimate(mhe, window)(5)) <= 1e-12);
    }
    CHECK_THROWS_AS(run_mhe(mhe, Matrix::Zero(10, 2)), ValidationError);
}

TEST_CASE("MHE input validation") {
    const PredictorModel pred = sample_predictor(10);
    const MarkovSequence hf = markov_parameters(pred, Channel::f, 5);
    const Matrix O = extended_observability(pred.Phi, pred.C, 5);
    CHECK_THROWS_AS(build_mhe(O, hf, 6), ValidationError);
    CHECK_THROWS_AS(build_mhe(O, hf, 0), ValidationError);
    CHECK_THROWS_AS(build_mhe(O.topRows(6), hf, 5), ValidationError);
    const MarkovSequence zero(std::vector<Matrix>(5, Matrix::Zero(3, 1)));
    try {
        build_mhe(O, zero, 5);
        FAIL("expected an error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("window inversion rank") != std::string::npos);
    }
}
