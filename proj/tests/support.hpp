#pragma once

#include "dfest/inverse_filter.hpp"
#include "dfest/linalg.hpp"
#include "dfest/lti.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace dfest::test {

inline Matrix randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal;
    Matrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = normal(rng);
    return M;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Random square matrix rescaled to spectral radius `radius`.
inline Matrix random_dynamics(std::mt19937_64& rng, Eigen::Index n, double radius) {
    Matrix A = randn(rng, n, n);
    const double rho = linalg::spectral_radius(A);
    return rho > 0.0 ? Matrix(A * (radius / rho)) : A;
}

struct RandomModelSpec {
    Eigen::Index states = 4;
    Eigen::Index inputs = 1;
    Eigen::Index outputs = 2;
    std::vector<int> sensors{0};
    double radius_lo = 0.3;
    double radius_hi = 1.1;
    double process = 0.1;
    double measurement = 0.1;
    /// Upper bound on rho(Phi1); infinity accepts any model.
    double max_inverse_radius = std::numeric_limits<double>::infinity();
};

/// Random sensor-fault plant (E = 0, G = I^[sensors]) whose predictor
/// has an inverse filter with spectral radius below `max_inverse_radius`.
inline StateSpaceModel random_plant(std::mt19937_64& rng, const RandomModelSpec& spec) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const Eigen::Index n = spec.states;
        StateSpaceModel m = make_sensor_fault_model(
            random_dynamics(rng, n, uniform(rng, spec.radius_lo, spec.radius_hi)), randn(rng, n, spec.inputs),
            randn(rng, spec.outputs, n), Matrix::Zero(spec.outputs, spec.inputs), Matrix::Identity(n, n),
            spec.process * Matrix::Identity(n, n), spec.measurement * Matrix::Identity(spec.outputs, spec.outputs),
            spec.sensors);
        if (std::isinf(spec.max_inverse_radius)) return m;
        const PredictorModel pred = to_predictor(m);
        if (linalg::spectral_radius(open_loop_inverse(pred).Phi1) < spec.max_inverse_radius) return m;
    }
    throw std::runtime_error("random_plant: no admissible model found");
}

inline PredictorModel random_predictor(std::mt19937_64& rng, const RandomModelSpec& spec) {
    return to_predictor(random_plant(rng, spec));
}

/// Exact noise-free predictor trajectory: xhat(k+1) = Phi xhat + Btilde u + Etilde f + K y with
/// y = C xhat + D u + G f + e.
inline IOData predictor_run(const PredictorModel& pred, const Matrix& u, const Matrix& f, const Matrix& e,
                            const Vector& x0 = Vector()) {
    IOData d;
    d.u = u;
    d.y.resize(u.rows(), pred.outputs());
    Vector x = x0.size() == 0 ? Vector::Zero(pred.states()) : x0;
    for (Eigen::Index k = 0; k < u.rows(); ++k) {
        const Vector uk = u.row(k).transpose(), fk = f.row(k).transpose();
        const Vector y = pred.C * x + pred.D * uk + pred.G * fk + e.row(k).transpose();
        d.y.row(k) = y.transpose();
        x = pred.Phi * x + pred.Btilde * uk + pred.Etilde * fk + pred.K * y;
    }
    return d;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace dfest::test
