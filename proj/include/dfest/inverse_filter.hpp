#pragma once

#include "dfest/lti.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dfest {

/// Open-loop left inverse of the residual dynamics together with the
/// residual-reconstruction matrices.
struct InverseMatrices {
    Matrix Phi1;  // Phi - Etilde G^- C
    Matrix B1;    // Etilde G^-
    Matrix C1;    // -G^- C
    Matrix D1;    // G^-
    Matrix C2;    // (I - G G^-) C
    Matrix D2;    // G G^-
};

struct ClosedLoopInverse {
    Matrix Phi2;  // Phi1 - Kr C2
    Matrix B2;    // B1 + Kr (I - D2)
    Matrix C1;
    Matrix D1;
};

/// Matrices of the order-reduced filter that do not depend on Kr.
struct FilterFactors {
    Matrix Phi1, Bf, Kf, C1, C2, Df1, D1, Df2, Gf2;
};

/// Reduced fault estimation filter
///   x(k+1) = Af x + Bu u + By y,   fhat(k) = Cf x + Du u + Dy y.
class FaultEstimationFilter {
public:
    FaultEstimationFilter() = default;
    FaultEstimationFilter(Matrix Af, Matrix Bu, Matrix By, Matrix Cf, Matrix Du, Matrix Dy);

    const Matrix& Af() const { return Af_; }
    const Matrix& Bu() const { return Bu_; }
    const Matrix& By() const { return By_; }
    const Matrix& Cf() const { return Cf_; }
    const Matrix& Du() const { return Du_; }
    const Matrix& Dy() const { return Dy_; }

    Eigen::Index order() const { return Af_.rows(); }
    Eigen::Index inputs() const { return Bu_.cols(); }
    Eigen::Index outputs() const { return By_.cols(); }
    Eigen::Index faults() const { return Cf_.rows(); }

    const Vector& state() const { return x_; }
    void reset(const Vector& x0 = Vector());

    /// One recursion step; no heap allocation.
    void step(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> fhat);

    /// (u, y) -> fhat system with stacked input z = [u; y].
    StateSpace as_state_space() const;

    double spectral_radius() const;

private:
    Matrix Af_, Bu_, By_, Cf_, Du_, Dy_;
    Vector x_, next_;
};

/// (G^T G)^-1 G^T; throws NumericalError("fault direction rank") when G does
/// not have full column rank.
Matrix left_inverse(const Matrix& G, double rel_tol = 1e-12);

/// Observer driven by z = [u; y] whose output is the one-step residual
/// r = y - C xhat - D u: (Phi, [Btilde K], -C, [-D I]).
StateSpace residual_generator(const PredictorModel& pred);

InverseMatrices open_loop_inverse(const PredictorModel& pred);
InverseMatrices open_loop_inverse(const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G);

struct InvariantZeros {
    bool stable = false;
    std::vector<Complex> zeros;  // finite invariant zeros
    /// Rank-decision quality: singular value gap of the staircase (non-square)
    /// or smallest |beta| / max(|alpha|, |beta|) of the accepted finite
    /// generalized eigenvalues (square). Small values mean ill-conditioning.
    double condition = 0.0;
    std::optional<std::string> warning;
};

/// Invariant zeros of the fault subsystem (Phi, Etilde, C, G). Stable iff
/// every finite zero satisfies |lambda| < 1 - margin; a zero on the unit
/// circle is unstable.
InvariantZeros invariant_zeros_stable(const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G,
                                      double margin = 1e-6);

/// Smallest singular value of the Rosenbrock pencil [[Phi - lambda I, Etilde], [C, G]]
/// relative to its largest; zero at an invariant zero.
double rosenbrock_rank_drop(const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G,
                            Complex lambda);

enum class GainStrategy { riccati, pole_placement };

struct GainOptions {
    GainStrategy strategy = GainStrategy::riccati;
    std::vector<Complex> poles;
    DareOptions dare;
};

/// Output-injection gain Kr with rho(Phi1 - Kr C2) < 1.
Matrix stabilizing_gain(const Matrix& Phi1, const Matrix& C2, const GainOptions& options = {});

ClosedLoopInverse closed_loop_inverse(const InverseMatrices& inv, const Matrix& Kr);

FilterFactors filter_factors(const PredictorModel& pred);

/// Assembles the reduced filter from its Kr-independent factors.
FaultEstimationFilter assemble_filter(const FilterFactors& factors, const Matrix& Kr);

FaultEstimationFilter reduced_filter(const PredictorModel& pred, const Matrix& Kr);

/// Residual generator cascaded with the closed-loop inverse; state
/// [x_r; xhat], input z = [u; y], output fhat.
StateSpace cascade_filter(const PredictorModel& pred, const Matrix& Kr);

/// Runs the filter over the record from x_f0 (zero when empty); row k of the
/// result is fhat(k).
Matrix run_filter(const FaultEstimationFilter& filter, const IOData& data, const Vector& x_f0 = Vector());

/// Response of a state-space system to the input rows of `inputs`.
Matrix simulate_system(const StateSpace& sys, const Matrix& inputs, const Vector& x0 = Vector());

/// Filter matrices as CSV files plus `manifest.csv` (order, n_u, n_y, n_f,
/// strategy tag, poles).
struct FilterManifest {
    std::string strategy = "riccati";
    std::vector<Complex> poles;
};
void write_filter_bundle(const std::filesystem::path& dir, const FaultEstimationFilter& filter,
                         const FilterManifest& manifest = {});
FaultEstimationFilter read_filter_bundle(const std::filesystem::path& dir, FilterManifest* manifest = nullptr);

/// Dense matrix CSV (17 significant digits, no header).
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace dfest
