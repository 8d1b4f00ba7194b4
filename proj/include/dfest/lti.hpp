#pragma once

#include "dfest/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace dfest {

/// Physical plant
///   x(k+1) = A x + B u + E f + F w,   y(k) = C x + D u + G f + v
/// with w ~ N(0, Q), v ~ N(0, R).
struct StateSpaceModel {
    Matrix A, B, C, D;
    Matrix E, F, G;
    Matrix Q, R;

    Eigen::Index states() const { return A.rows(); }
    Eigen::Index inputs() const { return B.cols(); }
    Eigen::Index outputs() const { return C.rows(); }
    Eigen::Index faults() const { return G.cols(); }
    Eigen::Index noises() const { return F.cols(); }

    /// Throws ValidationError on inconsistent dimensions or on a Q that is not
    /// symmetric PSD. R is only required symmetric PSD here; solve_dare
    /// additionally demands R > 0.
    void validate() const;
};

/// Selection matrix whose columns are the identity columns `sensors`
/// (0-based), i.e. the sensor-fault output direction.
Matrix sensor_fault_directions(Eigen::Index outputs, const std::vector<int>& sensors);

/// Builds a plant with sensor faults on `sensors`: E = 0, G = I^[sensors].
StateSpaceModel make_sensor_fault_model(Matrix A, Matrix B, Matrix C, Matrix D, Matrix F, Matrix Q,
                                        Matrix R, const std::vector<int>& sensors);

/// One-step-ahead predictor
///   x(k+1) = Phi x + Btilde u + Etilde f + K y,   y = C x + D u + G f + e.
struct PredictorModel {
    Matrix Phi, Btilde, K, C, D, Etilde, G, SigmaE;

    Eigen::Index states() const { return Phi.rows(); }
    Eigen::Index inputs() const { return Btilde.cols(); }
    Eigen::Index outputs() const { return C.rows(); }
    Eigen::Index faults() const { return G.cols(); }
};

/// Ordered list of equally sized blocks H_0 .. H_{L-1}.
class MarkovSequence {
public:
    MarkovSequence() = default;
    explicit MarkovSequence(std::vector<Matrix> blocks);

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    std::size_t size() const { return blocks_.size(); }
    bool empty() const { return blocks_.empty(); }

    const Matrix& operator[](std::size_t i) const { return blocks_[i]; }
    const std::vector<Matrix>& blocks() const { return blocks_; }

    /// First `length` blocks. Throws ValidationError if too short.
    MarkovSequence head(std::size_t length) const;

private:
    std::vector<Matrix> blocks_;
    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
};

/// Sampled input/output record; row k of `u`/`y` is sample k.
struct IOData {
    Matrix u;  // N x n_u
    Matrix y;  // N x n_y

    Eigen::Index sample_count() const { return y.rows(); }
    Eigen::Index inputs() const { return u.cols(); }
    Eigen::Index outputs() const { return y.cols(); }
    void validate() const;
};

struct DareOptions {
    double tol = 1e-12;
    long max_iter = 100000;
};

struct DareSolution {
    Matrix P;       // stabilizing solution
    Matrix K;       // A P C^T (C P C^T + V)^-1
    Matrix SigmaE;  // C P C^T + V
    long iterations = 0;
    double residual = 0.0;  // relative fixed-point residual
};

/// Fixed-point iteration of the filter Riccati recursion
///   P <- A P A^T + W - A P C^T (C P C^T + V)^-1 C P A^T
/// to its stabilizing limit. Used both for the Kalman predictor and, through
/// duality, for output-injection gains.
DareSolution solve_riccati(const Matrix& A, const Matrix& C, const Matrix& W, const Matrix& V,
                           const DareOptions& options = {});

/// Steady-state Kalman predictor gain of the plant.
DareSolution solve_dare(const StateSpaceModel& model, const DareOptions& options = {});

PredictorModel to_predictor(const StateSpaceModel& model, const DareOptions& options = {});

/// Forward simulation of the plant with Gaussian process/measurement noise.
/// `u` is N x n_u and `f` is N x n_f. Identical arguments give bit-identical
/// output.
IOData simulate(const StateSpaceModel& model, const Matrix& u, const Matrix& f, std::uint64_t seed,
                const Vector& x0 = Vector());

enum class Channel { u, y, f };

/// {D, C Btilde, C Phi Btilde, ...}, {0, C K, C Phi K, ...} or
/// {G, C Etilde, C Phi Etilde, ...} depending on `channel`.
MarkovSequence markov_parameters(const PredictorModel& pred, Channel channel, std::size_t length);

/// {D, C B, C A B, ..., C A^{L-2} B}.
MarkovSequence markov_parameters(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& D,
                                 std::size_t length);
MarkovSequence markov_parameters(const StateSpace& sys, std::size_t length);

/// Lower-triangular block Toeplitz matrix with H_0 on the diagonal.
Matrix block_toeplitz(const MarkovSequence& seq);

/// Same matrix built directly from a state-space quadruple with L block rows.
Matrix block_toeplitz(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& D,
                      std::size_t length);

/// [C; C A; ...; C A^{L-1}].
Matrix extended_observability(const Matrix& A, const Matrix& C, std::size_t length);

/// l x m block Hankel matrix whose (i, j) block (1-based) is W_{i+j-1}; W_0
/// never appears.
Matrix block_hankel(const MarkovSequence& seq, std::size_t block_rows, std::size_t block_cols);

/// CSV with header `k,u1..u_nu,y1..y_ny`, 17 significant digits.
void write_iodata_csv(std::ostream& out, const IOData& data);
void write_iodata_csv(const std::filesystem::path& path, const IOData& data);
IOData read_iodata_csv(std::istream& in);
IOData read_iodata_csv(const std::filesystem::path& path);

}  // namespace dfest
