#include "dfest/lti.hpp"

#include "csv_util.hpp"
#include "dfest/error.hpp"
#include "dfest/linalg.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace dfest {

namespace {

void require(bool ok, const std::string& stage, const std::string& message) {
    if (!ok) throw ValidationError(stage, message);
}

std::string dims(const Matrix& M) {
    std::ostringstream os;
    os << M.rows() << "x" << M.cols();
    return os.str();
}

void require_shape(const Matrix& M, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (M.rows() != rows || M.cols() != cols) {
        std::ostringstream os;
        os << name << " is " << dims(M) << ", expected " << rows << "x" << cols;
        throw ValidationError("model", os.str());
    }
}

bool is_psd(const Matrix& M) {
    if (M.size() == 0) return true;
    if (!linalg::is_symmetric(M)) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, linalg::max_abs(M));
}

}  // namespace

void StateSpaceModel::validate() const {
    const Eigen::Index n = A.rows();
    require_shape(A, n, n, "A");
    require_shape(B, n, B.cols(), "B");
    require_shape(C, C.rows(), n, "C");
    require_shape(D, C.rows(), B.cols(), "D");
    require_shape(E, n, G.cols(), "E");
    require_shape(G, C.rows(), G.cols(), "G");
    require_shape(F, n, F.cols(), "F");
    require_shape(Q, F.cols(), F.cols(), "Q");
    require_shape(R, C.rows(), C.rows(), "R");
    require(is_psd(Q), "model", "Q must be symmetric positive semidefinite");
    require(is_psd(R), "model", "R must be symmetric positive semidefinite");
}

Matrix sensor_fault_directions(Eigen::Index outputs, const std::vector<int>& sensors) {
    Matrix G = Matrix::Zero(outputs, static_cast<Eigen::Index>(sensors.size()));
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        const int j = sensors[i];
        if (j < 0 || j >= outputs) {
            std::ostringstream os;
            os << "sensor index " << j << " outside [0, " << outputs << ")";
            throw ValidationError("model", os.str());
        }
        for (std::size_t k = 0; k < i; ++k)
            require(sensors[k] != j, "model", "duplicate faulty sensor index");
        G(j, static_cast<Eigen::Index>(i)) = 1.0;
    }
    return G;
}

StateSpaceModel make_sensor_fault_model(Matrix A, Matrix B, Matrix C, Matrix D, Matrix F, Matrix Q, Matrix R,
                                        const std::vector<int>& sensors) {
    StateSpaceModel m;
    m.G = sensor_fault_directions(C.rows(), sensors);
    m.E = Matrix::Zero(A.rows(), m.G.cols());
    m.A = std::move(A);
    m.B = std::move(B);
    m.C = std::move(C);
    m.D = D.size() == 0 ? Matrix::Zero(m.C.rows(), m.B.cols()) : std::move(D);
    m.F = std::move(F);
    m.Q = std::move(Q);
    m.R = std::move(R);
    m.validate();
    return m;
}

MarkovSequence::MarkovSequence(std::vector<Matrix> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw ValidationError("markov", "Markov sequence needs at least one block");
    rows_ = blocks_.front().rows();
    cols_ = blocks_.front().cols();
    for (const auto& b : blocks_)
        require(b.rows() == rows_ && b.cols() == cols_, "markov", "Markov blocks must share dimensions");
}

MarkovSequence MarkovSequence::head(std::size_t length) const {
    if (length > blocks_.size()) {
        std::ostringstream os;
        os << "requested " << length << " Markov blocks but only " << blocks_.size() << " available";
        throw ValidationError("markov", os.str());
    }
    return MarkovSequence(std::vector<Matrix>(blocks_.begin(), blocks_.begin() + static_cast<long>(length)));
}

void IOData::validate() const {
    require(u.rows() == y.rows(), "data", "u and y must have the same number of samples");
    require(y.rows() >= 1, "data", "data record is empty");
}

DareSolution solve_riccati(const Matrix& A, const Matrix& C, const Matrix& W, const Matrix& V,
                           const DareOptions& options) {
    const Eigen::Index n = A.rows();
    const Eigen::Index p = C.rows();
    require(A.cols() == n && C.cols() == n && W.rows() == n && W.cols() == n && V.rows() == p && V.cols() == p,
            "dare", "inconsistent Riccati dimensions");
    require(linalg::is_symmetric(V), "dare", "measurement covariance must be symmetric");
    if (p > 0) {
        Eigen::LLT<Matrix> llt(V);
        require(llt.info() == Eigen::Success, "dare", "measurement covariance must be positive definite");
    }

    auto update = [&](const Matrix& P, Matrix& K, Matrix& S) {
        S = C * P * C.transpose() + V;
        Eigen::LDLT<Matrix> ldlt(S);
        K = ldlt.solve(C * P * A.transpose()).transpose();
        Matrix next = A * P * A.transpose() + W - K * S * K.transpose();
        return Matrix(0.5 * (next + next.transpose()));
    };

    auto iterate = [&](Matrix P, DareSolution& sol) -> bool {
        Matrix K, S;
        for (long it = 1; it <= options.max_iter; ++it) {
            Matrix next = update(P, K, S);
            if (!next.allFinite()) return false;
            const double diff = (next - P).norm();
            const double scale = next.norm();
            P = std::move(next);
            if (diff == 0.0 || diff <= options.tol * scale) {
                sol.iterations = it;
                break;
            }
            if (it == options.max_iter) return false;
        }
        Matrix again = update(P, K, S);
        const double scale = std::max(P.norm(), std::numeric_limits<double>::min());
        sol.residual = (again - P).norm() / scale;
        if ((again - P).norm() == 0.0) sol.residual = 0.0;
        sol.P = std::move(P);
        sol.K = std::move(K);
        sol.SigmaE = std::move(S);
        return true;
    };

    DareSolution sol;
    const bool ok = iterate(Matrix::Zero(n, n), sol);
    if (ok && linalg::spectral_radius(A - sol.K * C) < 1.0) return sol;

    // A zero start stays on the non-stabilizing branch when unstable modes are
    // not excited by W; a positive definite start reaches the stabilizing one.
    const double start = std::max(1.0, W.norm());
    if (!iterate(start * Matrix::Identity(n, n), sol))
        throw NumericalError("dare", "Riccati divergence: no convergence within max_iter");
    if (linalg::spectral_radius(A - sol.K * C) >= 1.0)
        throw NumericalError("dare", "Riccati divergence: limit is not stabilizing (detectability violated?)");
    return sol;
}

DareSolution solve_dare(const StateSpaceModel& model, const DareOptions& options) {
    model.validate();
    const Matrix W = model.F * model.Q * model.F.transpose();
    return solve_riccati(model.A, model.C, W, model.R, options);
}

PredictorModel to_predictor(const StateSpaceModel& model, const DareOptions& options) {
    const DareSolution sol = solve_dare(model, options);
    PredictorModel pred;
    pred.K = sol.K;
    pred.SigmaE = sol.SigmaE;
    pred.C = model.C;
    pred.D = model.D;
    pred.G = model.G;
    pred.Phi = model.A - sol.K * model.C;
    pred.Btilde = model.B - sol.K * model.D;
    pred.Etilde = model.E - sol.K * model.G;
    return pred;
}

IOData simulate(const StateSpaceModel& model, const Matrix& u, const Matrix& f, std::uint64_t seed,
                const Vector& x0) {
    model.validate();
    const Eigen::Index N = u.rows();
    require(u.cols() == model.inputs(), "simulate", "u has " + dims(u) + " but the model has " +
                                                        std::to_string(model.inputs()) + " inputs");
    require(f.rows() == N && f.cols() == model.faults(), "simulate",
            "f must be " + std::to_string(N) + "x" + std::to_string(model.faults()) + ", got " + dims(f));
    require(x0.size() == 0 || x0.size() == model.states(), "simulate", "x0 has the wrong dimension");

    const Matrix Lw = linalg::psd_factor(model.Q);
    const Matrix Lv = linalg::psd_factor(model.R);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    auto draw = [&](Eigen::Index size) {
        Vector v(size);
        for (Eigen::Index i = 0; i < size; ++i) v(i) = normal(rng);
        return v;
    };

    IOData out;
    out.u = u;
    out.y.resize(N, model.outputs());
    Vector x = x0.size() == 0 ? Vector::Zero(model.states()) : x0;
    for (Eigen::Index k = 0; k < N; ++k) {
        const Vector v = Lv * draw(model.outputs());
        const Vector w = Lw * draw(model.noises());
        const Vector uk = u.row(k).transpose();
        const Vector fk = f.row(k).transpose();
        out.y.row(k) = (model.C * x + model.D * uk + model.G * fk + v).transpose();
        x = model.A * x + model.B * uk + model.E * fk + model.F * w;
    }
    return out;
}

MarkovSequence markov_parameters(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& D,
                                 std::size_t length) {
    require(length >= 1, "markov", "Markov length must be at least 1");
    std::vector<Matrix> blocks;
    blocks.reserve(length);
    blocks.push_back(D);
    Matrix AkB = B;
    for (std::size_t i = 1; i < length; ++i) {
        blocks.push_back(C * AkB);
        AkB = A * AkB;
    }
    return MarkovSequence(std::move(blocks));
}

MarkovSequence markov_parameters(const StateSpace& sys, std::size_t length) {
    return markov_parameters(sys.A, sys.B, sys.C, sys.D, length);
}

MarkovSequence markov_parameters(const PredictorModel& pred, Channel channel, std::size_t length) {
    switch (channel) {
    case Channel::u:
        return markov_parameters(pred.Phi, pred.Btilde, pred.C, pred.D, length);
    case Channel::y:
        return markov_parameters(pred.Phi, pred.K, pred.C, Matrix::Zero(pred.outputs(), pred.outputs()), length);
    case Channel::f:
        return markov_parameters(pred.Phi, pred.Etilde, pred.C, pred.G, length);
    }
    throw ValidationError("markov", "unknown channel");
}

Matrix block_toeplitz(const MarkovSequence& seq) {
    const auto L = static_cast<Eigen::Index>(seq.size());
    const Eigen::Index p = seq.rows();
    const Eigen::Index q = seq.cols();
    Matrix T = Matrix::Zero(L * p, L * q);
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) T.block(i * p, j * q, p, q) = seq[static_cast<std::size_t>(i - j)];
    return T;
}

Matrix block_toeplitz(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& D, std::size_t length) {
    const auto L = static_cast<Eigen::Index>(length);
    const Eigen::Index p = C.rows();
    const Eigen::Index q = B.cols();
    Matrix T = Matrix::Zero(L * p, L * q);
    for (Eigen::Index col = 0; col < L; ++col) {
        T.block(col * p, col * q, p, q) = D;
        Matrix propagated = B;
        for (Eigen::Index row = col + 1; row < L; ++row) {
            T.block(row * p, col * q, p, q) = C * propagated;
            propagated = A * propagated;
        }
    }
    return T;
}

Matrix extended_observability(const Matrix& A, const Matrix& C, std::size_t length) {
    const auto L = static_cast<Eigen::Index>(length);
    Matrix O(L * C.rows(), A.cols());
    Matrix CAk = C;
    for (Eigen::Index i = 0; i < L; ++i) {
        O.middleRows(i * C.rows(), C.rows()) = CAk;
        CAk = CAk * A;
    }
    return O;
}

Matrix block_hankel(const MarkovSequence& seq, std::size_t block_rows, std::size_t block_cols) {
    require(block_rows >= 1 && block_cols >= 1, "hankel", "Hankel needs at least one block row and column");
    if (seq.size() < block_rows + block_cols) {
        std::ostringstream os;
        os << "Hankel with " << block_rows << "x" << block_cols << " blocks needs W_1..W_"
           << block_rows + block_cols - 1 << " but the sequence ends at W_" << seq.size() - 1;
        throw ValidationError("hankel", os.str());
    }
    const Eigen::Index p = seq.rows();
    const Eigen::Index q = seq.cols();
    Matrix H(static_cast<Eigen::Index>(block_rows) * p, static_cast<Eigen::Index>(block_cols) * q);
    for (std::size_t i = 0; i < block_rows; ++i)
        for (std::size_t j = 0; j < block_cols; ++j)
            H.block(static_cast<Eigen::Index>(i) * p, static_cast<Eigen::Index>(j) * q, p, q) = seq[i + j + 1];
    return H;
}

void write_iodata_csv(std::ostream& out, const IOData& data) {
    data.validate();
    csv::set_precision(out);
    out << 'k';
    for (Eigen::Index i = 0; i < data.inputs(); ++i) out << ",u" << i + 1;
    for (Eigen::Index i = 0; i < data.outputs(); ++i) out << ",y" << i + 1;
    out << '\n';
    for (Eigen::Index k = 0; k < data.sample_count(); ++k) {
        out << k;
        for (Eigen::Index i = 0; i < data.inputs(); ++i) out << ',' << data.u(k, i);
        for (Eigen::Index i = 0; i < data.outputs(); ++i) out << ',' << data.y(k, i);
        out << '\n';
    }
}

void write_iodata_csv(const std::filesystem::path& path, const IOData& data) {
    std::ofstream out(path);
    if (!out) throw ValidationError("io", "cannot write " + path.string());
    write_iodata_csv(out, data);
}

IOData read_iodata_csv(std::istream& in) {
    std::string line;
    if (!csv::next_line(in, line)) throw ValidationError("io", "empty data file");
    const auto header = csv::split(line);
    require(!header.empty() && header[0] == "k", "io", "data header must start with 'k'");
    Eigen::Index nu = 0, ny = 0;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (!header[i].empty() && header[i][0] == 'u') {
            require(ny == 0, "io", "input columns must precede output columns");
            ++nu;
        } else if (!header[i].empty() && header[i][0] == 'y') {
            ++ny;
        } else {
            throw ValidationError("io", "unexpected column '" + header[i] + "'");
        }
    }
    std::vector<std::vector<double>> rows;
    while (csv::next_line(in, line)) {
        const auto cells = csv::split(line);
        require(cells.size() == header.size(), "io", "row " + std::to_string(rows.size()) + " has wrong width");
        std::vector<double> values;
        for (std::size_t i = 1; i < cells.size(); ++i) values.push_back(csv::to_double(cells[i], "data row"));
        rows.push_back(std::move(values));
    }
    IOData data;
    const auto N = static_cast<Eigen::Index>(rows.size());
    data.u.resize(N, nu);
    data.y.resize(N, ny);
    for (Eigen::Index k = 0; k < N; ++k) {
        for (Eigen::Index i = 0; i < nu; ++i) data.u(k, i) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        for (Eigen::Index i = 0; i < ny; ++i)
            data.y(k, i) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(nu + i)];
    }
    data.validate();
    return data;
}

IOData read_iodata_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("io", "cannot open " + path.string());
    return read_iodata_csv(in);
}

}  // namespace dfest
