#include "dfest/mhe.hpp"

#include "dfest/error.hpp"
#include "dfest/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dfest {

MheProblem build_mhe(const Matrix& observability, const MarkovSequence& hf, std::size_t window) {
    if (window < 1) throw ValidationError("mhe", "window length must be at least 1");
    if (hf.size() < window) throw ValidationError("mhe", "H^f sequence shorter than the window");
    const Eigen::Index ny = hf.rows();
    const Eigen::Index nf = hf.cols();
    const auto L = static_cast<Eigen::Index>(window);
    if (observability.rows() != L * ny) throw ValidationError("mhe", "observability matrix must have L n_y rows");

    MheProblem pb;
    pb.window = window;
    pb.faults = nf;
    pb.outputs = ny;
    pb.O = observability;
    pb.Tf = block_toeplitz(hf.head(window));
    pb.Psi.resize(L * ny, pb.O.cols() + L * nf);
    pb.Psi << pb.O, pb.Tf;

    const Matrix gram = pb.Tf.transpose() * pb.Tf;
    Eigen::LDLT<Matrix> ldlt(gram);
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * std::max(d.maxCoeff(), 1e-300))
        throw NumericalError("mhe", "window inversion rank: T_L^f does not have full column rank");
    pb.Gp = ldlt.solve(pb.Tf.transpose());

    const Matrix GpO = pb.Gp * pb.O;
    pb.Delta = pb.O.transpose() * pb.O - pb.O.transpose() * pb.Tf * GpO;
    pb.Delta = 0.5 * (pb.Delta + pb.Delta.transpose()).eval();
    pb.Mp = -GpO * linalg::pinv(pb.Delta, 1e-10) * pb.O.transpose();
    const Matrix complement = Matrix::Identity(L * ny, L * ny) - pb.Tf * pb.Gp;
    pb.gain = pb.Gp + pb.Mp * complement;
    pb.last_rows = pb.gain.bottomRows(nf);
    return pb;
}

MheProblem build_mhe(const PredictorModel& pred, std::size_t window) {
    return build_mhe(extended_observability(pred.Phi, pred.C, window),
                     markov_parameters(pred, Channel::f, window), window);
}

Vector mhe_estimate(const MheProblem& problem, const Vector& r_window) {
    if (r_window.size() != problem.gain.cols()) throw ValidationError("mhe", "residual window has the wrong length");
    return problem.gain * r_window;
}

void mhe_last_block(const MheProblem& problem, const RowMajorMatrix& residuals, Eigen::Index k,
                    Eigen::Ref<Vector> out) {
    const auto L = static_cast<Eigen::Index>(problem.window);
    const Eigen::Map<const Vector> window(residuals.data() + (k - L + 1) * problem.outputs, L * problem.outputs);
    out.noalias() = problem.last_rows * window;
}

MheEstimates run_mhe(const MheProblem& problem, const Matrix& residuals) {
    if (residuals.cols() != problem.outputs) throw ValidationError("mhe", "residual width does not match n_y");
    const Eigen::Index N = residuals.rows();
    const auto L = static_cast<Eigen::Index>(problem.window);
    const RowMajorMatrix rows = residuals;

    MheEstimates out;
    out.estimates = Matrix::Constant(N, problem.faults, std::numeric_limits<double>::quiet_NaN());
    out.valid.assign(static_cast<std::size_t>(N), false);
    Eigen::Index last_nan = -1;
    Vector block(problem.faults);
    for (Eigen::Index k = 0; k < N; ++k) {
        if (!rows.row(k).allFinite()) last_nan = k;
        if (k < L - 1 || last_nan > k - L) continue;
        mhe_last_block(problem, rows, k, block);
        out.estimates.row(k) = block.transpose();
        out.valid[static_cast<std::size_t>(k)] = true;
    }
    return out;
}

}  // namespace dfest
