#pragma once

#include "dfest/lti.hpp"

#include <vector>

namespace dfest {

/// Windowed least-squares fault estimation over stacked residuals,
///   min || r_{k,L} - [O_L, T_L^f] [xtilde(k0); f_{k,L}] ||^2,
/// in the rewritten form  f' = [G' + M' (I - T_L^f G')] r_{k,L}.
struct MheProblem {
    Matrix O;      // extended observability O_L(Phi, C)
    Matrix Tf;     // T_L^f
    Matrix Psi;    // [O, Tf]
    Matrix Gp;     // (Tf^T Tf)^-1 Tf^T
    Matrix Mp;     // -Gp O Delta^+ O^T
    Matrix Delta;  // O^T O - O^T Tf Gp O
    Matrix gain;   // Gp + Mp (I - Tf Gp), L n_f x L n_y
    RowMajorMatrix last_rows;  // last n_f rows of gain
    std::size_t window = 0;
    Eigen::Index faults = 0;
    Eigen::Index outputs = 0;
};

MheProblem build_mhe(const Matrix& observability, const MarkovSequence& hf, std::size_t window);
MheProblem build_mhe(const PredictorModel& pred, std::size_t window);

/// Stacked estimate over the window; `r_window` stacks r(k0) .. r(k).
Vector mhe_estimate(const MheProblem& problem, const Vector& r_window);

struct MheEstimates {
    Matrix estimates;         // N x n_f, NaN during warm-up
    std::vector<bool> valid;  // false for warm-up samples and NaN windows
};

/// Slides the window over the residual series (rows = samples) and keeps the
/// last block of each window estimate. The first L-1 samples, and any window
/// containing NaN residuals, are flagged invalid.
MheEstimates run_mhe(const MheProblem& problem, const Matrix& residuals);

/// Last-block estimate for the window ending at row `k` (no checks).
void mhe_last_block(const MheProblem& problem, const RowMajorMatrix& residuals, Eigen::Index k,
                    Eigen::Ref<Vector> out);

}  // namespace dfest
