#pragma once

#include "dfest/lti.hpp"

#include <filesystem>
#include <iosfwd>

namespace dfest {

/// Predictor Markov parameter row identified from data.
///
/// `hu` holds H_0^u .. H_p^u and `hy` holds H_0^y .. H_p^y, where H_0^y is the
/// structural zero block; both therefore have p + 1 entries and are indexed by
/// lag.
struct IdentifiedXi {
    MarkovSequence hu;
    MarkovSequence hy;
    std::size_t past_horizon = 0;
    Matrix residual_variance;  // estimate of the innovation covariance

    Eigen::Index inputs() const { return hu.cols(); }
    Eigen::Index outputs() const { return hy.rows(); }

    /// Plant-predictor sequence {[H_i^u, H_i^y]}, i = 0..p.
    MarkovSequence joint() const;
};

struct IdentifyOptions {
    double ridge = 0.0;
    /// When false, H_0^u is fixed to zero and u(k) leaves the regressor. Use it
    /// for plants known to have D = 0 under instantaneous output feedback.
    bool estimate_feedthrough = true;
};

/// VARX least squares: for k = p..N-1 regress
///   y(k) ~ H_0^u u(k) + sum_{i=1..p} (H_i^u u(k-i) + H_i^y y(k-i)).
/// Solved by column-pivoted QR (ridge > 0 appends Tikhonov rows).
IdentifiedXi identify_xi(const IOData& data, std::size_t past_horizon, const IdentifyOptions& options = {});

/// Number of regression rows needed for a unique solution with zero ridge.
Eigen::Index required_samples(std::size_t past_horizon, Eigen::Index inputs, Eigen::Index outputs,
                              bool estimate_feedthrough = true);

/// One-step prediction errors r(k) = y(k) - yhat(k|k-1) using the identified
/// row. Rows k < p are NaN.
Matrix varx_residuals(const IdentifiedXi& xi, const IOData& data);

/// Manifest line `p,n_u,n_y`, its values, then one line per (lag, output row):
/// `lag,row,hu_1..hu_nu,hy_1..hy_ny`, then `sigma,row,...` lines for the
/// residual variance.
void write_xi_csv(std::ostream& out, const IdentifiedXi& xi);
void write_xi_csv(const std::filesystem::path& path, const IdentifiedXi& xi);
IdentifiedXi read_xi_csv(std::istream& in);
IdentifiedXi read_xi_csv(const std::filesystem::path& path);

}  // namespace dfest
