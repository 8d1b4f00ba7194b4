#pragma once

#include "dfest/inverse_filter.hpp"
#include "dfest/sysid.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dfest {

class Config;

struct DesignConfig {
    std::vector<int> sensors{0};  // faulty sensors, 0-based
    std::size_t markov_length = 100;
    std::size_t hankel_rows = 20;
    std::size_t hankel_cols = 20;
    std::optional<Eigen::Index> order;  // nullopt selects the order from the singular value gap
    GainOptions gain;
    double rank_tol = 1e-10;  // relative threshold for the numerical rank warning

    Eigen::Index faults() const { return static_cast<Eigen::Index>(sensors.size()); }

    /// Reads `[design]`, `[horizons]` and `[stabilization]` on top of `base`;
    /// missing keys keep the base values. Sensor indices are 1-based in the file.
    static DesignConfig from_config(const Config& config, DesignConfig base);
    static DesignConfig from_config(const Config& config);

    void validate(Eigen::Index inputs, Eigen::Index outputs) const;
};

/// Ho-Kalman realization of a Markov sequence.
struct Realization {
    StateSpace system;
    std::vector<double> singular_values;
    Eigen::Index order = 0;
    std::vector<std::string> warnings;
};

/// Realizes (A, B, C, D) from {W_i}: D = W_0, Hankel of W_1..W_{l+m-1},
/// truncated SVD, B/C from the first block column/row of the balanced
/// factors and A from the block-shifted controllability factor.
Realization ho_kalman(const MarkovSequence& seq, std::size_t block_rows, std::size_t block_cols,
                      std::optional<Eigen::Index> order, double rank_tol = 1e-10);

/// Largest ratio sigma_i / sigma_{i+1}; ties go to the smaller order.
Eigen::Index select_order(const std::vector<double>& singular_values);

/// Realized (Phi1, [Bf Kf], [C1; -C2], [[Df1 D1]; [-Df2 Gf2]]).
struct RealizedSystem {
    Matrix Phi1_hat, Bf_hat, Kf_hat, C1_hat, C2_hat, Df1_hat, D1_hat, Df2_hat, Gf2_hat;
    std::vector<double> singular_values;
    std::vector<std::string> warnings;

    FilterFactors factors() const;
    Eigen::Index order() const { return Phi1_hat.rows(); }
};

/// H_0^f = I^[sensors], H_i^f = -(H_i^y)^[sensors].
MarkovSequence fault_markov(const MarkovSequence& hy, const std::vector<int>& sensors, std::size_t length);

/// H_0^z = [-H_0^u, I], H_i^z = [-H_i^u, -H_i^y].
MarkovSequence z_markov(const MarkovSequence& hu, const MarkovSequence& hy, std::size_t length);

/// Block-Toeplitz left inverse of T_L^f: G_0 = (H_0^f)^-, G_i = -sum G_{i-j} H_j^f G_0.
MarkovSequence inverse_markov(const MarkovSequence& hf, std::size_t length);

/// R_i = sum_{j<=i} G_{i-j} H_j^z.
MarkovSequence convolve_r(const MarkovSequence& g, const MarkovSequence& hz, std::size_t length);

/// Q_i = H_i^z - sum_{j<=i} H_{i-j}^f R_j.
MarkovSequence convolve_q(const MarkovSequence& hz, const MarkovSequence& hf, const MarkovSequence& r,
                          std::size_t length);

/// W_i = [R_i; Q_i].
MarkovSequence stack_w(const MarkovSequence& r, const MarkovSequence& q);

/// The W sequence for a given Xi and sensor set.
MarkovSequence filter_markov(const MarkovSequence& hu, const MarkovSequence& hy, const std::vector<int>& sensors,
                             std::size_t length);

RealizedSystem realize(const MarkovSequence& w, Eigen::Index inputs, const DesignConfig& config);

struct DesignResult {
    FaultEstimationFilter filter;
    RealizedSystem realized;
    Matrix Kr;
    InvariantZeros zeros;  // of the realized fault subsystem, i.e. unobservable modes of (Phi1_hat, C2_hat)
};

/// Markov recursions, realization and stabilization from a Markov parameter
/// row (identified or exact).
DesignResult design_filter_from_markov(const MarkovSequence& hu, const MarkovSequence& hy, const DesignConfig& config);

/// Identification followed by the Markov-parameter design.
DesignResult design_filter_from_data(const IOData& data, std::size_t past_horizon, const DesignConfig& config,
                                     const IdentifyOptions& identify = {});

/// Singular values (one per line) and the realized matrices as CSV files.
void write_realization_audit(const std::filesystem::path& dir, const RealizedSystem& realized);

}  // namespace dfest
