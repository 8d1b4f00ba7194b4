#include "dfest/markov_design.hpp"

#include "csv_util.hpp"
#include "dfest/config.hpp"
#include "dfest/error.hpp"
#include "dfest/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace dfest {

namespace {

void require_length(const MarkovSequence& seq, std::size_t length, const char* what) {
    if (length < 1) throw ValidationError("design", "Markov length must be at least 1");
    if (seq.size() < length) {
        std::ostringstream os;
        os << what << " provides " << seq.size() << " blocks, " << length << " required";
        throw ValidationError("design", os.str());
    }
}

std::size_t size_from(const Config& config, const char* key, std::size_t fallback) {
    for (const char* section : {"design", "horizons"}) {
        if (config.has(section, key)) {
            const long v = config.get_int(section, key, 0);
            if (v < 1) throw ValidationError("config", std::string(key) + " must be a positive integer");
            return static_cast<std::size_t>(v);
        }
    }
    return fallback;
}

}  // namespace

DesignConfig DesignConfig::from_config(const Config& config) { return from_config(config, DesignConfig{}); }

DesignConfig DesignConfig::from_config(const Config& config, DesignConfig base) {
    DesignConfig cfg = std::move(base);
    if (config.has("design", "sensors")) {
        cfg.sensors.clear();
        for (double s : config.get_list("design", "sensors")) {
            if (s != std::floor(s) || s < 1) throw ValidationError("config", "sensor indices are positive integers (1-based)");
            cfg.sensors.push_back(static_cast<int>(s) - 1);
        }
    }
    cfg.markov_length = size_from(config, "markov_length", cfg.markov_length);
    cfg.hankel_rows = size_from(config, "hankel_rows", cfg.hankel_rows);
    cfg.hankel_cols = size_from(config, "hankel_cols", cfg.hankel_cols);
    for (const char* section : {"design", "horizons"}) {
        if (!config.has(section, "filter_order")) continue;
        const std::string order = config.get_string(section, "filter_order", "auto");
        if (order == "auto") {
            cfg.order.reset();
        } else {
            const long n = config.get_int(section, "filter_order", 0);
            if (n < 1) throw ValidationError("config", "filter_order must be 'auto' or a positive integer");
            cfg.order = n;
        }
    }
    cfg.rank_tol = config.get_double("design", "rank_tol", cfg.rank_tol);

    const std::string strategy = config.get_string(
        "stabilization", "strategy", cfg.gain.strategy == GainStrategy::riccati ? "riccati" : "pole_placement");
    if (strategy == "riccati") {
        cfg.gain.strategy = GainStrategy::riccati;
    } else if (strategy == "pole_placement") {
        cfg.gain.strategy = GainStrategy::pole_placement;
    } else {
        throw ValidationError("config", "stabilization strategy must be 'riccati' or 'pole_placement'");
    }
    if (config.has("stabilization", "poles"))
        cfg.gain.poles = parse_complex_list(*config.find("stabilization", "poles"));
    cfg.gain.dare.tol = config.get_double("stabilization", "tol", cfg.gain.dare.tol);
    cfg.gain.dare.max_iter = config.get_int("stabilization", "max_iter", cfg.gain.dare.max_iter);
    return cfg;
}

void DesignConfig::validate(Eigen::Index inputs, Eigen::Index outputs) const {
    if (sensors.empty()) throw ValidationError("design", "at least one faulty sensor is required");
    std::set<int> seen;
    for (int s : sensors) {
        if (s < 0 || s >= outputs) {
            std::ostringstream os;
            os << "sensor index " << s + 1 << " outside 1.." << outputs;
            throw ValidationError("design", os.str());
        }
        if (!seen.insert(s).second) throw ValidationError("design", "duplicate sensor index");
    }
    if (hankel_rows < 1 || hankel_cols < 1) throw ValidationError("design", "Hankel dimensions must be positive");
    if (hankel_rows + hankel_cols > markov_length) {
        std::ostringstream os;
        os << "Hankel needs W_1..W_" << hankel_rows + hankel_cols - 1 << " but the Markov length is " << markov_length;
        throw ValidationError("design", os.str());
    }
    if (order) {
        const Eigen::Index limit = std::min(static_cast<Eigen::Index>(hankel_rows) * (faults() + outputs),
                                            static_cast<Eigen::Index>(hankel_cols) * (inputs + outputs));
        if (*order < 1 || *order > limit) {
            std::ostringstream os;
            os << "filter order " << *order << " outside 1.." << limit;
            throw ValidationError("design", os.str());
        }
    }
    if (!(rank_tol >= 0.0)) throw ValidationError("design", "rank tolerance must be non-negative");
}

Eigen::Index select_order(const std::vector<double>& s) {
    if (s.empty() || !(s.front() > 0.0)) return 0;
    if (s.size() == 1) return 1;
    const double floor = s.front() * std::numeric_limits<double>::epsilon();
    Eigen::Index best = 1;
    double best_ratio = -1.0;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] <= floor) break;
        const double ratio = s[i] / std::max(s[i + 1], floor);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = static_cast<Eigen::Index>(i + 1);
        }
    }
    return best;
}

Realization ho_kalman(const MarkovSequence& seq, std::size_t block_rows, std::size_t block_cols,
                      std::optional<Eigen::Index> order, double rank_tol) {
    if (block_rows < 1 || block_cols < 1) throw ValidationError("realize", "Hankel dimensions must be positive");
    if (seq.size() < block_rows + block_cols) {
        std::ostringstream os;
        os << "realization needs W_0..W_" << block_rows + block_cols - 1 << ", got " << seq.size() << " blocks";
        throw ValidationError("realize", os.str());
    }
    const Eigen::Index p = seq.rows();
    const Eigen::Index q = seq.cols();
    const Matrix H = block_hankel(seq, block_rows, block_cols);
    Eigen::BDCSVD<Matrix> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();

    Realization out;
    out.singular_values.assign(sv.data(), sv.data() + sv.size());
    const Eigen::Index n = order ? *order : select_order(out.singular_values);
    if (n < 1 || n > sv.size()) {
        std::ostringstream os;
        os << "realization order " << n << " outside 1.." << sv.size();
        throw ValidationError("realize", os.str());
    }
    if (!(sv(n - 1) > rank_tol * sv(0))) {
        std::ostringstream os;
        os << "requested order " << n << " exceeds the numerical rank of the Hankel matrix; singular values:";
        for (Eigen::Index i = 0; i < std::min<Eigen::Index>(sv.size(), n + 4); ++i) os << ' ' << sv(i);
        out.warnings.push_back(os.str());
    }

    const Vector root = sv.head(n).cwiseSqrt();
    const Matrix Ow = svd.matrixU().leftCols(n) * root.asDiagonal();
    const Matrix Cw = root.asDiagonal() * svd.matrixV().leftCols(n).transpose();
    const Eigen::Index shift = static_cast<Eigen::Index>(block_cols - 1) * q;

    out.order = n;
    out.system.D = seq[0];
    out.system.B = Cw.leftCols(q);
    out.system.C = Ow.topRows(p);
    if (shift == 0) {
        // One block column: fall back to the shifted observability factor.
        const Eigen::Index rshift = static_cast<Eigen::Index>(block_rows - 1) * p;
        if (rshift == 0) throw ValidationError("realize", "a 1x1 block Hankel matrix cannot determine the state matrix");
        out.system.A = linalg::pinv(Ow.topRows(rshift)) * Ow.bottomRows(rshift);
    } else {
        out.system.A = Cw.rightCols(shift) * linalg::pinv(Cw.leftCols(shift));
    }
    return out;
}

FilterFactors RealizedSystem::factors() const {
    return FilterFactors{Phi1_hat, Bf_hat, Kf_hat, C1_hat, C2_hat, Df1_hat, D1_hat, Df2_hat, Gf2_hat};
}

MarkovSequence fault_markov(const MarkovSequence& hy, const std::vector<int>& sensors, std::size_t length) {
    require_length(hy, length, "H^y");
    const Eigen::Index ny = hy.rows();
    const Matrix select = sensor_fault_directions(ny, sensors);
    std::vector<Matrix> blocks;
    blocks.reserve(length);
    blocks.push_back(select);
    for (std::size_t i = 1; i < length; ++i) blocks.push_back(-hy[i] * select);
    return MarkovSequence(std::move(blocks));
}

MarkovSequence z_markov(const MarkovSequence& hu, const MarkovSequence& hy, std::size_t length) {
    require_length(hu, length, "H^u");
    require_length(hy, length, "H^y");
    const Eigen::Index ny = hy.rows(), nu = hu.cols();
    std::vector<Matrix> blocks;
    blocks.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
        Matrix b(ny, nu + ny);
        if (i == 0)
            b << -hu[0], Matrix::Identity(ny, ny);
        else
            b << -hu[i], -hy[i];
        blocks.push_back(std::move(b));
    }
    return MarkovSequence(std::move(blocks));
}

MarkovSequence inverse_markov(const MarkovSequence& hf, std::size_t length) {
    require_length(hf, length, "H^f");
    Matrix G0;
    try {
        G0 = left_inverse(hf[0]);
    } catch (const NumericalError&) {
        throw NumericalError("design", "fault feedthrough rank: H_0^f does not have full column rank");
    }
    std::vector<Matrix> g;
    g.reserve(length);
    g.push_back(G0);
    for (std::size_t i = 1; i < length; ++i) {
        Matrix acc = Matrix::Zero(G0.rows(), G0.rows());
        for (std::size_t j = 1; j <= i; ++j) acc.noalias() += g[i - j] * hf[j];
        g.push_back(-acc * G0);
    }
    return MarkovSequence(std::move(g));
}

MarkovSequence convolve_r(const MarkovSequence& g, const MarkovSequence& hz, std::size_t length) {
    require_length(g, length, "G");
    require_length(hz, length, "H^z");
    std::vector<Matrix> r;
    r.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
        Matrix acc = Matrix::Zero(g.rows(), hz.cols());
        for (std::size_t j = 0; j <= i; ++j) acc.noalias() += g[i - j] * hz[j];
        r.push_back(std::move(acc));
    }
    return MarkovSequence(std::move(r));
}

MarkovSequence convolve_q(const MarkovSequence& hz, const MarkovSequence& hf, const MarkovSequence& r,
                          std::size_t length) {
    require_length(hz, length, "H^z");
    require_length(hf, length, "H^f");
    require_length(r, length, "R");
    std::vector<Matrix> q;
    q.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
        Matrix acc = hz[i];
        for (std::size_t j = 0; j <= i; ++j) acc.noalias() -= hf[i - j] * r[j];
        q.push_back(std::move(acc));
    }
    return MarkovSequence(std::move(q));
}

MarkovSequence stack_w(const MarkovSequence& r, const MarkovSequence& q) {
    if (r.size() != q.size() || r.cols() != q.cols()) throw ValidationError("design", "R and Q sequences do not align");
    std::vector<Matrix> w;
    w.reserve(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        Matrix b(r.rows() + q.rows(), r.cols());
        b << r[i], q[i];
        w.push_back(std::move(b));
    }
    return MarkovSequence(std::move(w));
}

MarkovSequence filter_markov(const MarkovSequence& hu, const MarkovSequence& hy, const std::vector<int>& sensors,
                             std::size_t length) {
    const MarkovSequence hf = fault_markov(hy, sensors, length);
    const MarkovSequence hz = z_markov(hu, hy, length);
    const MarkovSequence r = convolve_r(inverse_markov(hf, length), hz, length);
    return stack_w(r, convolve_q(hz, hf, r, length));
}

RealizedSystem realize(const MarkovSequence& w, Eigen::Index inputs, const DesignConfig& config) {
    const Eigen::Index nf = config.faults();
    const Eigen::Index ny = w.cols() - inputs;
    if (inputs < 0 || ny < 1 || w.rows() != nf + ny)
        throw ValidationError("realize", "W blocks must be (n_f + n_y) x (n_u + n_y)");
    const Realization rz = ho_kalman(w, config.hankel_rows, config.hankel_cols, config.order, config.rank_tol);
    const Eigen::Index nu = inputs;

    RealizedSystem out;
    out.Phi1_hat = rz.system.A;
    out.Bf_hat = rz.system.B.leftCols(nu);
    out.Kf_hat = rz.system.B.rightCols(ny);
    out.C1_hat = rz.system.C.topRows(nf);
    out.C2_hat = -rz.system.C.bottomRows(ny);
    const Matrix& W0 = rz.system.D;
    out.Df1_hat = W0.topLeftCorner(nf, nu);
    out.D1_hat = W0.topRightCorner(nf, ny);
    out.Df2_hat = -W0.bottomLeftCorner(ny, nu);
    out.Gf2_hat = W0.bottomRightCorner(ny, ny);
    out.singular_values = rz.singular_values;
    out.warnings = rz.warnings;
    return out;
}

DesignResult design_filter_from_markov(const MarkovSequence& hu, const MarkovSequence& hy, const DesignConfig& config) {
    const Eigen::Index nu = hu.cols();
    const Eigen::Index ny = hy.rows();
    config.validate(nu, ny);

    DesignResult result;
    const MarkovSequence w = filter_markov(hu, hy, config.sensors, config.markov_length);
    result.realized = realize(w, nu, config);

    const Matrix& Phi1 = result.realized.Phi1_hat;
    const Matrix& C2 = result.realized.C2_hat;
    double gap = std::numeric_limits<double>::infinity();
    result.zeros.zeros = linalg::unobservable_modes(Phi1, C2, 1e-9, &gap);
    result.zeros.condition = gap;
    result.zeros.stable = std::all_of(result.zeros.zeros.begin(), result.zeros.zeros.end(),
                                      [](const Complex& z) { return std::abs(z) < 1.0 - 1e-6; });
    try {
        result.Kr = stabilizing_gain(Phi1, C2, config.gain);
    } catch (const NumericalError& e) {
        const std::string what = e.what();
        if (what.rfind("stabilizability condition violated", 0) == 0)
            throw NumericalError(e.stage(), what + " (identified system)");
        throw;
    }
    result.filter = assemble_filter(result.realized.factors(), result.Kr);
    return result;
}

DesignResult design_filter_from_data(const IOData& data, std::size_t past_horizon, const DesignConfig& config,
                                     const IdentifyOptions& identify) {
    config.validate(data.inputs(), data.outputs());
    if (past_horizon + 1 < config.markov_length) {
        std::ostringstream os;
        os << "past horizon " << past_horizon << " yields " << past_horizon + 1 << " Markov blocks, "
           << config.markov_length << " required";
        throw ValidationError("design", os.str());
    }
    const IdentifiedXi xi = identify_xi(data, past_horizon, identify);
    return design_filter_from_markov(xi.hu, xi.hy, config);
}

void write_realization_audit(const std::filesystem::path& dir, const RealizedSystem& realized) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "singular_values.csv");
        if (!out) throw ValidationError("io", "cannot write audit files in " + dir.string());
        csv::set_precision(out);
        out << "index,sigma\n";
        for (std::size_t i = 0; i < realized.singular_values.size(); ++i)
            out << i + 1 << ',' << realized.singular_values[i] << '\n';
    }
    write_matrix_csv(dir / "Phi1_hat.csv", realized.Phi1_hat);
    write_matrix_csv(dir / "Bf_hat.csv", realized.Bf_hat);
    write_matrix_csv(dir / "Kf_hat.csv", realized.Kf_hat);
    write_matrix_csv(dir / "C1_hat.csv", realized.C1_hat);
    write_matrix_csv(dir / "C2_hat.csv", realized.C2_hat);
    write_matrix_csv(dir / "Df1_hat.csv", realized.Df1_hat);
    write_matrix_csv(dir / "D1_hat.csv", realized.D1_hat);
    write_matrix_csv(dir / "Df2_hat.csv", realized.Df2_hat);
    write_matrix_csv(dir / "Gf2_hat.csv", realized.Gf2_hat);
}

}  // namespace dfest
