#include "dfest/sysid.hpp"

#include "csv_util.hpp"
#include "dfest/error.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dfest {

MarkovSequence IdentifiedXi::joint() const {
    std::vector<Matrix> blocks;
    blocks.reserve(hu.size());
    for (std::size_t i = 0; i < hu.size(); ++i) {
        Matrix b(outputs(), inputs() + outputs());
        b << hu[i], hy[i];
        blocks.push_back(std::move(b));
    }
    return MarkovSequence(std::move(blocks));
}

Eigen::Index required_samples(std::size_t past_horizon, Eigen::Index inputs, Eigen::Index outputs,
                              bool estimate_feedthrough) {
    const auto p = static_cast<Eigen::Index>(past_horizon);
    return p + p * (inputs + outputs) + (estimate_feedthrough ? inputs : 0);
}

IdentifiedXi identify_xi(const IOData& data, std::size_t past_horizon, const IdentifyOptions& options) {
    data.validate();
    if (past_horizon < 1) throw ValidationError("identify", "past horizon must be at least 1");
    if (options.ridge < 0.0) throw ValidationError("identify", "ridge must be non-negative");

    const auto p = static_cast<Eigen::Index>(past_horizon);
    const Eigen::Index N = data.sample_count();
    const Eigen::Index nu = data.inputs();
    const Eigen::Index ny = data.outputs();
    const Eigen::Index nz = nu + ny;
    const Eigen::Index cols = p * nz + (options.estimate_feedthrough ? nu : 0);
    const Eigen::Index rows = N - p;

    if (options.ridge == 0.0 && rows < cols) {
        std::ostringstream os;
        os << "insufficient excitation: " << rows << " regression rows for " << cols
           << " unknowns per output (need N >= " << required_samples(past_horizon, nu, ny, options.estimate_feedthrough)
           << ", got N = " << N << ")";
        throw ValidationError("identify", os.str());
    }
    if (rows < 1) throw ValidationError("identify", "insufficient excitation: no regression rows (N <= p)");

    // Row t (k = p + t): [u(k-p) y(k-p) ... u(k-1) y(k-1) u(k)], matching
    // Xi = [H_p^u H_p^y ... H_1^u H_1^y H_0^u].
    const Eigen::Index extra = options.ridge > 0.0 ? cols : 0;
    Matrix regressor = Matrix::Zero(rows + extra, cols);
    Matrix target = Matrix::Zero(rows + extra, ny);
    for (Eigen::Index t = 0; t < rows; ++t) {
        const Eigen::Index k = p + t;
        for (Eigen::Index lag = p; lag >= 1; --lag) {
            const Eigen::Index c = (p - lag) * nz;
            regressor.block(t, c, 1, nu) = data.u.row(k - lag);
            regressor.block(t, c + nu, 1, ny) = data.y.row(k - lag);
        }
        if (options.estimate_feedthrough) regressor.block(t, p * nz, 1, nu) = data.u.row(k);
        target.row(t) = data.y.row(k);
    }
    if (extra > 0) regressor.bottomRows(extra) = std::sqrt(options.ridge) * Matrix::Identity(cols, cols);

    Eigen::ColPivHouseholderQR<Matrix> qr(regressor);
    if (options.ridge == 0.0 && qr.rank() < cols) {
        std::ostringstream os;
        os << "insufficient excitation: regressor rank " << qr.rank() << " of " << cols << " columns ("
           << cols - qr.rank() << " unexcited direction(s))";
        throw NumericalError("identify", os.str());
    }
    const Matrix theta = qr.solve(target);  // cols x ny, Xi^T
    const Matrix residual = target.topRows(rows) - regressor.topRows(rows) * theta;

    std::vector<Matrix> hu(static_cast<std::size_t>(p + 1), Matrix::Zero(ny, nu));
    std::vector<Matrix> hy(static_cast<std::size_t>(p + 1), Matrix::Zero(ny, ny));
    for (Eigen::Index lag = 1; lag <= p; ++lag) {
        const Eigen::Index c = (p - lag) * nz;
        hu[static_cast<std::size_t>(lag)] = theta.block(c, 0, nu, ny).transpose();
        hy[static_cast<std::size_t>(lag)] = theta.block(c + nu, 0, ny, ny).transpose();
    }
    if (options.estimate_feedthrough) hu[0] = theta.block(p * nz, 0, nu, ny).transpose();

    IdentifiedXi xi;
    xi.hu = MarkovSequence(std::move(hu));
    xi.hy = MarkovSequence(std::move(hy));
    xi.past_horizon = past_horizon;
    xi.residual_variance = residual.transpose() * residual / static_cast<double>(rows);
    return xi;
}

Matrix varx_residuals(const IdentifiedXi& xi, const IOData& data) {
    data.validate();
    if (data.inputs() != xi.inputs() || data.outputs() != xi.outputs())
        throw ValidationError("residual", "data dimensions do not match the identified Markov parameters");
    const auto p = static_cast<Eigen::Index>(xi.past_horizon);
    const Eigen::Index N = data.sample_count();
    Matrix r = Matrix::Constant(N, xi.outputs(), std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index k = p; k < N; ++k) {
        Vector pred = xi.hu[0] * data.u.row(k).transpose();
        for (Eigen::Index lag = 1; lag <= p; ++lag) {
            pred.noalias() += xi.hu[static_cast<std::size_t>(lag)] * data.u.row(k - lag).transpose();
            pred.noalias() += xi.hy[static_cast<std::size_t>(lag)] * data.y.row(k - lag).transpose();
        }
        r.row(k) = data.y.row(k) - pred.transpose();
    }
    return r;
}

void write_xi_csv(std::ostream& out, const IdentifiedXi& xi) {
    csv::set_precision(out);
    const Eigen::Index nu = xi.inputs();
    const Eigen::Index ny = xi.outputs();
    out << "p,n_u,n_y\n" << xi.past_horizon << ',' << nu << ',' << ny << '\n';
    out << "lag,row";
    for (Eigen::Index i = 0; i < nu; ++i) out << ",hu" << i + 1;
    for (Eigen::Index i = 0; i < ny; ++i) out << ",hy" << i + 1;
    out << '\n';
    for (std::size_t lag = 0; lag < xi.hu.size(); ++lag) {
        for (Eigen::Index r = 0; r < ny; ++r) {
            out << lag << ',' << r;
            for (Eigen::Index i = 0; i < nu; ++i) out << ',' << xi.hu[lag](r, i);
            for (Eigen::Index i = 0; i < ny; ++i) out << ',' << xi.hy[lag](r, i);
            out << '\n';
        }
    }
    for (Eigen::Index r = 0; r < ny; ++r) {
        out << "sigma," << r;
        for (Eigen::Index i = 0; i < ny; ++i) out << ',' << xi.residual_variance(r, i);
        out << '\n';
    }
}

void write_xi_csv(const std::filesystem::path& path, const IdentifiedXi& xi) {
    std::ofstream out(path);
    if (!out) throw ValidationError("io", "cannot write " + path.string());
    write_xi_csv(out, xi);
}

IdentifiedXi read_xi_csv(std::istream& in) {
    std::string line;
    if (!csv::next_line(in, line) || csv::split(line) != std::vector<std::string>{"p", "n_u", "n_y"})
        throw ValidationError("io", "Markov parameter file must start with the manifest 'p,n_u,n_y'");
    if (!csv::next_line(in, line)) throw ValidationError("io", "missing manifest values");
    const auto manifest = csv::split(line);
    if (manifest.size() != 3) throw ValidationError("io", "manifest needs three values");
    const long p = csv::to_long(manifest[0], "manifest");
    const long nu = csv::to_long(manifest[1], "manifest");
    const long ny = csv::to_long(manifest[2], "manifest");
    if (p < 1 || nu < 0 || ny < 1) throw ValidationError("io", "invalid manifest values");
    if (!csv::next_line(in, line)) throw ValidationError("io", "missing block header");

    std::vector<Matrix> hu(static_cast<std::size_t>(p + 1), Matrix::Zero(ny, nu));
    std::vector<Matrix> hy(static_cast<std::size_t>(p + 1), Matrix::Zero(ny, ny));
    Matrix sigma = Matrix::Zero(ny, ny);
    std::vector<int> seen(static_cast<std::size_t>((p + 1) * ny), 0);
    while (csv::next_line(in, line)) {
        const auto cells = csv::split(line);
        if (cells.size() < 2) throw ValidationError("io", "short row in Markov parameter file");
        const long row = csv::to_long(cells[1], "row index");
        if (row < 0 || row >= ny) throw ValidationError("io", "row index out of range");
        if (cells[0] == "sigma") {
            if (static_cast<long>(cells.size()) != 2 + ny) throw ValidationError("io", "bad sigma row width");
            for (long i = 0; i < ny; ++i) sigma(row, i) = csv::to_double(cells[static_cast<std::size_t>(2 + i)], "sigma");
            continue;
        }
        const long lag = csv::to_long(cells[0], "lag");
        if (lag < 0 || lag > p) throw ValidationError("io", "lag out of range");
        if (static_cast<long>(cells.size()) != 2 + nu + ny) throw ValidationError("io", "bad block row width");
        auto& hu_b = hu[static_cast<std::size_t>(lag)];
        auto& hy_b = hy[static_cast<std::size_t>(lag)];
        for (long i = 0; i < nu; ++i) hu_b(row, i) = csv::to_double(cells[static_cast<std::size_t>(2 + i)], "hu");
        for (long i = 0; i < ny; ++i) hy_b(row, i) = csv::to_double(cells[static_cast<std::size_t>(2 + nu + i)], "hy");
        seen[static_cast<std::size_t>(lag * ny + row)] = 1;
    }
    for (int s : seen)
        if (!s) throw ValidationError("io", "Markov parameter file is missing block rows");

    IdentifiedXi xi;
    xi.hu = MarkovSequence(std::move(hu));
    xi.hy = MarkovSequence(std::move(hy));
    xi.past_horizon = static_cast<std::size_t>(p);
    xi.residual_variance = sigma;
    return xi;
}

IdentifiedXi read_xi_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("io", "cannot open " + path.string());
    return read_xi_csv(in);
}

}  // namespace dfest
