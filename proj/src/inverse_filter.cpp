#include "dfest/inverse_filter.hpp"

#include "csv_util.hpp"
#include "dfest/config.hpp"
#include "dfest/error.hpp"
#include "dfest/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace dfest {

namespace {

std::string format_modes(const std::vector<Complex>& modes) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (i > 0) os << ", ";
        os << modes[i].real();
        if (modes[i].imag() != 0.0) os << (modes[i].imag() > 0 ? "+" : "-") << std::abs(modes[i].imag()) << 'i';
    }
    os << ']';
    return os.str();
}

std::vector<Complex> unstable_only(const std::vector<Complex>& modes, double bound) {
    std::vector<Complex> out;
    std::copy_if(modes.begin(), modes.end(), std::back_inserter(out),
                 [bound](const Complex& z) { return std::abs(z) >= bound; });
    return out;
}

}  // namespace

FaultEstimationFilter::FaultEstimationFilter(Matrix Af, Matrix Bu, Matrix By, Matrix Cf, Matrix Du, Matrix Dy)
    : Af_(std::move(Af)), Bu_(std::move(Bu)), By_(std::move(By)), Cf_(std::move(Cf)), Du_(std::move(Du)),
      Dy_(std::move(Dy)) {
    const Eigen::Index n = Af_.rows();
    if (Af_.cols() != n || Bu_.rows() != n || By_.rows() != n || Cf_.cols() != n || Du_.rows() != Cf_.rows() ||
        Dy_.rows() != Cf_.rows() || Du_.cols() != Bu_.cols() || Dy_.cols() != By_.cols())
        throw ValidationError("filter", "inconsistent filter matrix dimensions");
    reset();
}

void FaultEstimationFilter::reset(const Vector& x0) {
    if (x0.size() != 0 && x0.size() != order()) throw ValidationError("filter", "initial filter state has wrong size");
    x_ = x0.size() == 0 ? Vector::Zero(order()) : x0;
    next_.resize(order());
}

void FaultEstimationFilter::step(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& y,
                                 Eigen::Ref<Vector> fhat) {
    fhat.noalias() = Cf_ * x_;
    fhat.noalias() += Du_ * u;
    fhat.noalias() += Dy_ * y;
    next_.noalias() = Af_ * x_;
    next_.noalias() += Bu_ * u;
    next_.noalias() += By_ * y;
    x_.swap(next_);
}

StateSpace FaultEstimationFilter::as_state_space() const {
    StateSpace s;
    s.A = Af_;
    s.B.resize(order(), inputs() + outputs());
    s.B << Bu_, By_;
    s.C = Cf_;
    s.D.resize(faults(), inputs() + outputs());
    s.D << Du_, Dy_;
    return s;
}

double FaultEstimationFilter::spectral_radius() const { return linalg::spectral_radius(Af_); }

Matrix left_inverse(const Matrix& G, double rel_tol) {
    if (G.cols() == 0) return Matrix::Zero(0, G.rows());
    Eigen::JacobiSVD<Matrix> svd(G);
    const Vector& s = svd.singularValues();
    if (G.rows() < G.cols() || s(s.size() - 1) <= rel_tol * std::max(s(0), std::numeric_limits<double>::min())) {
        std::ostringstream os;
        os << "fault direction rank: G (" << G.rows() << "x" << G.cols() << ") needs full column rank "
           << G.cols();
        throw NumericalError("inverse", os.str());
    }
    const Matrix gram = G.transpose() * G;
    return gram.ldlt().solve(G.transpose());
}

StateSpace residual_generator(const PredictorModel& pred) {
    const Eigen::Index n = pred.states(), nu = pred.inputs(), ny = pred.outputs();
    StateSpace s;
    s.A = pred.Phi;
    s.B.resize(n, nu + ny);
    s.B << pred.Btilde, pred.K;
    s.C = -pred.C;
    s.D.resize(ny, nu + ny);
    s.D << -pred.D, Matrix::Identity(ny, ny);
    return s;
}

InverseMatrices open_loop_inverse(const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G) {
    const Eigen::Index n = Phi.rows();
    const Eigen::Index ny = C.rows();
    if (Phi.cols() != n || Etilde.rows() != n || C.cols() != n || G.rows() != ny || Etilde.cols() != G.cols())
        throw ValidationError("inverse", "inconsistent fault subsystem dimensions");
    const Matrix Gm = left_inverse(G);
    InverseMatrices inv;
    inv.B1 = Etilde * Gm;
    inv.Phi1 = Phi - inv.B1 * C;
    inv.C1 = -Gm * C;
    inv.D1 = Gm;
    inv.D2 = G * Gm;
    inv.C2 = (Matrix::Identity(ny, ny) - inv.D2) * C;
    return inv;
}

InverseMatrices open_loop_inverse(const PredictorModel& pred) {
    return open_loop_inverse(pred.Phi, pred.Etilde, pred.C, pred.G);
}

double rosenbrock_rank_drop(const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G,
                            Complex lambda) {
    const Eigen::Index n = Phi.rows(), nf = G.cols(), ny = C.rows();
    Eigen::MatrixXcd pencil(n + ny, n + nf);
    pencil.topLeftCorner(n, n) = Phi.cast<Complex>() - lambda * Eigen::MatrixXcd::Identity(n, n);
    pencil.topRightCorner(n, nf) = Etilde.cast<Complex>();
    pencil.bottomLeftCorner(ny, n) = C.cast<Complex>();
    pencil.bottomRightCorner(ny, nf) = G.cast<Complex>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) / s(0);
}

InvariantZeros invariant_zeros_stable(const Matrix& Phi, const Matrix& Etilde, const Matrix& C, const Matrix& G,
                                      double margin) {
    const Eigen::Index n = Phi.rows(), nf = G.cols(), ny = C.rows();
    const InverseMatrices inv = open_loop_inverse(Phi, Etilde, C, G);  // validates rank(G) = n_f

    InvariantZeros result;
    if (nf == ny) {
        // Square pencil: QZ on [[Phi, Etilde], [C, G]] - lambda diag(I, 0).
        Matrix Ap(n + nf, n + nf), Bp = Matrix::Zero(n + nf, n + nf);
        Ap << Phi, Etilde, C, G;
        Bp.topLeftCorner(n, n).setIdentity();
        Eigen::GeneralizedEigenSolver<Matrix> ges(Ap, Bp, false);
        if (ges.info() != Eigen::Success) throw NumericalError("zeros", "zero computation failed (QZ)");
        const Eigen::VectorXcd alphas = ges.alphas();
        const Vector betas = ges.betas();
        std::vector<std::pair<double, Complex>> candidates;
        for (Eigen::Index i = 0; i < alphas.size(); ++i) {
            const double scale = std::max(std::abs(alphas(i)), std::abs(betas(i)));
            const double finiteness = scale > 0.0 ? std::abs(betas(i)) / scale : 0.0;
            candidates.emplace_back(finiteness, scale > 0.0 && betas(i) != 0.0 ? alphas(i) / betas(i) : Complex(0, 0));
        }
        // G invertible: exactly n finite zeros; the rest sit at infinity.
        std::sort(candidates.begin(), candidates.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        result.condition = n > 0 ? candidates[static_cast<std::size_t>(n - 1)].first : 1.0;
        for (Eigen::Index i = 0; i < n; ++i) result.zeros.push_back(candidates[static_cast<std::size_t>(i)].second);
        if (n > 0 && result.condition < 1e-8) {
            std::ostringstream os;
            os << "zero computation ill-conditioned (condition estimate " << result.condition << ")";
            result.warning = os.str();
        }
    } else {
        // Squared down: the invariant zeros are the unobservable modes of (Phi1, C2).
        double gap = std::numeric_limits<double>::infinity();
        result.zeros = linalg::unobservable_modes(inv.Phi1, inv.C2, 1e-9, &gap);
        result.condition = gap;
        if (gap < 1e3) {
            std::ostringstream os;
            os << "zero computation ill-conditioned (condition estimate " << gap << ")";
            result.warning = os.str();
        }
    }
    result.stable = std::all_of(result.zeros.begin(), result.zeros.end(),
                                [margin](const Complex& z) { return std::abs(z) < 1.0 - margin; });
    return result;
}

namespace {

Matrix place_single_output(const Matrix& A, const Matrix& c, const std::vector<double>& poly, double* cond) {
    const Eigen::Index n = A.rows();
    const Matrix O = extended_observability(A, c, static_cast<std::size_t>(n));
    Eigen::JacobiSVD<Matrix> svd(O);
    const auto& s = svd.singularValues();
    *cond = s(0) > 0.0 ? s(n - 1) / s(0) : 0.0;
    Matrix pA = Matrix::Identity(n, n);
    for (std::size_t i = 1; i < poly.size(); ++i) pA = pA * A + poly[i] * Matrix::Identity(n, n);
    Vector last = Vector::Zero(n);
    last(n - 1) = 1.0;
    const Vector x = O.colPivHouseholderQr().solve(last);
    return pA * x;
}

double pole_mismatch(const std::vector<Complex>& target, std::vector<Complex> actual) {
    double worst = 0.0;
    for (const auto& t : target) {
        auto it = std::min_element(actual.begin(), actual.end(),
                                   [&t](const Complex& a, const Complex& b) { return std::abs(a - t) < std::abs(b - t); });
        worst = std::max(worst, std::abs(*it - t));
        actual.erase(it);
    }
    return worst;
}

Matrix pole_placement_gain(const Matrix& Phi1, const Matrix& C2, const std::vector<Complex>& poles) {
    const Eigen::Index n = Phi1.rows();
    const Eigen::Index ny = C2.rows();
    if (static_cast<Eigen::Index>(poles.size()) != n) {
        std::ostringstream os;
        os << "pole placement needs " << n << " poles, got " << poles.size();
        throw ValidationError("stabilize", os.str());
    }
    for (const auto& p : poles) {
        if (p.imag() == 0.0) continue;
        const bool paired = std::any_of(poles.begin(), poles.end(), [&p](const Complex& q) {
            return std::abs(q - std::conj(p)) <= 1e-12 * std::max(1.0, std::abs(p));
        });
        if (!paired) throw ValidationError("stabilize", "complex poles must come in conjugate pairs");
    }
    const std::vector<double> poly = linalg::poly_from_roots(poles);

    // Candidate output combinations: left singular vectors first, then a fixed
    // pseudo-random sequence.
    std::vector<Vector> candidates;
    if (ny > 0) {
        Eigen::JacobiSVD<Matrix> svd(C2, Eigen::ComputeFullU);
        for (Eigen::Index i = 0; i < ny; ++i) candidates.push_back(svd.matrixU().col(i));
        std::mt19937_64 rng(20150101);
        std::normal_distribution<double> normal;
        for (int t = 0; t < 16; ++t) {
            Vector v(ny);
            for (Eigen::Index i = 0; i < ny; ++i) v(i) = normal(rng);
            candidates.push_back(v.normalized());
        }
    }
    Matrix best;
    double best_err = std::numeric_limits<double>::infinity();
    for (const auto& v : candidates) {
        const Matrix c = v.transpose() * C2;
        if (c.norm() == 0.0) continue;
        double cond = 0.0;
        const Matrix ell = place_single_output(Phi1, c, poly, &cond);
        if (cond < 1e-12 || !ell.allFinite()) continue;
        const Matrix K = ell * v.transpose();
        const double err = pole_mismatch(poles, linalg::eigenvalues(Phi1 - K * C2));
        if (err < best_err) {
            best_err = err;
            best = K;
        }
        if (err <= 1e-9 * std::max(1.0, Phi1.norm())) break;
    }
    if (best.size() == 0 || best_err > 1e-6 * std::max(1.0, Phi1.norm())) {
        const auto modes = linalg::unobservable_modes(Phi1, C2);
        std::ostringstream os;
        os << "pole placement requires an observable (Phi1, C2) pair";
        if (!modes.empty()) os << "; unobservable modes " << format_modes(modes);
        os << "; use the riccati strategy instead";
        throw NumericalError("stabilize", os.str());
    }
    return best;
}

}  // namespace

Matrix stabilizing_gain(const Matrix& Phi1, const Matrix& C2, const GainOptions& options) {
    const Eigen::Index n = Phi1.rows();
    if (Phi1.cols() != n || C2.cols() != n) throw ValidationError("stabilize", "inconsistent (Phi1, C2) dimensions");

    const auto unstable = unstable_only(linalg::unobservable_modes(Phi1, C2), 1.0);
    if (!unstable.empty())
        throw NumericalError("stabilize", "stabilizability condition violated: unstable unobservable modes " +
                                              format_modes(unstable) + " (unstable invariant zeros)");

    Matrix Kr;
    if (options.strategy == GainStrategy::pole_placement) {
        Kr = pole_placement_gain(Phi1, C2, options.poles);
    } else {
        const Eigen::Index ny = C2.rows();
        Kr = solve_riccati(Phi1, C2, Matrix::Identity(n, n), Matrix::Identity(ny, ny), options.dare).K;
    }
    const double rho = linalg::spectral_radius(Phi1 - Kr * C2);
    if (!(rho < 1.0)) {
        std::ostringstream os;
        os << "stabilizing gain failed: spectral radius " << rho;
        throw NumericalError("stabilize", os.str());
    }
    return Kr;
}

ClosedLoopInverse closed_loop_inverse(const InverseMatrices& inv, const Matrix& Kr) {
    const Eigen::Index n = inv.Phi1.rows();
    const Eigen::Index ny = inv.C2.rows();
    if (Kr.rows() != n || Kr.cols() != ny) throw ValidationError("inverse", "Kr must be n x n_y");
    ClosedLoopInverse cl;
    cl.Phi2 = inv.Phi1 - Kr * inv.C2;
    cl.B2 = inv.B1 + Kr * (Matrix::Identity(ny, ny) - inv.D2);
    cl.C1 = inv.C1;
    cl.D1 = inv.D1;
    return cl;
}

FilterFactors filter_factors(const PredictorModel& pred) {
    const Eigen::Index ny = pred.outputs();
    const Matrix Gm = left_inverse(pred.G);
    const Matrix complement = Matrix::Identity(ny, ny) - pred.G * Gm;
    FilterFactors f;
    f.Phi1 = pred.Phi - pred.Etilde * Gm * pred.C;
    f.C1 = -Gm * pred.C;
    f.D1 = Gm;
    f.C2 = complement * pred.C;
    f.Bf = pred.Btilde - pred.Etilde * Gm * pred.D;
    f.Df2 = complement * pred.D;
    f.Kf = pred.K + pred.Etilde * Gm;
    f.Gf2 = complement;
    f.Df1 = -Gm * pred.D;
    return f;
}

FaultEstimationFilter assemble_filter(const FilterFactors& f, const Matrix& Kr) {
    return FaultEstimationFilter(f.Phi1 - Kr * f.C2, f.Bf - Kr * f.Df2, f.Kf + Kr * f.Gf2, f.C1, f.Df1, f.D1);
}

FaultEstimationFilter reduced_filter(const PredictorModel& pred, const Matrix& Kr) {
    return assemble_filter(filter_factors(pred), Kr);
}

StateSpace cascade_filter(const PredictorModel& pred, const Matrix& Kr) {
    const Eigen::Index n = pred.states(), nu = pred.inputs(), ny = pred.outputs(), nf = pred.faults();
    const ClosedLoopInverse cl = closed_loop_inverse(open_loop_inverse(pred), Kr);
    StateSpace s;
    s.A = Matrix::Zero(2 * n, 2 * n);
    s.A.topLeftCorner(n, n) = cl.Phi2;
    s.A.topRightCorner(n, n) = -cl.B2 * pred.C;
    s.A.bottomRightCorner(n, n) = pred.Phi;
    s.B.resize(2 * n, nu + ny);
    s.B << -cl.B2 * pred.D, cl.B2, pred.Btilde, pred.K;
    s.C.resize(nf, 2 * n);
    s.C << cl.C1, -cl.D1 * pred.C;
    s.D.resize(nf, nu + ny);
    s.D << -cl.D1 * pred.D, cl.D1;
    return s;
}

Matrix run_filter(const FaultEstimationFilter& filter, const IOData& data, const Vector& x_f0) {
    data.validate();
    if (data.inputs() != filter.inputs() || data.outputs() != filter.outputs())
        throw ValidationError("filter", "data dimensions do not match the filter");
    FaultEstimationFilter runner = filter;
    runner.reset(x_f0);
    const Eigen::Index N = data.sample_count();
    Matrix out(N, filter.faults());
    Vector u(filter.inputs()), y(filter.outputs()), fhat(filter.faults());
    for (Eigen::Index k = 0; k < N; ++k) {
        u = data.u.row(k).transpose();
        y = data.y.row(k).transpose();
        runner.step(u, y, fhat);
        out.row(k) = fhat.transpose();
    }
    return out;
}

Matrix simulate_system(const StateSpace& sys, const Matrix& inputs, const Vector& x0) {
    if (inputs.cols() != sys.inputs()) throw ValidationError("simulate", "input width does not match the system");
    Vector x = x0.size() == 0 ? Vector::Zero(sys.states()) : x0;
    Matrix out(inputs.rows(), sys.outputs());
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        const Vector in = inputs.row(k).transpose();
        out.row(k) = (sys.C * x + sys.D * in).transpose();
        x = sys.A * x + sys.B * in;
    }
    return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& M) {
    std::ofstream out(path);
    if (!out) throw ValidationError("io", "cannot write " + path.string());
    csv::set_precision(out);
    out << M.rows() << ',' << M.cols() << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        if (M.cols() > 0) csv::write_row(out, M.row(i));
        out << '\n';
    }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("io", "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("io", "empty matrix file " + path.string());
    const auto shape = csv::split(line);
    if (shape.size() != 2) throw ValidationError("io", "matrix file must start with 'rows,cols'");
    const long rows = csv::to_long(shape[0], "matrix shape");
    const long cols = csv::to_long(shape[1], "matrix shape");
    Matrix M(rows, cols);
    for (long i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) throw ValidationError("io", "matrix file truncated: " + path.string());
        if (cols == 0) continue;
        const auto cells = csv::split(line);
        if (static_cast<long>(cells.size()) != cols) throw ValidationError("io", "bad row width in " + path.string());
        for (long j = 0; j < cols; ++j) M(i, j) = csv::to_double(cells[static_cast<std::size_t>(j)], "matrix");
    }
    return M;
}

void write_filter_bundle(const std::filesystem::path& dir, const FaultEstimationFilter& filter,
                         const FilterManifest& manifest) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "manifest.csv");
        if (!out) throw ValidationError("io", "cannot write filter manifest in " + dir.string());
        csv::set_precision(out);
        out << "order,n_u,n_y,n_f,strategy,poles\n"
            << filter.order() << ',' << filter.inputs() << ',' << filter.outputs() << ',' << filter.faults() << ','
            << manifest.strategy << ',' << format_complex_list(manifest.poles) << '\n';
    }
    write_matrix_csv(dir / "Af.csv", filter.Af());
    write_matrix_csv(dir / "Bu.csv", filter.Bu());
    write_matrix_csv(dir / "By.csv", filter.By());
    write_matrix_csv(dir / "Cf.csv", filter.Cf());
    write_matrix_csv(dir / "Du.csv", filter.Du());
    write_matrix_csv(dir / "Dy.csv", filter.Dy());
}

FaultEstimationFilter read_filter_bundle(const std::filesystem::path& dir, FilterManifest* manifest) {
    std::ifstream in(dir / "manifest.csv");
    if (!in) throw ValidationError("io", "missing filter manifest in " + dir.string());
    std::string line;
    csv::next_line(in, line);
    if (!csv::next_line(in, line)) throw ValidationError("io", "filter manifest has no values");
    const auto cells = csv::split(line);
    if (cells.size() != 6) throw ValidationError("io", "filter manifest needs 6 fields");
    FaultEstimationFilter filter(read_matrix_csv(dir / "Af.csv"), read_matrix_csv(dir / "Bu.csv"),
                                 read_matrix_csv(dir / "By.csv"), read_matrix_csv(dir / "Cf.csv"),
                                 read_matrix_csv(dir / "Du.csv"), read_matrix_csv(dir / "Dy.csv"));
    if (csv::to_long(cells[0], "manifest") != filter.order() || csv::to_long(cells[1], "manifest") != filter.inputs() ||
        csv::to_long(cells[2], "manifest") != filter.outputs() || csv::to_long(cells[3], "manifest") != filter.faults())
        throw ValidationError("io", "filter manifest does not match the stored matrices");
    if (manifest != nullptr) {
        manifest->strategy = cells[4];
        manifest->poles = parse_complex_list(cells[5]);
    }
    return filter;
}

}  // namespace dfest
