#include "atelier/numerics.hpp"

#include "atelier/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace atelier {

void require_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
    if (!m.allFinite()) {
        throw NumericError(std::string(what) + ": non-finite entries");
    }
}

// ---------------------------------------------------------------------------
// SimplexVector

SimplexVector::SimplexVector(Vector weights, double tol) : weights_(std::move(weights)) {
    if (weights_.size() == 0) {
        throw InvalidArgument("simplex vector must be non-empty");
    }
    if (!weights_.allFinite()) {
        throw InvalidArgument("simplex vector has non-finite weights");
    }
    if (weights_.minCoeff() < 0.0) {
        throw InvalidArgument("simplex vector has a negative weight");
    }
    if (std::abs(weights_.sum() - 1.0) > tol) {
        throw InvalidArgument("simplex vector weights sum to " + std::to_string(weights_.sum()) + ", expected 1");
    }
}

SimplexVector SimplexVector::vertex(Eigen::Index dim, Eigen::Index j) {
    if (j < 0 || j >= dim) {
        throw InvalidArgument("vertex index " + std::to_string(j) + " out of range [0, " + std::to_string(dim) + ")");
    }
    Vector w = Vector::Zero(dim);
    w[j] = 1.0;
    return SimplexVector(std::move(w));
}

SimplexVector SimplexVector::uniform(Eigen::Index dim) {
    if (dim <= 0) {
        throw InvalidArgument("simplex dimension must be positive");
    }
    return SimplexVector(Vector::Constant(dim, 1.0 / static_cast<double>(dim)));
}

SimplexVector SimplexVector::renormalized(const Vector& weights) {
    if (weights.size() == 0 || !weights.allFinite()) {
        throw InvalidArgument("cannot renormalize an empty or non-finite vector");
    }
    Vector w = weights.cwiseMax(0.0);
    const double total = w.sum();
    if (total <= 0.0) {
        throw InvalidArgument("cannot renormalize a vector without positive mass");
    }
    w /= total;
    return SimplexVector(std::move(w));
}

Eigen::Index SimplexVector::argmax() const {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < weights_.size(); ++i) {
        if (weights_[i] > weights_[best]) best = i;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Symmetric eigenproblems

EigenDecomposition sym_eig(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw InvalidArgument("sym_eig: matrix is not square");
    }
    require_finite(a, "sym_eig");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
    if (solver.info() != Eigen::Success) {
        throw NumericError("sym_eig: eigensolver did not converge");
    }
    // Eigen returns ascending order.
    EigenDecomposition out;
    out.eigenvalues = solver.eigenvalues().reverse();
    out.eigenvectors = solver.eigenvectors().rowwise().reverse();
    return out;
}

Matrix sym_matrix_power(const Matrix& a, MatrixPower power, double eps) {
    const EigenDecomposition eig = sym_eig(a);
    const Eigen::Index n = eig.eigenvalues.size();
    const double lambda_max = n > 0 ? eig.eigenvalues[0] : 0.0;
    if (!(lambda_max > 0.0)) {
        throw NumericError("degenerate covariance");
    }
    const double floor = eps * lambda_max;
    Vector scale = Vector::Zero(n);
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lambda = eig.eigenvalues[i];
        if (lambda <= floor) break;  // sorted descending
        scale[i] = power == MatrixPower::Sqrt ? std::sqrt(lambda) : 1.0 / std::sqrt(lambda);
        ++kept;
    }
    const auto basis = eig.eigenvectors.leftCols(kept);
    Matrix out = basis * scale.head(kept).asDiagonal() * basis.transpose();
    return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Simplex projection

SimplexVector project_simplex(const Vector& v) {
    if (v.size() == 0) {
        throw InvalidArgument("project_simplex: empty vector");
    }
    require_finite(v, "project_simplex");
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double tau = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        cumulative += sorted[i];
        const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (sorted[i] - candidate > 0.0) tau = candidate;
    }
    Vector w = (v.array() - tau).cwiseMax(0.0);
    // Rounding can leave the sum a few ulps away from one.
    w /= w.sum();
    return SimplexVector(std::move(w));
}

// ---------------------------------------------------------------------------
// Simplex-constrained least squares

SimplexQp SimplexQp::from_least_squares(const Matrix& z, const Vector& x) {
    if (z.rows() != x.size()) {
        throw InvalidArgument("simplex_lsq: Z has " + std::to_string(z.rows()) + " rows but x has " +
                              std::to_string(x.size()) + " entries");
    }
    if (z.cols() < 1) {
        throw InvalidArgument("simplex_lsq: Z must have at least one column");
    }
    require_finite(z, "simplex_lsq Z");
    require_finite(x, "simplex_lsq x");
    SimplexQp qp;
    qp.gram = z.transpose() * z;
    qp.linear = z.transpose() * x;
    qp.constant = x.squaredNorm();
    return qp;
}

double SimplexQp::objective(const Vector& a) const {
    return a.dot(gram * a) - 2.0 * linear.dot(a) + constant;
}

namespace {

double qp_scale(const SimplexQp& qp) {
    const double s = std::max(qp.gram.diagonal().cwiseAbs().maxCoeff(), qp.linear.cwiseAbs().maxCoeff());
    return s > 0.0 ? s : 1.0;
}

}  // namespace

double SimplexQp::kkt_residual(const Vector& a) const {
    const Vector g = gram * a - linear;
    const double lambda = a.dot(g);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        worst = std::max(worst, lambda - g[i]);
        if (a[i] > 0.0) worst = std::max(worst, std::abs(g[i] - lambda));
    }
    return worst / qp_scale(*this);
}

namespace {

Eigen::Index best_vertex(const SimplexQp& qp) {
    const Eigen::Index k = qp.linear.size();
    Eigen::Index best = 0;
    double best_value = qp.gram(0, 0) - 2.0 * qp.linear[0];
    for (Eigen::Index j = 1; j < k; ++j) {
        const double value = qp.gram(j, j) - 2.0 * qp.linear[j];
        if (value < best_value) {
            best_value = value;
            best = j;
        }
    }
    return best;
}

Vector starting_point(const SimplexQp& qp, const std::optional<SimplexVector>& warm) {
    const Eigen::Index k = qp.linear.size();
    if (warm && warm->size() == k) {
        return warm->weights();
    }
    Vector a = Vector::Zero(k);
    a[best_vertex(qp)] = 1.0;
    return a;
}

/// Minimizer of the QP restricted to the affine hull of the indices in `support`
/// (sum-to-one, no sign constraints). The first support index is eliminated.
Vector solve_equality_subproblem(const SimplexQp& qp, const std::vector<Eigen::Index>& support) {
    const Eigen::Index k = qp.linear.size();
    Vector s = Vector::Zero(k);
    const Eigen::Index pivot = support.front();
    const auto m = static_cast<Eigen::Index>(support.size()) - 1;
    if (m == 0) {
        s[pivot] = 1.0;
        return s;
    }
    const Matrix& g = qp.gram;
    Matrix h(m, m);
    Vector b(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index i = support[static_cast<std::size_t>(r + 1)];
        b[r] = qp.linear[i] - qp.linear[pivot] - g(i, pivot) + g(pivot, pivot);
        for (Eigen::Index c = 0; c <= r; ++c) {
            const Eigen::Index j = support[static_cast<std::size_t>(c + 1)];
            h(r, c) = g(i, j) - g(i, pivot) - g(pivot, j) + g(pivot, pivot);
            h(c, r) = h(r, c);
        }
    }
    Vector y;
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() == Eigen::Success) {
        y = llt.solve(b);
    }
    if (y.size() != m || !y.allFinite()) {
        y = h.completeOrthogonalDecomposition().solve(b);
    }
    for (Eigen::Index r = 0; r < m; ++r) {
        s[support[static_cast<std::size_t>(r + 1)]] = y[r];
    }
    s[pivot] = 1.0 - y.sum();
    return s;
}

}  // namespace

SimplexVector simplex_qp_active_set(const SimplexQp& qp, const std::optional<SimplexVector>& warm,
                                    const SimplexLsqOptions& options) {
    const Eigen::Index k = qp.linear.size();
    if (k < 1 || qp.gram.rows() != k || qp.gram.cols() != k) {
        throw InvalidArgument("simplex QP: inconsistent dimensions");
    }
    Vector a = starting_point(qp, warm);
    std::vector<bool> in_support(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) in_support[static_cast<std::size_t>(i)] = a[i] > 0.0;

    const double scale = qp_scale(qp);
    const double tol = options.kkt_tolerance * scale;
    const int max_iterations = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(50 * k + 100);

    bool converged = false;
    for (int iter = 0; iter < max_iterations; ++iter) {
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (in_support[static_cast<std::size_t>(i)]) support.push_back(i);
        }
        const Vector s = solve_equality_subproblem(qp, support);

        // Ratio test against the current iterate; ties resolved by lowest index.
        double step = 1.0;
        Eigen::Index blocking = -1;
        for (const Eigen::Index i : support) {
            if (s[i] < 0.0) {
                const double t = a[i] / (a[i] - s[i]);
                if (t < step) {
                    step = t;
                    blocking = i;
                }
            }
        }
        if (blocking >= 0) {
            a += step * (s - a);
            a[blocking] = 0.0;
            in_support[static_cast<std::size_t>(blocking)] = false;
            for (const Eigen::Index i : support) {
                if (a[i] <= 0.0) {
                    a[i] = 0.0;
                    in_support[static_cast<std::size_t>(i)] = false;
                }
            }
            continue;
        }

        a = s;
        const Vector g = qp.gram * a - qp.linear;
        double lambda = 0.0;
        for (const Eigen::Index i : support) lambda += g[i];
        lambda /= static_cast<double>(support.size());
        Eigen::Index entering = -1;
        double most_negative = -tol;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (in_support[static_cast<std::size_t>(j)]) continue;
            const double reduced = g[j] - lambda;
            if (reduced < most_negative) {
                most_negative = reduced;
                entering = j;
            }
        }
        if (entering < 0) {
            converged = true;
            break;
        }
        in_support[static_cast<std::size_t>(entering)] = true;
    }

    a = a.cwiseMax(0.0);
    a /= a.sum();
    if (!converged) {
        // Degenerate pivoting; polish with the gradient method and keep the better point.
        SimplexVector polished = simplex_qp_projected_gradient(qp, SimplexVector::renormalized(a), options);
        if (qp.objective(polished.weights()) < qp.objective(a)) {
            return polished;
        }
    }
    return SimplexVector(std::move(a), 1e-9);
}

SimplexVector simplex_qp_projected_gradient(const SimplexQp& qp, const std::optional<SimplexVector>& warm,
                                            const SimplexLsqOptions& options) {
    const Eigen::Index k = qp.linear.size();
    if (k < 1 || qp.gram.rows() != k || qp.gram.cols() != k) {
        throw InvalidArgument("simplex QP: inconsistent dimensions");
    }
    // Lipschitz constant of the gradient 2(Ga - c): Gershgorin bound on 2*lambda_max(G).
    const double row_bound = qp.gram.cwiseAbs().rowwise().sum().maxCoeff();
    const double lipschitz = 2.0 * std::max(std::min(row_bound, qp.gram.trace()), 1e-300);

    Vector a = starting_point(qp, warm);
    Vector y = a;
    double t = 1.0;
    double f_prev = qp.objective(a);
    for (int iter = 0; iter < options.gradient_iterations; ++iter) {
        const Vector grad = 2.0 * (qp.gram * y - qp.linear);
        Vector next = project_simplex(y - grad / lipschitz).weights();
        const double f_next = qp.objective(next);
        if (f_next > f_prev) {
            // Adaptive restart: drop momentum and take a plain projected step from a.
            t = 1.0;
            y = a;
            const Vector plain_grad = 2.0 * (qp.gram * a - qp.linear);
            next = project_simplex(a - plain_grad / lipschitz).weights();
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double change = (next - a).cwiseAbs().maxCoeff();
        y = next + ((t - 1.0) / t_next) * (next - a);
        a = std::move(next);
        t = t_next;
        f_prev = qp.objective(a);
        if (change < 1e-14 || (iter % 25 == 0 && qp.kkt_residual(a) < options.kkt_tolerance)) break;
    }
    return SimplexVector(std::move(a), 1e-9);
}

SimplexVector solve_simplex_qp(const SimplexQp& qp, const std::optional<SimplexVector>& warm,
                               const SimplexLsqOptions& options) {
    if (qp.linear.size() > options.active_set_limit) {
        return simplex_qp_projected_gradient(qp, warm, options);
    }
    return simplex_qp_active_set(qp, warm, options);
}

SimplexVector simplex_lsq(const Matrix& z, const Vector& x, const std::optional<SimplexVector>& warm,
                          const SimplexLsqOptions& options) {
    if (warm && warm->size() != z.cols()) {
        throw InvalidArgument("simplex_lsq: warm start has wrong dimension");
    }
    return solve_simplex_qp(SimplexQp::from_least_squares(z, x), warm, options);
}

// ---------------------------------------------------------------------------
// Randomized truncated SVD

namespace {

Matrix orthonormal_columns(const Matrix& y) {
    Eigen::HouseholderQR<Matrix> qr(y);
    return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

}  // namespace

TruncatedSvd truncated_svd(const Matrix& x, Eigen::Index rank, std::uint64_t seed, const SvdOptions& options) {
    if (rank <= 0) {
        throw InvalidArgument("truncated_svd: rank must be positive");
    }
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (rank > std::min(n, p)) {
        throw InvalidArgument("truncated_svd: rank " + std::to_string(rank) + " exceeds min(n, p) = " +
                              std::to_string(std::min(n, p)));
    }
    require_finite(x, "truncated_svd");

    const Eigen::Index sketch = std::min(rank + options.oversampling, std::min(n, p));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix omega(p, sketch);
    for (Eigen::Index j = 0; j < sketch; ++j) {
        for (Eigen::Index i = 0; i < p; ++i) omega(i, j) = normal(rng);
    }

    Matrix q = orthonormal_columns(x * omega);
    for (int it = 0; it < options.power_iterations; ++it) {
        const Matrix w = orthonormal_columns(x.transpose() * q);
        q = orthonormal_columns(x * w);
    }
    const Matrix b = q.transpose() * x;  // sketch x p
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

    TruncatedSvd out;
    out.u = q * svd.matrixU().leftCols(rank);
    out.s = svd.singularValues().head(rank);
    out.v = svd.matrixV().leftCols(rank);
    return out;
}

}  // namespace atelier
