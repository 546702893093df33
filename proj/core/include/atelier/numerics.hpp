#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace atelier {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Nonnegative weights summing to one.
///
/// Construction validates the invariant; use `project_simplex` or
/// `SimplexVector::renormalized` to obtain one from arbitrary data.
class SimplexVector {
public:
    static constexpr double kSumTolerance = 1e-9;

    SimplexVector() = default;
    /// Throws InvalidArgument if any weight is negative or the sum is off by more than `tol`.
    explicit SimplexVector(Vector weights, double tol = kSumTolerance);

    static SimplexVector vertex(Eigen::Index dim, Eigen::Index j);
    static SimplexVector uniform(Eigen::Index dim);
    /// Clips tiny negatives to zero and rescales to unit sum.
    static SimplexVector renormalized(const Vector& weights);

    [[nodiscard]] const Vector& weights() const { return weights_; }
    [[nodiscard]] Eigen::Index size() const { return weights_.size(); }
    [[nodiscard]] double operator[](Eigen::Index i) const { return weights_[i]; }
    [[nodiscard]] Eigen::Index argmax() const;

private:
    Vector weights_;
};

struct EigenDecomposition {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // columns, orthonormal
};

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
EigenDecomposition sym_eig(const Matrix& a);

enum class MatrixPower { Sqrt, InvSqrt };

inline constexpr double kDefaultEigClamp = 1e-8;

/// A^{1/2} or the pseudo-inverse square root of a PSD matrix.
///
/// Eigenvalues at or below `eps * lambda_max` contribute nothing. Throws
/// NumericError("degenerate covariance") when lambda_max <= 0.
Matrix sym_matrix_power(const Matrix& a, MatrixPower power, double eps = kDefaultEigClamp);

/// Euclidean projection onto the probability simplex (sort and threshold).
SimplexVector project_simplex(const Vector& v);

struct SimplexLsqOptions {
    double kkt_tolerance = 1e-10;
    int max_iterations = 0;            // 0: 50 * k + 100
    Eigen::Index active_set_limit = 512;  // beyond this k the accelerated gradient path is used
    int gradient_iterations = 5000;
};

/// Quadratic form of min_a ||x - Z a||^2 in Gram coordinates:
/// gram = Z^T Z, linear = Z^T x, constant = x^T x.
struct SimplexQp {
    Matrix gram;
    Vector linear;
    double constant = 0.0;

    static SimplexQp from_least_squares(const Matrix& z, const Vector& x);

    /// ||x - Z a||^2 evaluated through the Gram form.
    [[nodiscard]] double objective(const Vector& a) const;
    [[nodiscard]] double kkt_residual(const Vector& a) const;
};

/// Minimizes a^T G a - 2 c^T a over the simplex; dispatches on problem size.
SimplexVector solve_simplex_qp(const SimplexQp& qp, const std::optional<SimplexVector>& warm = std::nullopt,
                               const SimplexLsqOptions& options = {});

/// Primal active-set method with exact KKT certificate. Ties pick the lowest index.
SimplexVector simplex_qp_active_set(const SimplexQp& qp, const std::optional<SimplexVector>& warm,
                                    const SimplexLsqOptions& options = {});

/// Accelerated projected gradient (FISTA with restart).
SimplexVector simplex_qp_projected_gradient(const SimplexQp& qp, const std::optional<SimplexVector>& warm,
                                            const SimplexLsqOptions& options = {});

/// argmin over the simplex of ||x - Z a||^2.
SimplexVector simplex_lsq(const Matrix& z, const Vector& x, const std::optional<SimplexVector>& warm = std::nullopt,
                          const SimplexLsqOptions& options = {});

struct TruncatedSvd {
    Matrix u;      // n x r
    Vector s;      // r, descending
    Matrix v;      // p x r
};

struct SvdOptions {
    Eigen::Index oversampling = 10;
    int power_iterations = 2;
};

/// Randomized range finder followed by a small dense SVD. Deterministic given `seed`.
TruncatedSvd truncated_svd(const Matrix& x, Eigen::Index rank, std::uint64_t seed = 0, const SvdOptions& options = {});

/// Throws NumericError naming `what` when `m` contains NaN or Inf.
void require_finite(const Eigen::Ref<const Matrix>& m, const char* what);

}  // namespace atelier
