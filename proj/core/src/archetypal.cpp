#include "atelier/archetypal.hpp"

#include "atelier/error.hpp"
#include "atelier/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace atelier {

std::vector<Eigen::Index> furthest_sum(const Matrix& x, Eigen::Index k) {
    const Eigen::Index n = x.cols();
    if (k < 1 || k > n) {
        throw InvalidArgument("furthest_sum: need 1 <= k <= n, got k=" + std::to_string(k) + ", n=" + std::to_string(n));
    }
    const Vector mean = x.rowwise().mean();
    Eigen::Index first = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (x.col(i) - mean).norm();
        if (d > best) {
            best = d;
            first = i;
        }
    }
    std::vector<Eigen::Index> chosen{first};
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    taken[static_cast<std::size_t>(first)] = true;
    Vector summed = Vector::Zero(n);
    while (static_cast<Eigen::Index>(chosen.size()) < k) {
        const Eigen::Index last = chosen.back();
        for (Eigen::Index i = 0; i < n; ++i) summed[i] += (x.col(i) - x.col(last)).norm();
        Eigen::Index next = -1;
        double farthest = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!taken[static_cast<std::size_t>(i)] && summed[i] > farthest) {
                farthest = summed[i];
                next = i;
            }
        }
        chosen.push_back(next);
        taken[static_cast<std::size_t>(next)] = true;
    }
    return chosen;
}

double archetype_objective(const Matrix& x, const Matrix& z, const Matrix& alpha) {
    return (x - z * alpha).squaredNorm() / static_cast<double>(x.cols());
}

Eigen::Index default_archetype_count(Eigen::Index n) {
    const Eigen::Index k = n < 2000 ? 32 : 256;
    return std::max<Eigen::Index>(1, std::min(k, n));
}

namespace {

void check_corpus(const Matrix& x) {
    if (x.cols() == 0 || x.rows() == 0) {
        throw InvalidArgument("fit_archetypes: empty corpus");
    }
    require_finite(x, "fit_archetypes");
}

/// Alpha step: every column solved independently, warm-started from the previous code.
/// A code is replaced only if it does not increase its own residual.
void update_codes(const Matrix& x, const Matrix& z, Matrix& alpha, const SimplexLsqOptions& solver) {
    const Matrix gram = z.transpose() * z;
    const Eigen::Index n = x.cols();
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t idx) {
        const auto i = static_cast<Eigen::Index>(idx);
        SimplexQp qp;
        qp.gram = gram;
        qp.linear = z.transpose() * x.col(i);
        qp.constant = x.col(i).squaredNorm();
        const Vector previous = alpha.col(i);
        const SimplexVector warm = SimplexVector::renormalized(previous);
        const SimplexVector next = solve_simplex_qp(qp, warm, solver);
        if (qp.objective(next.weights()) <= qp.objective(previous)) {
            alpha.col(i) = next.weights();
        }
    });
}

}  // namespace

ArchetypeFit fit_archetypes_from(const Matrix& x, const Matrix& initial_beta, const ArchetypeFitOptions& options) {
    check_corpus(x);
    const Eigen::Index n = x.cols();
    const Eigen::Index k = initial_beta.cols();
    if (initial_beta.rows() != n || k < 1) {
        throw InvalidArgument("fit_archetypes: initial beta must be n x k with k >= 1");
    }
    if (k > n) {
        throw InvalidArgument("fit_archetypes: k=" + std::to_string(k) + " exceeds corpus size n=" + std::to_string(n));
    }

    ArchetypeFit fit;
    fit.beta = initial_beta;
    fit.archetypes = x * fit.beta;
    fit.alpha = Matrix::Zero(k, n);
    {
        // Cold start for the codes: nearest archetype.
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k; ++j) {
                const double d = (x.col(i) - fit.archetypes.col(j)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            fit.alpha(best, i) = 1.0;
        }
    }

    // Gram matrix of the data is fixed across the whole fit.
    SimplexQp beta_qp;
    beta_qp.gram = x.transpose() * x;

    update_codes(x, fit.archetypes, fit.alpha, options.solver);
    Matrix residual = x - fit.archetypes * fit.alpha;
    fit.objective_curve.push_back(residual.squaredNorm() / static_cast<double>(n));

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (fit.objective_curve.back() == 0.0) {
            fit.converged = true;
            break;
        }
        // Beta step: one archetype at a time against the residual with its own
        // contribution added back (exact block minimization).
        for (Eigen::Index j = 0; j < k; ++j) {
            const Vector usage = fit.alpha.row(j).transpose();
            const double weight = usage.squaredNorm();
            const Vector old_z = fit.archetypes.col(j);
            Vector new_beta;
            if (weight == 0.0) {
                // Unused archetype: move it onto the worst-explained sample (objective unchanged).
                Eigen::Index worst = 0;
                residual.colwise().squaredNorm().maxCoeff(&worst);
                new_beta = Vector::Zero(n);
                new_beta[worst] = 1.0;
            } else {
                const Vector target = old_z + residual * usage / weight;
                beta_qp.linear = x.transpose() * target;
                beta_qp.constant = target.squaredNorm();
                const Vector old_beta = fit.beta.col(j);
                const SimplexVector solved =
                    solve_simplex_qp(beta_qp, SimplexVector::renormalized(old_beta), options.solver);
                if (beta_qp.objective(solved.weights()) > beta_qp.objective(old_beta)) continue;
                new_beta = solved.weights();
            }
            const Vector new_z = x * new_beta;
            residual.noalias() += (old_z - new_z) * usage.transpose();
            fit.archetypes.col(j) = new_z;
            fit.beta.col(j) = new_beta;
        }
        update_codes(x, fit.archetypes, fit.alpha, options.solver);
        residual = x - fit.archetypes * fit.alpha;
        const double previous = fit.objective_curve.back();
        const double current = residual.squaredNorm() / static_cast<double>(n);
        fit.objective_curve.push_back(current);
        fit.iterations = iter + 1;
        spdlog::debug("archetypes iteration {} objective {:.6e}", fit.iterations, current);
        if (previous - current <= options.tolerance * previous) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

ArchetypeFit fit_archetypes(const Matrix& x, Eigen::Index k, const ArchetypeFitOptions& options) {
    check_corpus(x);
    const Eigen::Index n = x.cols();
    if (k < 1 || k > n) {
        throw InvalidArgument("fit_archetypes: need 1 <= k <= n, got k=" + std::to_string(k) +
                              ", n=" + std::to_string(n));
    }
    const std::vector<Eigen::Index> initial = furthest_sum(x, k);
    Matrix beta = Matrix::Zero(n, k);
    for (Eigen::Index j = 0; j < k; ++j) beta(initial[static_cast<std::size_t>(j)], j) = 1.0;
    ArchetypeFit fit = fit_archetypes_from(x, beta, options);
    fit.initial_points = initial;
    return fit;
}

StyleStats combine_stats(const std::vector<StyleStats>& items, const Vector& weights) {
    if (items.empty() || static_cast<Eigen::Index>(items.size()) != weights.size()) {
        throw InvalidArgument("combine_stats: need one weight per item");
    }
    const LayerSchema schema = schema_of(items.front());
    StyleStats out;
    for (const Eigen::Index p : schema) {
        out.push_back({Vector::Zero(p), Matrix::Zero(p, p)});
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        const double w = weights[static_cast<Eigen::Index>(i)];
        if (w == 0.0) continue;
        if (schema_of(items[i]) != schema) {
            throw SchemaMismatch("combine_stats: item " + std::to_string(i) + " has a different layer schema");
        }
        for (std::size_t l = 0; l < schema.size(); ++l) {
            out[l].mean += w * items[i][l].mean;
            out[l].covariance += w * items[i][l].covariance;
        }
    }
    return out;
}

StyleStats compute_archetype_stats(const Vector& beta, const std::vector<StyleStats>& corpus_stats) {
    if (corpus_stats.empty()) {
        throw InvalidArgument("corpus store required: archetype statistics need the raw per-image statistics");
    }
    return combine_stats(corpus_stats, beta);
}

SimplexVector ArchetypeModel::beta_code(Eigen::Index j) const {
    return SimplexVector::renormalized(beta.col(j));
}

SimplexVector ArchetypeModel::alpha_code(Eigen::Index i) const {
    return SimplexVector::renormalized(alpha.col(i));
}

ArchetypeModel fit_model(const std::vector<StyleStats>& corpus_stats, std::vector<std::string> image_ids,
                         const StyleSchema& schema, const ModelFitOptions& options) {
    const auto n = static_cast<Eigen::Index>(corpus_stats.size());
    if (n < 2) {
        throw InvalidArgument("fit_model: need at least two training images");
    }
    if (static_cast<Eigen::Index>(image_ids.size()) != n) {
        throw InvalidArgument("fit_model: one image id per statistics entry required");
    }
    const Eigen::Index k = options.k > 0 ? options.k : default_archetype_count(n);
    if (k > n) {
        throw InvalidArgument("k=" + std::to_string(k) + " exceeds the number of training images n=" +
                              std::to_string(n));
    }
    const Eigen::Index dim = descriptor_dimension(schema.channels);
    Matrix descriptors(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (schema_of(corpus_stats[static_cast<std::size_t>(i)]) != schema.channels) {
            throw SchemaMismatch("fit_model: image " + image_ids[static_cast<std::size_t>(i)] +
                                 " does not match the layer schema");
        }
        descriptors.row(i) = flatten_stats(corpus_stats[static_cast<std::size_t>(i)]).transpose();
    }

    ArchetypeModel model;
    model.schema = schema;
    model.image_ids = std::move(image_ids);
    model.reducer = fit_reducer(descriptors, options.reducer_rank, options.archetypes.seed);
    model.reduced_corpus.resize(model.reducer.rank, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        model.reduced_corpus.col(i) = model.reducer.reduce(descriptors.row(i).transpose());
    }

    const ArchetypeFit fit = fit_archetypes(model.reduced_corpus, k, options.archetypes);
    model.archetypes = fit.archetypes;
    model.beta = fit.beta;
    model.alpha = fit.alpha;
    model.telemetry.objective_curve = fit.objective_curve;
    model.telemetry.iterations = fit.iterations;
    model.telemetry.converged = fit.converged;
    model.telemetry.seed = options.archetypes.seed;
    model.telemetry.explained_variance_ratio = model.reducer.explained_variance_ratio;
    model.telemetry.centered = true;

    model.archetype_stats.resize(static_cast<std::size_t>(k));
    parallel_for(static_cast<std::size_t>(k), [&](std::size_t j) {
        model.archetype_stats[j] = compute_archetype_stats(model.beta.col(static_cast<Eigen::Index>(j)), corpus_stats);
    });
    return model;
}

const StyleStats& archetype_stats(const ArchetypeModel& model, Eigen::Index j) {
    if (j < 0 || j >= model.k()) {
        throw InvalidArgument("archetype index " + std::to_string(j) + " out of range [0, " +
                              std::to_string(model.k()) + ")");
    }
    if (static_cast<Eigen::Index>(model.archetype_stats.size()) != model.k()) {
        throw InvalidArgument("corpus store required: model carries no archetype statistics");
    }
    return model.archetype_stats[static_cast<std::size_t>(j)];
}

StyleDecomposition decompose_style(const ArchetypeModel& model, const StyleDescriptor& descriptor) {
    if (descriptor.schema() != model.schema.channels) {
        throw SchemaMismatch("encode_style: descriptor layer schema does not match the model");
    }
    const Vector latent = model.reducer.reduce(descriptor.flat);
    StyleDecomposition out;
    out.alpha = simplex_lsq(model.archetypes, latent);
    out.residual = (latent - model.archetypes * out.alpha.weights()).norm();
    const double scale = latent.norm();
    out.relative_residual = scale > 0.0 ? out.residual / scale : 0.0;
    return out;
}

SimplexVector encode_style(const ArchetypeModel& model, const StyleDescriptor& descriptor) {
    return decompose_style(model, descriptor).alpha;
}

MixedStyle mix_style(const ArchetypeModel& model, const Vector& alpha) {
    if (alpha.size() != model.k()) {
        throw InvalidArgument("mix_style: code has " + std::to_string(alpha.size()) + " entries, model has k=" +
                              std::to_string(model.k()));
    }
    if (!alpha.allFinite() || alpha.minCoeff() < -kMixTolerance || std::abs(alpha.sum() - 1.0) > kMixTolerance) {
        throw InvalidArgument("mix_style: code is not on the simplex; renormalize it first");
    }
    MixedStyle out{combine_stats(model.archetype_stats, alpha.cwiseMax(0.0)), SimplexVector::renormalized(alpha)};
    return out;
}

MixedStyle mix_style(const ArchetypeModel& model, const SimplexVector& alpha) {
    return mix_style(model, alpha.weights());
}

SimplexVector enhance_code(const SimplexVector& alpha, Eigen::Index target, double strength) {
    if (target < 0 || target >= alpha.size()) {
        throw InvalidArgument("enhance_code: archetype " + std::to_string(target) + " out of range [0, " +
                              std::to_string(alpha.size()) + ")");
    }
    if (!(strength >= 0.0 && strength <= 1.0)) {
        throw InvalidArgument("enhance_code: strength must lie in [0, 1]");
    }
    Vector w = (1.0 - strength) * alpha.weights();
    w[target] += strength;
    return SimplexVector(std::move(w));
}

}  // namespace atelier
