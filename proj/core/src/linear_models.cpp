#include "regressor_impl.hpp"

#include "counterlens/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace counterlens::detail {

namespace {

/// Linear predictor in standardized space: y = intercept + z * coef.
class LinearRegressor final : public Regressor {
public:
    LinearRegressor(double intercept, Vector coef, int ncomp)
        : intercept_(intercept), coef_(std::move(coef)), ncomp_(ncomp) {}

    Vector predict(const Matrix& z) const override {
        return (z * coef_).array() + intercept_;
    }
    nlohmann::json parameters() const override {
        nlohmann::json p = {{"intercept", intercept_}, {"coefficients", vector_to_json(coef_)}};
        if (ncomp_ > 0)
            p["ncomp"] = ncomp_;
        return p;
    }
    std::optional<std::pair<double, Vector>> standardized_linear() const override {
        return std::make_pair(intercept_, coef_);
    }

private:
    double intercept_;
    Vector coef_;
    int ncomp_;
};

Vector ridge_coefficients(const Matrix& z, const Vector& yc, double lambda) {
    const Index n = z.rows();
    const Index p = z.cols();
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(z);
        qr.setThreshold(1e-10);
        if (qr.rank() < p)
            throw NumericalError("ridge: design matrix is rank deficient and lambda is 0");
        return qr.solve(yc);
    }
    Matrix a(n + p, p);
    a.topRows(n) = z;
    a.bottomRows(p) = std::sqrt(static_cast<double>(n) * lambda) * Matrix::Identity(p, p);
    Vector b = Vector::Zero(n + p);
    b.head(n) = yc;
    return a.householderQr().solve(b);
}

Vector elastic_net_coefficients(const Matrix& z, const Vector& yc, double alpha, double lambda, int max_iter,
                                double tol) {
    const Index n = z.rows();
    const Index p = z.cols();
    const double sd_y = std::sqrt(yc.squaredNorm() / static_cast<double>(n));
    Vector beta = Vector::Zero(p);
    if (sd_y == 0.0)
        return beta;
    const Vector ys = yc / sd_y;
    Vector r = ys;
    Vector col_sq(p);
    for (Index j = 0; j < p; ++j)
        col_sq[j] = z.col(j).squaredNorm() / static_cast<double>(n);
    const double l1 = lambda * alpha;
    const double l2 = lambda * (1.0 - alpha);

    for (int it = 0; it < max_iter; ++it) {
        double max_delta = 0.0;
        for (Index j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0)
                continue;
            const double rho = z.col(j).dot(r) / static_cast<double>(n) + col_sq[j] * beta[j];
            const double shrunk = std::copysign(std::max(std::abs(rho) - l1, 0.0), rho);
            const double updated = shrunk / (col_sq[j] + l2);
            const double delta = updated - beta[j];
            if (delta != 0.0) {
                r -= delta * z.col(j);
                beta[j] = updated;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta < tol)
            break;
    }
    return beta * sd_y;
}

/// Coefficients of principal-component regression for every k = 1..kmax.
std::vector<Vector> pcr_path(const Matrix& z, const Vector& yc, int kmax) {
    Eigen::BDCSVD<Matrix> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double tol = s.size() ? s[0] * 1e-12 * static_cast<double>(std::max(z.rows(), z.cols())) : 0.0;
    std::vector<Vector> path;
    Vector beta = Vector::Zero(z.cols());
    for (int k = 0; k < kmax; ++k) {
        if (k < s.size() && s[k] > tol) {
            const double gamma = svd.matrixU().col(k).dot(yc) / s[k];
            beta += gamma * svd.matrixV().col(k);
        }
        path.push_back(beta);
    }
    return path;
}

/// NIPALS PLS1 coefficients for every k = 1..kmax.
std::vector<Vector> pls_path(const Matrix& z, const Vector& yc, int kmax) {
    const Index p = z.cols();
    Matrix x = z;
    Vector yk = yc;
    Matrix w_mat(p, kmax), p_mat(p, kmax);
    Vector q(kmax);
    std::vector<Vector> path;
    int built = 0;
    for (int a = 0; a < kmax; ++a) {
        Vector w = x.transpose() * yk;
        const double wn = w.norm();
        if (wn <= 1e-14 * (1.0 + yc.norm())) {
            path.push_back(path.empty() ? Vector::Zero(p) : path.back());
            continue;
        }
        w /= wn;
        const Vector t = x * w;
        const double tt = t.squaredNorm();
        const Vector loading = x.transpose() * t / tt;
        const double qa = yk.dot(t) / tt;
        x -= t * loading.transpose();
        yk -= qa * t;
        w_mat.col(built) = w;
        p_mat.col(built) = loading;
        q[built] = qa;
        ++built;
        const Matrix pw = p_mat.leftCols(built).transpose() * w_mat.leftCols(built);
        path.push_back(w_mat.leftCols(built) * pw.partialPivLu().solve(q.head(built)));
    }
    return path;
}

int select_components(Method method, const Matrix& z, const Vector& y, std::uint64_t seed, int kmax) {
    const Index n = z.rows();
    const int folds = static_cast<int>(std::min<Index>(5, n));
    if (folds < 2 || kmax <= 1)
        return std::max(1, kmax);
    Rng rng(stream_seed(seed, method == Method::pcr ? "pcr" : "pls"));
    auto perm = rng.permutation(static_cast<std::size_t>(n));
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (std::size_t pos = 0; pos < perm.size(); ++pos)
        fold_of[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));

    std::vector<double> sse(static_cast<std::size_t>(kmax), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i)
            (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Index nt = static_cast<Index>(train.size());
        const int k_fold = static_cast<int>(std::min<Index>(kmax, nt - 1));
        Matrix zt(nt, z.cols());
        Vector yt(nt);
        for (Index i = 0; i < nt; ++i) {
            zt.row(i) = z.row(train[static_cast<std::size_t>(i)]);
            yt[i] = y[train[static_cast<std::size_t>(i)]];
        }
        const double ybar = yt.mean();
        const Vector ytc = yt.array() - ybar;
        const auto path = method == Method::pcr ? pcr_path(zt, ytc, std::max(1, k_fold)) : pls_path(zt, ytc, std::max(1, k_fold));
        for (int k = 0; k < kmax; ++k) {
            const Vector& beta = path[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(path.size()) - 1))];
            for (Index i : test) {
                const double e = y[i] - (ybar + z.row(i).dot(beta));
                sse[static_cast<std::size_t>(k)] += e * e;
            }
        }
    }
    int best = 0;
    for (int k = 1; k < kmax; ++k)
        if (sse[static_cast<std::size_t>(k)] < sse[static_cast<std::size_t>(best)])
            best = k;
    return best + 1;
}

} // namespace

FitOutput fit_linear(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    const Index n = z.rows();
    const Index p = z.cols();
    const double ybar = y.mean();
    const Vector yc = y.array() - ybar;
    Vector beta;
    int ncomp = 0;

    switch (spec.method) {
    case Method::ridge: {
        const double lambda = spec.param("lambda");
        if (lambda < 0.0)
            throw ConfigError("ridge: lambda must be nonnegative");
        beta = ridge_coefficients(z, yc, lambda);
        break;
    }
    case Method::elastic_net: {
        const double alpha = spec.param("alpha");
        const double lambda = spec.param("lambda");
        if (alpha < 0.0 || alpha > 1.0 || lambda < 0.0)
            throw ConfigError("elastic_net: need 0 <= alpha <= 1 and lambda >= 0");
        if (lambda == 0.0 && n <= p)
            throw NumericalError("elastic_net: unregularized problem with n <= p is singular");
        beta = elastic_net_coefficients(z, yc, alpha, lambda, as_count(spec.param("max_iter"), "max_iter", 1),
                                        spec.param("tol"));
        break;
    }
    case Method::pcr:
    case Method::pls: {
        const int limit = static_cast<int>(std::min<Index>(p, n - 1));
        if (limit < 1)
            throw SizeError(std::string(to_string(spec.method)) + ": needs at least 2 rows");
        int requested = as_count(spec.param("ncomp"), "ncomp", 0);
        if (requested > limit)
            throw ConfigError(std::string(to_string(spec.method)) + ": ncomp exceeds min(p, n-1)");
        ncomp = requested > 0 ? requested
                              : select_components(spec.method, z, y, spec.seed, limit);
        const auto path = spec.method == Method::pcr ? pcr_path(z, yc, ncomp) : pls_path(z, yc, ncomp);
        beta = path.back();
        break;
    }
    default:
        throw ConfigError("not a linear method");
    }
    if (!beta.allFinite())
        throw NumericalError(std::string(to_string(spec.method)) + ": solution is not finite");

    FitOutput out;
    out.raw_importance.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j)
        out.raw_importance[static_cast<std::size_t>(j)] = std::abs(beta[j]);
    out.source = ImportanceSource::coefficients;
    out.model = std::make_unique<LinearRegressor>(ybar, std::move(beta), ncomp);
    return out;
}

std::unique_ptr<Regressor> load_linear(const nlohmann::json& params) {
    return std::make_unique<LinearRegressor>(params.at("intercept").get<double>(),
                                             json_to_vector(params.at("coefficients")),
                                             params.value("ncomp", 0));
}

} // namespace counterlens::detail
