#include "regressor_impl.hpp"

#include "counterlens/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace counterlens::detail {

namespace {

struct Hinge {
    int var = 0;
    double knot = 0.0;
    int dir = 1;  // +1: max(0, x - knot), -1: max(0, knot - x)

    double eval(double x) const { return std::max(0.0, dir > 0 ? x - knot : knot - x); }
};

class MarsRegressor final : public Regressor {
public:
    MarsRegressor(std::vector<Hinge> terms, Vector coef) : terms_(std::move(terms)), coef_(std::move(coef)) {}

    Vector predict(const Matrix& z) const override {
        Vector out = Vector::Constant(z.rows(), coef_[0]);
        for (std::size_t k = 0; k < terms_.size(); ++k) {
            const auto& h = terms_[k];
            for (Index i = 0; i < z.rows(); ++i)
                out[i] += coef_[static_cast<Index>(k + 1)] * h.eval(z(i, h.var));
        }
        return out;
    }

    nlohmann::json parameters() const override {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& h : terms_)
            terms.push_back({h.var, h.knot, h.dir});
        return {{"terms", terms}, {"coefficients", vector_to_json(coef_)}};
    }

private:
    std::vector<Hinge> terms_;
    Vector coef_;  // intercept first
};

Vector hinge_column(const Matrix& z, const Hinge& h) {
    Vector b(z.rows());
    for (Index i = 0; i < z.rows(); ++i)
        b[i] = h.eval(z(i, h.var));
    return b;
}

/// Residual SSE of the least-squares fit restricted to `subset` of the Gram
/// system, with y centered.
double subset_rss(const Matrix& gram, const Vector& cross, double yy, const std::vector<int>& subset) {
    const Index m = static_cast<Index>(subset.size());
    Matrix g(m, m);
    Vector c(m);
    for (Index a = 0; a < m; ++a) {
        c[a] = cross[subset[static_cast<std::size_t>(a)]];
        for (Index b = 0; b < m; ++b)
            g(a, b) = gram(subset[static_cast<std::size_t>(a)], subset[static_cast<std::size_t>(b)]);
    }
    const double jitter = 1e-12 * std::max(1.0, g.diagonal().maxCoeff());
    g.diagonal().array() += jitter;
    const Vector beta = g.ldlt().solve(c);
    return std::max(0.0, yy - c.dot(beta));
}

std::vector<double> knot_candidates(std::vector<double> values, int max_knots) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() <= 2)
        return {};
    std::vector<double> interior(values.begin() + 1, values.end() - 1);
    if (max_knots <= 0 || interior.size() <= static_cast<std::size_t>(max_knots))
        return interior;
    std::vector<double> picked;
    const auto m = interior.size();
    for (int q = 0; q < max_knots; ++q) {
        const auto idx = static_cast<std::size_t>((static_cast<double>(q) + 0.5) * static_cast<double>(m) / max_knots);
        picked.push_back(interior[std::min(idx, m - 1)]);
    }
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    return picked;
}

} // namespace

// Additive MARS: forward selection of reflected hinge pairs, then backward
// elimination scored by generalized cross-validation.
FitOutput fit_mars(const ModelSpec& spec, const Matrix& z, const Vector& y) {
    const Index n = z.rows();
    const int p = static_cast<int>(z.cols());
    int max_terms = as_count(spec.param("max_terms"), "max_terms", 0);
    if (max_terms == 0)
        max_terms = 2 * p;
    const double penalty = spec.param("penalty");
    const int max_knots = as_count(spec.param("max_knots"), "max_knots", 0);
    const double threshold = spec.param("threshold");
    if (penalty < 0.0 || threshold < 0.0)
        throw ConfigError("mars: penalty and threshold must be nonnegative");
    max_terms = static_cast<int>(std::min<Index>(max_terms, std::max<Index>(0, n - 2)));

    const double ybar = y.mean();
    Vector r = y.array() - ybar;
    const double sst = r.squaredNorm();

    std::vector<std::vector<double>> knots(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j)
        knots[static_cast<std::size_t>(j)] =
            knot_candidates(std::vector<double>(z.col(j).data(), z.col(j).data() + n), max_knots);
    const SortedColumns sorted(z);

    // Orthonormal basis of the current model, intercept first.
    Matrix q(n, max_terms + 1);
    q.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    int m = 1;
    std::vector<Hinge> terms;

    while (sst > 0.0 && static_cast<int>(terms.size()) + 1 <= max_terms && r.squaredNorm() > 1e-12 * sst) {
        double best_red = 0.0;
        int best_var = -1;
        double best_knot = 0.0;

        const auto qm = q.leftCols(m);
        for (int j = 0; j < p; ++j) {
            const auto& cand = knots[static_cast<std::size_t>(j)];
            if (cand.empty())
                continue;
            // Totals over all rows.
            const Vector s_tot = qm.colwise().sum().transpose();
            const Vector t_tot = qm.transpose() * z.col(j);
            const double cnt_tot = static_cast<double>(n), sx_tot = z.col(j).sum(), sxx_tot = z.col(j).squaredNorm();
            const double sr_tot = r.sum(), srx_tot = r.dot(z.col(j));

            // Running sums over rows with x > t, sweeping t downward.
            Vector s_a = Vector::Zero(m), t_a = Vector::Zero(m);
            double cnt = 0, sx = 0, sxx = 0, sr = 0, srx = 0;
            const auto& order = sorted.order(j);
            std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(order.size()) - 1;
            auto next_knot = static_cast<std::ptrdiff_t>(cand.size()) - 1;
            while (pos >= 0 && next_knot >= 0) {
                const double v = z(order[static_cast<std::size_t>(pos)], j);
                // Rows strictly above v are accumulated; evaluate candidates >= v.
                while (next_knot >= 0 && cand[static_cast<std::size_t>(next_knot)] >= v) {
                    const double t = cand[static_cast<std::size_t>(next_knot)];
                    const Vector qb1 = t_a - t * s_a;
                    const Vector qb2 = t * (s_tot - s_a) - (t_tot - t_a);
                    const double b1b1 = sxx - 2 * t * sx + t * t * cnt;
                    const double cb = cnt_tot - cnt, sxb = sx_tot - sx, sxxb = sxx_tot - sxx;
                    const double b2b2 = t * t * cb - 2 * t * sxb + sxxb;
                    const double b1r = srx - t * sr;
                    const double b2r = t * (sr_tot - sr) - (srx_tot - srx);
                    const double n1 = b1b1 - qb1.squaredNorm();
                    double red = 0.0;
                    const bool ok1 = n1 > 1e-9 * b1b1 && b1b1 > 0.0;
                    if (ok1)
                        red += b1r * b1r / n1;
                    double u2u2 = b2b2 - qb2.squaredNorm();
                    double u2r = b2r;
                    if (ok1) {
                        const double u2u1 = -qb2.dot(qb1);
                        u2u2 -= u2u1 * u2u1 / n1;
                        u2r -= u2u1 / n1 * b1r;
                    }
                    if (u2u2 > 1e-9 * b2b2 && b2b2 > 0.0)
                        red += u2r * u2r / u2u2;
                    if (red > best_red) {
                        best_red = red;
                        best_var = j;
                        best_knot = t;
                    }
                    --next_knot;
                }
                // Add every row with value v.
                while (pos >= 0 && z(order[static_cast<std::size_t>(pos)], j) == v) {
                    const int i = order[static_cast<std::size_t>(pos)];
                    const double xv = z(i, j);
                    s_a += qm.row(i).transpose();
                    t_a += xv * qm.row(i).transpose();
                    cnt += 1;
                    sx += xv;
                    sxx += xv * xv;
                    sr += r[i];
                    srx += r[i] * xv;
                    --pos;
                }
            }
        }

        if (best_var < 0 || best_red < threshold * sst)
            break;

        for (int dir : {1, -1}) {
            if (static_cast<int>(terms.size()) >= max_terms)
                break;
            Hinge h{best_var, best_knot, dir};
            Vector b = hinge_column(z, h);
            const double bn = b.squaredNorm();
            Vector u = b;
            for (int pass = 0; pass < 2; ++pass)
                u -= q.leftCols(m) * (q.leftCols(m).transpose() * u);
            const double un = u.squaredNorm();
            if (!(bn > 0.0) || un <= 1e-9 * bn)
                continue;
            u /= std::sqrt(un);
            q.col(m) = u;
            ++m;
            r -= u.dot(r) * u;
            terms.push_back(h);
        }
    }

    // Backward elimination by GCV.
    const Index total = static_cast<Index>(terms.size()) + 1;
    Matrix basis(n, total);
    basis.col(0).setOnes();
    for (Index k = 1; k < total; ++k)
        basis.col(k) = hinge_column(z, terms[static_cast<std::size_t>(k - 1)]);
    const Vector yc = y.array() - ybar;
    const Matrix gram = basis.transpose() * basis;
    const Vector cross = basis.transpose() * yc;
    const double yy = yc.squaredNorm();

    auto gcv = [&](double rss, Index size) {
        const double c = static_cast<double>(size) + penalty * static_cast<double>(size - 1) / 2.0;
        const double nd = static_cast<double>(n);
        if (c >= nd)
            return std::numeric_limits<double>::infinity();
        const double d = 1.0 - c / nd;
        return rss / nd / (d * d);
    };

    std::vector<int> current(static_cast<std::size_t>(total));
    for (Index k = 0; k < total; ++k)
        current[static_cast<std::size_t>(k)] = static_cast<int>(k);
    std::vector<int> best_subset = current;
    double best_gcv = gcv(subset_rss(gram, cross, yy, current), total);
    while (current.size() > 1) {
        double best_rss = std::numeric_limits<double>::infinity();
        std::size_t drop = 0;
        for (std::size_t a = 1; a < current.size(); ++a) {
            std::vector<int> trial;
            for (std::size_t b = 0; b < current.size(); ++b)
                if (b != a)
                    trial.push_back(current[b]);
            const double rss = subset_rss(gram, cross, yy, trial);
            if (rss < best_rss) {
                best_rss = rss;
                drop = a;
            }
        }
        current.erase(current.begin() + static_cast<std::ptrdiff_t>(drop));
        const double g = gcv(best_rss, static_cast<Index>(current.size()));
        if (g <= best_gcv) {
            best_gcv = g;
            best_subset = current;
        }
    }

    std::vector<Hinge> kept;
    Matrix design(n, static_cast<Index>(best_subset.size()));
    for (std::size_t a = 0; a < best_subset.size(); ++a) {
        design.col(static_cast<Index>(a)) = basis.col(best_subset[a]);
        if (best_subset[a] > 0)
            kept.push_back(terms[static_cast<std::size_t>(best_subset[a] - 1)]);
    }
    Vector coef = design.colPivHouseholderQr().solve(y);
    if (!coef.allFinite())
        throw NumericalError("mars: least-squares solution is not finite");

    FitOutput out;
    out.raw_importance.assign(static_cast<std::size_t>(p), 0.0);
    const double rss_final = subset_rss(gram, cross, yy, best_subset);
    for (int j = 0; j < p; ++j) {
        std::vector<int> without;
        bool uses = false;
        for (int k : best_subset) {
            if (k > 0 && terms[static_cast<std::size_t>(k - 1)].var == j)
                uses = true;
            else
                without.push_back(k);
        }
        if (uses)
            out.raw_importance[static_cast<std::size_t>(j)] = std::max(0.0, subset_rss(gram, cross, yy, without) - rss_final);
    }
    out.source = ImportanceSource::term_gain;
    out.model = std::make_unique<MarsRegressor>(std::move(kept), std::move(coef));
    return out;
}

std::unique_ptr<Regressor> load_mars(const nlohmann::json& params) {
    std::vector<Hinge> terms;
    for (const auto& t : params.at("terms"))
        terms.push_back({t.at(0).get<int>(), t.at(1).get<double>(), t.at(2).get<int>()});
    Vector coef = json_to_vector(params.at("coefficients"));
    if (coef.size() != static_cast<Index>(terms.size()) + 1)
        throw FormatError("mars: coefficient count does not match terms");
    return std::make_unique<MarsRegressor>(std::move(terms), std::move(coef));
}

} // namespace counterlens::detail
