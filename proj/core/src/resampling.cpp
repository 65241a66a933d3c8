#include "counterlens/resampling.hpp"

#include "counterlens/metrics.hpp"
#include "counterlens/parallel.hpp"
#include "counterlens/random.hpp"

namespace counterlens {

CvPlan::CvPlan(std::size_t n, int n_folds, int n_repeats, std::uint64_t seed)
    : n_(n), n_folds_(n_folds), n_repeats_(n_repeats), seed_(seed) {
    if (n_folds < 2)
        throw ArgumentError("cross-validation needs at least 2 folds");
    if (n_repeats < 1)
        throw ArgumentError("cross-validation needs at least 1 repeat");
    if (n < static_cast<std::size_t>(n_folds))
        throw SizeError("cannot split " + std::to_string(n) + " rows into " + std::to_string(n_folds) + " folds");

    assignment_.resize(static_cast<std::size_t>(n_repeats));
    for (int r = 0; r < n_repeats; ++r) {
        Rng rng(stream_seed(seed, "cv", static_cast<std::uint64_t>(r)));
        auto perm = rng.permutation(n);
        auto& fold = assignment_[static_cast<std::size_t>(r)];
        fold.resize(n);
        for (std::size_t pos = 0; pos < n; ++pos)
            fold[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(n_folds));
    }
}

std::vector<std::size_t> CvPlan::train_rows(int repeat, int fold) const {
    std::vector<std::size_t> rows;
    const auto& a = assignment_.at(static_cast<std::size_t>(repeat));
    for (std::size_t i = 0; i < n_; ++i)
        if (a[i] != fold)
            rows.push_back(i);
    return rows;
}

std::vector<std::size_t> CvPlan::test_rows(int repeat, int fold) const {
    std::vector<std::size_t> rows;
    const auto& a = assignment_.at(static_cast<std::size_t>(repeat));
    for (std::size_t i = 0; i < n_; ++i)
        if (a[i] == fold)
            rows.push_back(i);
    return rows;
}

nlohmann::json CvPlan::to_json() const {
    return {{"n_folds", n_folds_}, {"n_repeats", n_repeats_}, {"seed", seed_}, {"rows", n_}};
}

OutOfFold out_of_fold(const ModelSpec& spec, const FeatureMatrix& x, const Vector& y, const CvPlan& plan) {
    if (plan.rows() != static_cast<std::size_t>(x.rows()) || x.rows() != y.size())
        throw ArgumentError("cross-validation plan does not match the data");

    const int folds = plan.n_folds();
    const std::size_t tasks = static_cast<std::size_t>(plan.n_repeats() * folds);
    std::vector<Vector> fold_predictions(tasks);

    parallel_for(tasks, [&](std::size_t t) {
        const int repeat = static_cast<int>(t) / folds;
        const int fold = static_cast<int>(t) % folds;
        auto train = plan.train_rows(repeat, fold);
        auto test = plan.test_rows(repeat, fold);
        ModelSpec fold_spec = spec;
        fold_spec.seed = stream_seed(spec.seed, "fold", t);
        try {
            auto model = fit(fold_spec, x.take_rows(train), take(y, train));
            fold_predictions[t] = model.predict(x.take_rows(test));
        } catch (const Error& e) {
            throw Error(std::string(to_string(spec.method)) + " failed in repeat " + std::to_string(repeat) +
                        ", fold " + std::to_string(fold) + ": " + e.what());
        }
    });

    OutOfFold out;
    out.predictions = Vector::Zero(y.size());
    for (std::size_t t = 0; t < tasks; ++t) {
        const int repeat = static_cast<int>(t) / folds;
        const int fold = static_cast<int>(t) % folds;
        auto test = plan.test_rows(repeat, fold);
        for (std::size_t i = 0; i < test.size(); ++i)
            out.predictions[static_cast<Index>(test[i])] += fold_predictions[t][static_cast<Index>(i)];
    }
    out.predictions /= static_cast<double>(plan.n_repeats());
    out.cv_rmse = rmse(y, out.predictions);
    return out;
}

} // namespace counterlens
