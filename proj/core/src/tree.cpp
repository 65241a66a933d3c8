#include "counterlens/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace counterlens {

SortedColumns::SortedColumns(const Matrix& x) {
    const Index n = x.rows();
    order_.resize(static_cast<std::size_t>(x.cols()));
    for (Index f = 0; f < x.cols(); ++f) {
        auto& o = order_[static_cast<std::size_t>(f)];
        o.resize(static_cast<std::size_t>(n));
        std::iota(o.begin(), o.end(), 0);
        std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
    }
}

std::size_t RegressionTree::leaf_of(const Matrix& x, Index row) const {
    std::size_t node = 0;
    while (nodes_[node].feature >= 0) {
        const auto& nd = nodes_[node];
        node = static_cast<std::size_t>(x(row, nd.feature) <= nd.threshold ? nd.left : nd.right);
    }
    return node;
}

Vector RegressionTree::predict(const Matrix& x) const {
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i)
        out[i] = predict(x, i);
    return out;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

nlohmann::json RegressionTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_)
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    return nodes;
}

RegressionTree RegressionTree::from_json(const nlohmann::json& doc) {
    std::vector<TreeNode> nodes;
    for (const auto& n : doc) {
        TreeNode t;
        t.feature = n.at(0).get<int>();
        t.threshold = n.at(1).get<double>();
        t.left = n.at(2).get<int>();
        t.right = n.at(3).get<int>();
        t.value = n.at(4).get<double>();
        nodes.push_back(t);
    }
    if (nodes.empty())
        throw FormatError("tree has no nodes");
    for (const auto& t : nodes) {
        if (t.feature >= 0 && (t.left <= 0 || t.right <= 0 || static_cast<std::size_t>(t.left) >= nodes.size() ||
                               static_cast<std::size_t>(t.right) >= nodes.size()))
            throw FormatError("tree node refers to a missing child");
    }
    return RegressionTree(std::move(nodes));
}

namespace {

struct NodeStats {
    double weight = 0.0;
    double sum = 0.0;
};

struct Candidate {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
    double left_weight = 0.0;
    double left_sum = 0.0;
};

} // namespace

RegressionTree grow_tree(const Matrix& x, const SortedColumns& sorted, const Vector& target,
                         std::span<const double> weights, const TreeParams& params, Rng* rng,
                         std::vector<double>& gain) {
    const Index n = x.rows();
    const int p = static_cast<int>(x.cols());
    if (static_cast<Index>(weights.size()) != n || target.size() != n || sorted.features() != p)
        throw ArgumentError("tree inputs differ in size");
    if (gain.size() != static_cast<std::size_t>(p))
        gain.assign(static_cast<std::size_t>(p), 0.0);
    const int mtry = (params.mtry <= 0 || params.mtry >= p) ? p : params.mtry;
    if (mtry < p && rng == nullptr)
        throw ArgumentError("feature subsampling needs a random stream");

    std::vector<TreeNode> nodes(1);
    std::vector<NodeStats> stats(1);
    std::vector<int> node_of(static_cast<std::size_t>(n), -1);

    // Per-feature sorted lists restricted to rows still in open nodes.
    std::vector<std::vector<int>> lists(static_cast<std::size_t>(p));
    for (int f = 0; f < p; ++f) {
        auto& l = lists[static_cast<std::size_t>(f)];
        l.reserve(static_cast<std::size_t>(n));
        for (int i : sorted.order(f))
            if (weights[static_cast<std::size_t>(i)] > 0.0)
                l.push_back(i);
    }
    if (p == 0 || lists[0].empty()) {
        double w = 0.0, s = 0.0;
        for (Index i = 0; i < n; ++i) {
            w += weights[static_cast<std::size_t>(i)];
            s += weights[static_cast<std::size_t>(i)] * target[i];
        }
        nodes[0].value = w > 0.0 ? s / w : 0.0;
        return RegressionTree(std::move(nodes));
    }
    for (int i : lists[0]) {
        node_of[static_cast<std::size_t>(i)] = 0;
        const double w = weights[static_cast<std::size_t>(i)];
        stats[0].weight += w;
        stats[0].sum += w * target[i];
    }

    std::vector<int> frontier{0};
    std::vector<int> all_features(static_cast<std::size_t>(p));
    std::iota(all_features.begin(), all_features.end(), 0);
    int depth = 0;

    std::vector<int> slot_of;
    std::vector<char> uses;
    std::vector<Candidate> best;
    std::vector<double> acc_w, acc_s, last;
    std::vector<char> seen;

    while (!frontier.empty() && (params.max_depth <= 0 || depth < params.max_depth)) {
        const std::size_t slots = frontier.size();
        slot_of.assign(nodes.size(), -1);

        // Purity check per open node.
        std::vector<double> lo(slots, INFINITY), hi(slots, -INFINITY);
        for (std::size_t s = 0; s < slots; ++s)
            slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
        for (int i : lists[0]) {
            const auto s = static_cast<std::size_t>(slot_of[static_cast<std::size_t>(node_of[static_cast<std::size_t>(i)])]);
            lo[s] = std::min(lo[s], target[i]);
            hi[s] = std::max(hi[s], target[i]);
        }

        uses.assign(slots * static_cast<std::size_t>(p), 0);
        std::vector<char> feature_needed(static_cast<std::size_t>(p), 0);
        std::vector<char> splittable(slots, 0);
        for (std::size_t s = 0; s < slots; ++s) {
            const auto& st = stats[static_cast<std::size_t>(frontier[s])];
            const double range = hi[s] - lo[s];
            const bool pure = !(range > 1e-13 * std::max(std::abs(hi[s]), std::abs(lo[s])));
            if (pure || st.weight < params.min_split || st.weight < 2.0 * params.min_leaf)
                continue;
            splittable[s] = 1;
            if (mtry == p) {
                std::fill_n(uses.begin() + static_cast<std::ptrdiff_t>(s * static_cast<std::size_t>(p)), p, 1);
            } else {
                auto pool = all_features;
                for (int k = 0; k < mtry; ++k) {
                    std::size_t j = static_cast<std::size_t>(k) + rng->index(static_cast<std::size_t>(p - k));
                    std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
                    uses[s * static_cast<std::size_t>(p) + static_cast<std::size_t>(pool[static_cast<std::size_t>(k)])] = 1;
                }
            }
        }
        for (std::size_t s = 0; s < slots; ++s)
            for (int f = 0; f < p; ++f)
                if (uses[s * static_cast<std::size_t>(p) + static_cast<std::size_t>(f)])
                    feature_needed[static_cast<std::size_t>(f)] = 1;

        best.assign(slots, Candidate{});
        for (int f = 0; f < p; ++f) {
            if (!feature_needed[static_cast<std::size_t>(f)])
                continue;
            acc_w.assign(slots, 0.0);
            acc_s.assign(slots, 0.0);
            last.assign(slots, 0.0);
            seen.assign(slots, 0);
            for (int i : lists[static_cast<std::size_t>(f)]) {
                const auto s = static_cast<std::size_t>(slot_of[static_cast<std::size_t>(node_of[static_cast<std::size_t>(i)])]);
                if (!uses[s * static_cast<std::size_t>(p) + static_cast<std::size_t>(f)])
                    continue;
                const double v = x(i, f);
                if (seen[s] && v > last[s]) {
                    const auto& st = stats[static_cast<std::size_t>(frontier[s])];
                    const double wl = acc_w[s];
                    const double wr = st.weight - wl;
                    if (wl >= params.min_leaf && wr >= params.min_leaf) {
                        const double diff = acc_s[s] / wl - (st.sum - acc_s[s]) / wr;
                        const double g = wl * wr / st.weight * diff * diff;
                        if (g > best[s].gain) {
                            double thr = 0.5 * (last[s] + v);
                            if (!(thr >= last[s] && thr < v))
                                thr = last[s];
                            best[s] = {g, f, thr, wl, acc_s[s]};
                        }
                    }
                }
                const double w = weights[static_cast<std::size_t>(i)];
                acc_w[s] += w;
                acc_s[s] += w * target[i];
                last[s] = v;
                seen[s] = 1;
            }
        }

        std::vector<int> next;
        for (std::size_t s = 0; s < slots; ++s) {
            const Candidate& c = best[s];
            if (!splittable[s] || c.feature < 0 || !(c.gain > 0.0))
                continue;
            const int id = frontier[s];
            const NodeStats parent = stats[static_cast<std::size_t>(id)];
            const int left = static_cast<int>(nodes.size());
            nodes.push_back({});
            nodes.push_back({});
            stats.push_back({c.left_weight, c.left_sum});
            stats.push_back({parent.weight - c.left_weight, parent.sum - c.left_sum});
            auto& nd = nodes[static_cast<std::size_t>(id)];
            nd.feature = c.feature;
            nd.threshold = c.threshold;
            nd.left = left;
            nd.right = left + 1;
            gain[static_cast<std::size_t>(c.feature)] += c.gain;
            next.push_back(left);
            next.push_back(left + 1);
        }

        for (int i : lists[0]) {
            auto& node = node_of[static_cast<std::size_t>(i)];
            const auto& nd = nodes[static_cast<std::size_t>(node)];
            node = nd.feature < 0 ? -1 : (x(i, nd.feature) <= nd.threshold ? nd.left : nd.right);
        }
        for (auto& l : lists)
            l.erase(std::remove_if(l.begin(), l.end(), [&](int i) { return node_of[static_cast<std::size_t>(i)] < 0; }),
                    l.end());
        frontier = std::move(next);
        ++depth;
    }

    for (std::size_t k = 0; k < nodes.size(); ++k)
        if (nodes[k].feature < 0)
            nodes[k].value = stats[k].weight > 0.0 ? stats[k].sum / stats[k].weight : 0.0;
    return RegressionTree(std::move(nodes));
}

void refit_leaves(RegressionTree& tree, const Matrix& x, const Vector& target) {
    auto& nodes = tree.nodes();
    std::vector<double> sum(nodes.size(), 0.0);
    std::vector<double> count(nodes.size(), 0.0);
    for (Index i = 0; i < x.rows(); ++i) {
        const auto leaf = tree.leaf_of(x, i);
        sum[leaf] += target[i];
        count[leaf] += 1.0;
    }
    for (std::size_t k = 0; k < nodes.size(); ++k)
        if (nodes[k].feature < 0 && count[k] > 0.0)
            nodes[k].value = sum[k] / count[k];
}

} // namespace counterlens
