#include "codelabel/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "codelabel/diagnostics.hpp"
#include "codelabel/error.hpp"
#include "codelabel/parallel.hpp"

namespace codelabel {

CostMatrix cosine_cost(const Codebook& coarse) {
    const std::size_t n = coarse.size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = coarse.vectors.row(i);
        norms[i] = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
        if (norms[i] == 0.0) fail_data("cosine cost: coarse code " + std::to_string(i) + " has zero norm");
    }
    CostMatrix M{Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            auto a = coarse.vectors.row(i);
            auto b = coarse.vectors.row(j);
            const double cos = std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (norms[i] * norms[j]);
            M.costs(i, j) = std::clamp(1.0 - cos, 0.0, 2.0);
        }
    return M;
}

namespace {

constexpr double kMarginalTolerance = 1e-9;
constexpr double kPerturbation = 1e-12;
constexpr double kReducedCostTolerance = 1e-12;

// Spanning-tree basis over the bipartite graph rows [0, m) + columns [m, m+n).
class TransportBasis {
public:
    TransportBasis(std::size_t m, std::size_t n) : m_(m), n_(n), basic_(m * n, false), x_(m * n, 0.0) {}

    std::size_t cell(std::size_t i, std::size_t j) const { return i * n_ + j; }
    bool basic(std::size_t c) const { return basic_[c]; }
    double& x(std::size_t c) { return x_[c]; }
    double x(std::size_t c) const { return x_[c]; }
    void set_basic(std::size_t c, bool on) { basic_[c] = on; }

    std::vector<std::vector<std::size_t>> adjacency() const {
        std::vector<std::vector<std::size_t>> adj(m_ + n_);
        for (std::size_t c = 0; c < basic_.size(); ++c)
            if (basic_[c]) {
                adj[c / n_].push_back(c);
                adj[m_ + c % n_].push_back(c);
            }
        return adj;
    }

    // u_i + v_j = cost on basic cells, u_0 = 0.
    void potentials(const Matrix& cost, std::vector<double>& u, std::vector<double>& v) const {
        const auto adj = adjacency();
        std::vector<bool> seen(m_ + n_, false);
        u.assign(m_, 0.0);
        v.assign(n_, 0.0);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t c : adj[node]) {
                const std::size_t i = c / n_, j = c % n_;
                if (node < m_ && !seen[m_ + j]) {
                    v[j] = cost(i, j) - u[i];
                    seen[m_ + j] = true;
                    stack.push_back(m_ + j);
                } else if (node >= m_ && !seen[i]) {
                    u[i] = cost(i, j) - v[j];
                    seen[i] = true;
                    stack.push_back(i);
                }
            }
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            fail_invariant("transport basis is not a spanning tree");
    }

    // Cells on the tree path from row node `row` to column node `col`, in order.
    std::vector<std::size_t> path(std::size_t row, std::size_t col) const {
        const auto adj = adjacency();
        const std::size_t target = m_ + col;
        std::vector<std::size_t> via(m_ + n_, std::numeric_limits<std::size_t>::max());
        std::vector<bool> seen(m_ + n_, false);
        std::vector<std::size_t> queue{row};
        seen[row] = true;
        for (std::size_t head = 0; head < queue.size() && !seen[target]; ++head) {
            const std::size_t node = queue[head];
            for (std::size_t c : adj[node]) {
                const std::size_t other = node < m_ ? m_ + c % n_ : c / n_;
                if (seen[other]) continue;
                seen[other] = true;
                via[other] = c;
                queue.push_back(other);
            }
        }
        if (!seen[target]) fail_invariant("transport basis is disconnected");
        std::vector<std::size_t> cells;
        for (std::size_t node = target; node != row;) {
            const std::size_t c = via[node];
            cells.push_back(c);
            node = node < m_ ? m_ + c % n_ : c / n_;
        }
        std::reverse(cells.begin(), cells.end());
        return cells;
    }

    // Basic solution for the given marginals by repeatedly peeling leaves.
    std::vector<double> solve_tree(std::span<const double> supply, std::span<const double> demand) const {
        auto adj = adjacency();
        std::vector<double> rem(m_ + n_);
        std::copy(supply.begin(), supply.end(), rem.begin());
        std::copy(demand.begin(), demand.end(), rem.begin() + static_cast<std::ptrdiff_t>(m_));
        std::vector<std::size_t> degree(m_ + n_);
        for (std::size_t node = 0; node < m_ + n_; ++node) degree[node] = adj[node].size();
        std::vector<bool> done(basic_.size(), false);
        std::vector<double> out(basic_.size(), 0.0);
        std::vector<std::size_t> leaves;
        for (std::size_t node = 0; node < m_ + n_; ++node)
            if (degree[node] == 1) leaves.push_back(node);
        while (!leaves.empty()) {
            const std::size_t node = leaves.back();
            leaves.pop_back();
            if (degree[node] != 1) continue;
            std::size_t edge = basic_.size();
            for (std::size_t c : adj[node])
                if (!done[c]) edge = c;
            const std::size_t other = node < m_ ? m_ + edge % n_ : edge / n_;
            out[edge] = rem[node];
            rem[other] -= rem[node];
            rem[node] = 0.0;
            done[edge] = true;
            degree[node] = 0;
            if (--degree[other] == 1) leaves.push_back(other);
        }
        return out;
    }

private:
    std::size_t m_, n_;
    std::vector<bool> basic_;
    std::vector<double> x_;
};

void check_marginal(std::span<const double> v, const char* name) {
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x) || x < 0.0) fail_data(std::string("solve_emd: ") + name + " has a negative or non-finite entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > kMarginalTolerance)
        fail_data(std::string("solve_emd: marginal-sum violation, ") + name + " sums to " + std::to_string(sum));
}

}  // namespace

TransportPlan solve_emd(std::span<const double> p, std::span<const double> q, const CostMatrix& M) {
    const std::size_t m = p.size(), n = q.size();
    if (m == 0 || n == 0 || M.rows() != m || M.cols() != n) fail_data("solve_emd: shape mismatch");
    check_marginal(p, "p");
    check_marginal(q, "q");

    const double p_sum = std::accumulate(p.begin(), p.end(), 0.0);
    const double q_sum = std::accumulate(q.begin(), q.end(), 0.0);
    std::vector<double> demand(q.begin(), q.end());
    for (double& d : demand) d *= p_sum / q_sum;

    std::vector<double> a(p.begin(), p.end());
    std::vector<double> b = demand;
    for (double& s : a) s += kPerturbation;
    b.back() += static_cast<double>(m) * kPerturbation;

    // North-west corner; each step advances exactly one index, giving m+n-1 cells.
    TransportBasis basis(m, n);
    {
        std::vector<double> ra = a, rb = b;
        std::size_t i = 0, j = 0;
        for (;;) {
            const double amount = std::min(ra[i], rb[j]);
            const std::size_t c = basis.cell(i, j);
            basis.set_basic(c, true);
            basis.x(c) = amount;
            ra[i] -= amount;
            rb[j] -= amount;
            if (i == m - 1 && j == n - 1) break;
            if (j == n - 1 || (i < m - 1 && ra[i] <= rb[j]))
                ++i;
            else
                ++j;
        }
    }

    TransportPlan result;
    std::vector<double> u, v;
    const std::size_t max_pivots = 50 * m * n + 100;
    for (;;) {
        basis.potentials(M.costs, u, v);
        std::size_t entering = m * n;
        double min_rc = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t c = basis.cell(i, j);
                if (basis.basic(c)) continue;
                const double rc = M(i, j) - u[i] - v[j];
                min_rc = std::min(min_rc, rc);
                if (entering == m * n && rc < -kReducedCostTolerance) entering = c;
            }
        result.min_reduced_cost = min_rc;
        if (entering == m * n) break;
        if (++result.pivots > max_pivots) fail_invariant("solve_emd: pivot limit exceeded");

        const auto cycle = basis.path(entering / n, entering % n);
        // Cells alternate -, +, -, ... starting next to the entering cell's row.
        std::size_t leaving = m * n;
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cycle.size(); k += 2) {
            const std::size_t c = cycle[k];
            if (basis.x(c) < theta || (basis.x(c) == theta && c < leaving)) {
                theta = basis.x(c);
                leaving = c;
            }
        }
        for (std::size_t k = 0; k < cycle.size(); ++k) basis.x(cycle[k]) += (k % 2 == 0 ? -theta : theta);
        basis.x(entering) = theta;
        basis.x(leaving) = 0.0;
        basis.set_basic(entering, true);
        basis.set_basic(leaving, false);
    }

    const auto x = basis.solve_tree(p, demand);
    result.plan = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t c = basis.cell(i, j);
            if (!basis.basic(c)) continue;
            double value = x[c];
            if (value < 0.0) {
                if (value < -kMarginalTolerance) fail_invariant("solve_emd: optimal basis infeasible after unperturbing");
                value = 0.0;
            }
            result.plan(i, j) = value;
            result.cost += value * M(i, j);
        }
    return result;
}

double alignment_score(double mean_cost, double sigma) {
    if (!(sigma > 0.0)) fail_usage("sigma must be positive");
    const double r = mean_cost / sigma;
    return std::max(std::exp(-r * r), std::numeric_limits<double>::min());
}

ChannelWeights channel_weights(const ChannelTM& source, const ChannelTM& target, const CostMatrix& M, double sigma,
                               unsigned threads) {
    if (source.n_channels != target.n_channels) fail_data("channel_weights: source and target differ in channel count");
    if (source.n_states != target.n_states || M.rows() != source.n_states)
        fail_data("channel_weights: state count mismatch");
    if (!(sigma > 0.0)) fail_usage("sigma must be positive");
    const std::size_t D = source.n_channels, n = source.n_states;
    ChannelWeights out;
    out.sigma = sigma;
    out.w.assign(D, 0.0);
    out.mean_cost.assign(D, 0.0);
    parallel_for(D, threads, [&](std::size_t d) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += solve_emd(source.at(d).row(i), target.at(d).row(i), M).cost;
        out.mean_cost[d] = total / static_cast<double>(n);
        out.w[d] = alignment_score(out.mean_cost[d], sigma);
    });
    return out;
}

ChannelWeights uniform_channel_weights(std::size_t n_channels, double sigma) {
    return ChannelWeights{std::vector<double>(n_channels, 1.0), std::vector<double>(n_channels, 0.0), sigma};
}

std::string alignment_report(const ChannelWeights& weights, const std::string& provenance) {
    std::ostringstream out;
    out.precision(17);
    if (!provenance.empty()) out << "# " << provenance << '\n';
    out << "# sigma\t" << weights.sigma << '\n';
    out << "channel\tmean_cost\tweight\trank\n";
    const auto ranks = weight_ranks(weights.w);
    for (std::size_t d = 0; d < weights.w.size(); ++d)
        out << d << '\t' << weights.mean_cost[d] << '\t' << weights.w[d] << '\t' << ranks[d] << '\n';
    return out.str();
}

}  // namespace codelabel
