#include "contrastad/gradcheck.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace contrastad::diff {

GradCheckReport check_gradients(Graph& graph, double step, double rtol, double atol,
                                const std::vector<std::pair<NodeId, std::size_t>>& expect_zero_grad) {
    if (step <= 0.0) throw std::invalid_argument("check_gradients: step must be > 0");
    if (graph.empty()) throw std::logic_error("check_gradients: empty graph");
    if (graph.value(graph.last()).numel() != 1)
        throw std::invalid_argument("check_gradients: final output must be scalar");

    std::set<std::pair<NodeId, std::size_t>> frozen(expect_zero_grad.begin(), expect_zero_grad.end());

    graph.forward();
    graph.backward();

    // snapshot analytic gradients before leaf values are perturbed
    std::vector<NodeId> params = graph.param_nodes();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (NodeId p : params) analytic.push_back(graph.grad(p));

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        NodeId p = params[pi];
        double param_max = 0.0;
        Tensor& leaf = graph.leaf_value(p);
        for (std::size_t i = 0; i < leaf.numel(); ++i) {
            GradCheckEntry entry;
            entry.node = p;
            entry.label = graph.node(p).label;
            entry.index = i;
            entry.analytic = analytic[pi][i];
            if (frozen.count({p, i})) {
                entry.masked = true;
                entry.reference = 0.0;
                entry.pass = entry.analytic == 0.0;
            } else {
                double saved = leaf.values[i];
                leaf.values[i] = saved + step;
                double up = graph.forward().values[0];
                leaf.values[i] = saved - step;
                double down = graph.forward().values[0];
                leaf.values[i] = saved;
                entry.reference = (up - down) / (2.0 * step);
                double dev = std::abs(entry.analytic - entry.reference);
                double tol = atol + rtol * std::max(std::abs(entry.analytic), std::abs(entry.reference));
                entry.pass = dev <= tol;
                param_max = std::max(param_max, dev);
                report.max_deviation = std::max(report.max_deviation, dev);
            }
            ++report.entries_checked;
            if (!entry.pass) report.failures.push_back(entry);
        }
        report.per_parameter_max.emplace_back(graph.node(p).label, param_max);
    }
    graph.forward();  // restore cached values
    return report;
}

}  // namespace contrastad::diff
