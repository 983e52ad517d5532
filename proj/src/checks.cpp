#include "dited/checks.hpp"

#include <cmath>

namespace dited {

namespace {

double eval_plain(const ScalarFn& f, const std::vector<Tensor>& params) {
    Graph g;
    std::vector<Tensor> tracked;
    tracked.reserve(params.size());
    for (const Tensor& p : params) tracked.push_back(g.leaf(p));
    return f(g, tracked).scalar_value();
}

}  // namespace

FdReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params, double step,
                           double tol, const std::vector<std::string>& names) {
    if (step <= 0.0 || step > 1e-3) throw DitedError("finite_diff_check: step must be in (0, 1e-3]");

    // analytic route
    Graph g;
    std::vector<Tensor> tracked;
    tracked.reserve(params.size());
    for (const Tensor& p : params) tracked.push_back(g.leaf(p));
    Tensor loss = f(g, tracked);
    GradientMap grads = g.backward(loss);

    FdReport rep;
    std::vector<Tensor> work = params;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        FdGroupReport gr;
        gr.name = pi < names.size() ? names[pi] : "param" + std::to_string(pi);
        const Tensor& analytic = grads.at(tracked[pi]);
        for (int64_t i = 0; i < params[pi].numel(); ++i) {
            const double orig = work[pi].at(i);
            work[pi].at(i) = orig + step;
            const double fp = eval_plain(f, work);
            work[pi].at(i) = orig - step;
            const double fm = eval_plain(f, work);
            work[pi].at(i) = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic.at(i);
            if (std::abs(a) + std::abs(numeric) <= 1e-8) continue;
            const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric));
            gr.max_rel_err = std::max(gr.max_rel_err, rel);
            ++gr.checked;
        }
        rep.max_rel_err = std::max(rep.max_rel_err, gr.max_rel_err);
        rep.groups.push_back(std::move(gr));
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

double scalar_partial(const std::function<Tensor(Graph&, const Tensor&)>& f, double at) {
    Graph g;
    Tensor x = g.leaf(Tensor::scalar(at));
    Tensor y = f(g, x);
    if (y.numel() != 1)
        throw DitedError("scalar_partial: function output must be scalar, got " +
                         shape_str(y.shape));
    if (!y.tracked()) throw DitedError("scalar_partial: function output does not depend on input");
    GradientMap grads = g.backward(y);
    return grads.at(x).at(0);
}

}  // namespace dited
