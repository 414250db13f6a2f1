#include <algorithm>
#include <cmath>

#include "epigraph/nn.hpp"

namespace epigraph::nn {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.rel_error);
  return m;
}

GradCheckReport check_gradients(ParamStore& params, const std::vector<std::string>& terms,
                                const std::function<std::vector<double>()>& values,
                                const std::function<void(std::size_t)>& analytic,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  if (params.size() == 0 || terms.empty()) return report;

  std::vector<std::vector<DenseMatrix>> grads(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    params.zero_grad();
    analytic(k);
    for (const Tensor& t : params.tensors()) grads[k].push_back(t.grad);
  }
  params.zero_grad();
  if (options.corrupt) {
    double& g = grads[0][0].data()[0];
    g += 1e-3 + 0.5 * std::abs(g);
  }

  const std::size_t n_tensors = params.size();
  report.entries.resize(terms.size() * n_tensors);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    for (std::size_t ti = 0; ti < n_tensors; ++ti) {
      auto& e = report.entries[k * n_tensors + ti];
      e.term = terms[k];
      e.tensor = params.tensors()[ti].name;
    }
  }

  std::vector<std::vector<DenseMatrix>> numeric(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    for (const Tensor& t : params.tensors()) numeric[k].push_back(DenseMatrix::Zero(t.value.rows(), t.value.cols()));
  }
  for (std::size_t ti = 0; ti < n_tensors; ++ti) {
    DenseMatrix& value = params.tensors()[ti].value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + options.h;
      const std::vector<double> plus = values();
      value.data()[i] = saved - options.h;
      const std::vector<double> minus = values();
      value.data()[i] = saved;
      for (std::size_t k = 0; k < terms.size(); ++k) {
        numeric[k][ti].data()[i] = (plus[k] - minus[k]) / (2.0 * options.h);
      }
    }
  }
  for (std::size_t k = 0; k < terms.size(); ++k) {
    for (std::size_t ti = 0; ti < n_tensors; ++ti) {
      const DenseMatrix& a = grads[k][ti];
      const DenseMatrix& n = numeric[k][ti];
      auto& e = report.entries[k * n_tensors + ti];
      e.count = static_cast<std::size_t>(a.size());
      e.max_elem_error = a.size() ? (a - n).cwiseAbs().maxCoeff() : 0.0;
      e.rel_error = (a - n).norm() / std::max({a.norm(), n.norm(), options.floor});
    }
  }
  return report;
}

GradCheckReport grad_check(Model& model, const EpipolarGraph& g, const Pose& gt,
                           const LossOptions& loss_options, const GradCheckOptions& options) {
  const DenseMatrix X = node_feature_matrix(g);
  const Propagation prop = Propagation::from_graph(g);
  const LossTarget target = make_loss_target(gt, loss_options);
  std::vector<std::string> names;
  for (LossTerm t : kAllLossTerms) names.emplace_back(loss_term_name(t));

  const auto values = [&]() {
    const PosePrediction p = model.predict(X, prop);
    std::vector<double> out;
    out.reserve(kAllLossTerms.size());
    for (LossTerm t : kAllLossTerms) out.push_back(loss_term(t, p, target, loss_options));
    return out;
  };
  const auto analytic = [&](std::size_t k) {
    const PosePrediction p = model.forward(X, prop);
    PredictionGrad pg;
    loss_term(kAllLossTerms[k], p, target, loss_options, &pg);
    model.backward(pg);
  };
  return check_gradients(model.params(), names, values, analytic, options);
}

}  // namespace epigraph::nn
