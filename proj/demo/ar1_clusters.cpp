// Fit a backward-forward conditional model to a simulated Gaussian AR(1)
// chain and compare a few cluster summaries with the truth.
#include <cstdio>

#include "condex/condex.hpp"

using namespace condex;

int main() {
  const auto series = generate({GeneratorKind::gauss_ar1, 0.7, 1, 0, 0, 200000, 42});
  const double u = laplace_quantile(0.95), v = laplace_quantile(0.99);

  FitConfig cfg;
  cfg.k = 5;
  cfg.direction = Direction::backward_forward;
  const auto fit = fit_model(series, u, cfg);
  const auto& s = std::get<SemiParamFit>(fit);
  std::printf("alpha %.3f  beta %.3f  blocks %zu\n", std::get<GeometricAlpha>(s.forward.alpha).alpha, s.forward.beta,
              s.residuals.rows());

  SimConfig sim;
  sim.n_samples = 100000;
  sim.seed = 7;
  for (const FunctionalSpec f : {FunctionalSpec{FunctionalKind::theta, v, 5}, FunctionalSpec{FunctionalKind::chi, v, 2},
                                 FunctionalSpec{FunctionalKind::union_prob, v, 5}}) {
    const auto model = estimate_functional(fit, f, sim);
    const auto data = empirical_functional(series, f);
    const auto truth = oracle_conditional_probability({GeneratorKind::gauss_ar1, 0.7, 1, 0, 0, 0, 9}, f, 500000);
    std::printf("%-10s model %.4f (se %.2g)  data %.4f (se %.2g)  truth %.4f\n", to_string(f.kind), model.estimate,
                model.std_error, data.estimate, data.std_error, truth.estimate);
  }
}
