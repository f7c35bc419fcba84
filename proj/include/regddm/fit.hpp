#pragma once

#include <vector>

#include "regddm/model.hpp"
#include "regddm/sampler.hpp"

namespace regddm {

// View of a Model as a sampling target.  The model must outlive the target.
inline SampleTarget model_target(const Model& m) {
  SampleTarget t;
  t.dim = m.dim();
  t.logp_grad = [&m](const std::vector<double>& u, std::vector<double>& g) {
    return m.log_posterior_grad(u, g);
  };
  t.initial = [&m](Rng& rng) { return m.initial_values(rng); };
  t.constrain = [&m](const std::vector<double>& u, std::vector<double>& c) {
    m.constrain_draws(u, c);
  };
  t.names = m.layout().flat_names();
  return t;
}

// Sampler configuration used by model fits.  The diffusion likelihood has a
// hard wall where a trial's non-decision time approaches its response time,
// so posterior stiffness varies strongly with position; a higher acceptance
// target than the library default keeps the step size safe across regions.
inline SamplerConfig default_fit_config() {
  SamplerConfig cfg;
  cfg.target_accept = 0.95;
  return cfg;
}

// Convenience wrapper: fit a model with the given config.
inline PosteriorDraws fit_model(const Model& m, const SamplerConfig& cfg = default_fit_config()) {
  return run_chains(model_target(m), cfg);
}

}  // namespace regddm
