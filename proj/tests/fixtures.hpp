#pragma once

// Small hand-built data sets shared by the unit tests.

#include <cstdint>

#include "sfocc/model.hpp"
#include "sfocc/rngmath.hpp"

namespace fixture {

/// n species, j sites on a jittered line, k replicates everywhere, one
/// occurrence and one detection covariate, random detections.
inline sfocc::SurveyData small_data(int n, int j, int k, std::uint64_t seed, double detect_rate = 0.3) {
  sfocc::RandomStream s(seed, 0);
  sfocc::SurveyData d;
  d.n_species = n;
  d.n_sites = j;
  d.max_replicates = k;
  d.replicates.assign(j, k);
  d.coords.resize(j, 2);
  d.x_occ.resize(j, 2);
  d.v_det.resize(static_cast<Eigen::Index>(j) * k, 2);
  for (int a = 0; a < j; ++a) {
    d.coords.row(a) << s.uniform(), s.uniform();
    d.x_occ.row(a) << 1.0, s.normal();
    for (int r = 0; r < k; ++r) d.v_det.row(a * k + r) << 1.0, s.normal();
  }
  d.y.resize(static_cast<std::size_t>(n) * j * k);
  for (auto& v : d.y) v = static_cast<std::int8_t>(s.bernoulli(detect_rate));
  d.fill_default_labels();
  return d;
}

inline sfocc::McmcConfig short_mcmc(int chains = 2, int iters = 60, int burn = 20, int thin = 2,
                                    std::uint64_t seed = 3) {
  sfocc::McmcConfig m;
  m.n_chains = chains;
  m.n_iterations = iters;
  m.n_burn = burn;
  m.n_thin = thin;
  m.seed = seed;
  return m;
}

}  // namespace fixture
