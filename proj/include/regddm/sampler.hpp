#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "regddm/rng.hpp"

namespace regddm {

// A sampling problem: unconstrained log density with gradient, per-chain
// starting points, and the map from the sampling scale to reported values.
struct SampleTarget {
  int dim = 0;
  // returns log density at u and fills grad (same length as u)
  std::function<double(const std::vector<double>&, std::vector<double>&)> logp_grad;
  // finite-density unconstrained start, one call per chain
  std::function<std::vector<double>(Rng&)> initial;
  // sampling scale -> reported (constrained) scale; identity when null
  std::function<void(const std::vector<double>&, std::vector<double>&)> constrain;
  std::vector<std::string> names;
};

struct SamplerConfig {
  int chains = 4;
  int warmup = 500;
  int iterations = 1000;  // total per chain, including warmup
  double target_accept = 0.8;
  int max_depth = 10;
  unsigned long long seed = 1;
  int threads = 1;  // chains run concurrently when > 1; results do not depend on it
};

struct ChainDiagnostics {
  int divergences = 0;        // post-warmup divergent transitions
  double step_size = 0.0;     // adapted step size used for sampling
  double accept_mean = 0.0;   // mean acceptance statistic over the sampling phase
  std::vector<int> tree_depths;  // per post-warmup iteration
  double elapsed_seconds = 0.0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  int n_chains = 0;
  int n_draws = 0;   // post-warmup draws per chain
  int n_params = 0;
  int warmup = 0;      // warmup iterations per chain (echoed in reports)
  int iterations = 0;  // total iterations per chain (warmup + kept draws)
  std::vector<std::vector<double>> chains;  // [chain][draw * n_params + param]
  std::vector<ChainDiagnostics> diags;

  double value(int chain, int draw, int param) const {
    return chains[static_cast<std::size_t>(chain)]
                 [static_cast<std::size_t>(draw) * static_cast<std::size_t>(n_params) +
                  static_cast<std::size_t>(param)];
  }
  // one parameter's post-warmup series from one chain
  std::vector<double> series(int chain, int param) const {
    std::vector<double> out(static_cast<std::size_t>(n_draws));
    for (int d = 0; d < n_draws; ++d) out[static_cast<std::size_t>(d)] = value(chain, d, param);
    return out;
  }
};

namespace nuts_detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Phase-space point with the cached density and gradient at q.
struct PsPoint {
  std::vector<double> q, p, grad;
  double logp = kNegInf;
};

inline double kinetic(const std::vector<double>& p, const std::vector<double>& inv_mass) {
  double k = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) k += inv_mass[i] * p[i] * p[i];
  return 0.5 * k;
}

inline double hamiltonian(const PsPoint& z, const std::vector<double>& inv_mass) {
  return -z.logp + kinetic(z.p, inv_mass);
}

// One leapfrog step of signed size eps; updates z in place.
inline void leapfrog(const SampleTarget& target, const std::vector<double>& inv_mass, double eps,
                     PsPoint& z) {
  const std::size_t n = z.q.size();
  for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  for (std::size_t i = 0; i < n; ++i) z.q[i] += eps * inv_mass[i] * z.p[i];
  z.logp = target.logp_grad(z.q, z.grad);
  for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
}

// Running mean/variance accumulator.
struct Welford {
  std::vector<double> mean, m2;
  long long n = 0;
  void reset(std::size_t dim) {
    mean.assign(dim, 0.0);
    m2.assign(dim, 0.0);
    n = 0;
  }
  void add(const std::vector<double>& x) {
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  // shrunk variance estimate (regularized toward unit scale)
  std::vector<double> regularized_variance() const {
    std::vector<double> v(mean.size(), 1.0);
    if (n < 2) return v;
    const double w = static_cast<double>(n) / (static_cast<double>(n) + 5.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double s2 = m2[i] / (static_cast<double>(n) - 1.0);
      v[i] = w * s2 + 1e-3 * (1.0 - w);
    }
    return v;
  }
};

// Nesterov dual averaging of the log step size.
struct DualAveraging {
  double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
  double gamma = 0.05, t0 = 10.0, kappa = 0.75, target = 0.8;
  long long m = 0, m_base = 0;

  // mu_factor biases the iterates toward steps mu_factor times larger than
  // the starting guess; 10 explores aggressively from a coarse first guess,
  // 1 refines an already-adapted value (used at window restarts, where only
  // a short stretch of iterations remains to average over)
  void restart(double eps, double target_accept, double mu_factor) {
    mu = std::log(mu_factor * eps);
    log_eps = std::log(eps);
    log_eps_bar = 0.0;
    h_bar = 0.0;
    m = 0;
    m_base = 0;
    target = target_accept;
  }
  // keep the iterate dynamics but start the reported average over: used when
  // entering the final buffer, so the polished step size reflects only
  // iterations run under the final mass matrix
  void rebase_average() {
    m_base = m;
    log_eps_bar = 0.0;
  }
  double learn(double accept) {
    ++m;
    const double md = static_cast<double>(m);
    h_bar += (target - accept - h_bar) / (md + t0);
    log_eps = mu - std::sqrt(md) / gamma * h_bar;
    const double eta = std::pow(static_cast<double>(m - m_base), -kappa);
    log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
    return std::exp(log_eps);
  }
  double adapted() const { return std::exp(log_eps_bar); }
};

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace nuts_detail

// One Hamiltonian chain with No-U-Turn trajectories, exposed so tests can
// drive single transitions with pinned step sizes.
class NutsChain {
 public:
  struct TransitionStats {
    bool divergent = false;
    int depth = 0;
    int n_leapfrog = 0;
    double accept_stat = 0.0;  // mean Metropolis statistic over the trajectory
  };

  NutsChain(const SampleTarget& target, Rng rng, int max_depth = 10)
      : target_(target), rng_(std::move(rng)), max_depth_(max_depth) {
    inv_mass_.assign(static_cast<std::size_t>(target.dim), 1.0);
  }

  void set_position(const std::vector<double>& q) {
    z_.q = q;
    z_.p.assign(q.size(), 0.0);
    z_.grad.assign(q.size(), 0.0);
    z_.logp = target_.logp_grad(z_.q, z_.grad);
    if (!std::isfinite(z_.logp)) {
      throw std::runtime_error("chain cannot start from a point with zero posterior density");
    }
  }

  const std::vector<double>& position() const { return z_.q; }
  double step_size() const { return eps_; }
  void set_step_size(double eps) { eps_ = eps; }
  const std::vector<double>& inv_mass() const { return inv_mass_; }
  void set_inv_mass(std::vector<double> v) { inv_mass_ = std::move(v); }
  Rng& rng() { return rng_; }

  // Heuristic step size: starting from the current value, double or halve
  // until the one-step acceptance probability crosses 0.8 (fresh momentum per
  // probe averages out direction effects).
  double find_reasonable_step_size() {
    using namespace nuts_detail;
    double eps = std::min(std::max(eps_, 1e-6), 1e2);
    auto probe = [&](double e) {
      PsPoint z = z_;
      sample_momentum(z);
      const double h0 = hamiltonian(z, inv_mass_);
      leapfrog(target_, inv_mass_, e, z);
      const double h = hamiltonian(z, inv_mass_);
      return std::isfinite(h) ? h0 - h : kNegInf;  // log acceptance probability
    };
    const double threshold = std::log(0.8);
    double dh = probe(eps);
    for (int it = 0; it < 200 && dh == kNegInf; ++it) {
      eps *= 0.5;
      dh = probe(eps);
    }
    const double dir = dh > threshold ? 1.0 : -1.0;
    for (int it = 0; it < 200; ++it) {
      if (dir * dh <= dir * threshold) break;
      eps *= dir > 0 ? 2.0 : 0.5;
      if (eps > 1e7 || eps < 1e-10) break;
      dh = probe(eps);
    }
    eps_ = eps;
    return eps;
  }

  TransitionStats transition() {
    using namespace nuts_detail;
    TransitionStats stats;
    sample_momentum(z_);
    h0_ = hamiltonian(z_, inv_mass_);
    sum_metro_ = 0.0;
    n_metro_ = 0;

    PsPoint z_fwd = z_, z_bck = z_;
    std::vector<double> rho = z_.p;
    std::vector<double> v_fwd = velocity(z_.p), v_bck = v_fwd;
    PsPoint selected = z_;
    double lsw_total = 0.0;  // the initial point carries weight exp(h0 - h0) = 1

    int depth = 0;
    while (depth < max_depth_) {
      const bool forward = rng_.uniform() < 0.5;
      Tree t = build_tree(depth, forward ? z_fwd : z_bck, forward ? 1.0 : -1.0, stats);
      if (!t.ok) {
        if (t.divergent) stats.divergent = true;
        break;
      }
      if (std::log(rng_.uniform()) < t.log_sum_w - lsw_total) selected = t.prop;
      lsw_total = log_sum_exp(lsw_total, t.log_sum_w);
      for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += t.rho[i];
      if (forward) {
        z_fwd = t.end;
        v_fwd = t.v_end;
      } else {
        z_bck = t.end;
        v_bck = t.v_end;
      }
      ++depth;
      if (turned(rho, v_bck, v_fwd)) break;
    }
    stats.depth = depth;
    stats.accept_stat = n_metro_ > 0 ? sum_metro_ / static_cast<double>(n_metro_) : 1.0;
    z_ = std::move(selected);
    return stats;
  }

 private:
  struct Tree {
    nuts_detail::PsPoint prop, end;
    std::vector<double> rho, v_beg, v_end;
    double log_sum_w = nuts_detail::kNegInf;
    bool ok = false;
    bool divergent = false;
  };

  void sample_momentum(nuts_detail::PsPoint& z) {
    z.p.resize(static_cast<std::size_t>(target_.dim));
    for (std::size_t i = 0; i < z.p.size(); ++i) {
      z.p[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
    }
  }

  std::vector<double> velocity(const std::vector<double>& p) const {
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) v[i] = inv_mass_[i] * p[i];
    return v;
  }

  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  bool turned(const std::vector<double>& rho, const std::vector<double>& v_beg,
              const std::vector<double>& v_end) const {
    return dot(rho, v_beg) <= 0.0 || dot(rho, v_end) <= 0.0;
  }

  Tree build_tree(int depth, const nuts_detail::PsPoint& from, double dir,
                  TransitionStats& stats) {
    using namespace nuts_detail;
    if (depth == 0) {
      Tree t;
      t.end = from;
      leapfrog(target_, inv_mass_, dir * eps_, t.end);
      ++stats.n_leapfrog;
      const double h = hamiltonian(t.end, inv_mass_);
      const double dh = std::isfinite(h) ? h0_ - h : kNegInf;  // log weight
      sum_metro_ += std::isfinite(dh) ? std::min(1.0, std::exp(dh)) : 0.0;
      ++n_metro_;
      if (!(dh > -1000.0)) {  // energy error beyond the divergence threshold
        t.divergent = true;
        t.ok = false;
        return t;
      }
      t.prop = t.end;
      t.rho = t.end.p;
      t.v_beg = velocity(t.end.p);
      t.v_end = t.v_beg;
      t.log_sum_w = dh;
      t.ok = true;
      return t;
    }
    Tree t1 = build_tree(depth - 1, from, dir, stats);
    if (!t1.ok) return t1;
    Tree t2 = build_tree(depth - 1, t1.end, dir, stats);
    if (!t2.ok) {
      t1.ok = false;
      t1.divergent = t2.divergent;
      return t1;
    }
    Tree t;
    t.log_sum_w = log_sum_exp(t1.log_sum_w, t2.log_sum_w);
    t.prop = std::log(rng_.uniform()) < t2.log_sum_w - t.log_sum_w ? std::move(t2.prop)
                                                                   : std::move(t1.prop);
    t.end = std::move(t2.end);
    t.rho = std::move(t1.rho);
    for (std::size_t i = 0; i < t.rho.size(); ++i) t.rho[i] += t2.rho[i];
    t.v_beg = std::move(t1.v_beg);
    t.v_end = std::move(t2.v_end);
    t.ok = !turned(t.rho, t.v_beg, t.v_end);
    return t;
  }

  const SampleTarget& target_;
  Rng rng_;
  int max_depth_;
  std::vector<double> inv_mass_;
  double eps_ = 1.0;
  nuts_detail::PsPoint z_;
  double h0_ = 0.0;
  double sum_metro_ = 0.0;
  int n_metro_ = 0;
};

namespace nuts_detail {

// Warmup schedule: step-size-only opening buffer, doubling mass-estimation
// windows, step-size-only closing buffer (15% / 75% / 10%).
struct WarmupSchedule {
  int init_end = 0;    // first window start
  int window_end = 0;  // end of the mass-estimation phase
  std::vector<int> boundaries;  // iteration indices where a window closes

  explicit WarmupSchedule(int warmup) {
    init_end = static_cast<int>(0.15 * warmup);
    window_end = warmup - static_cast<int>(0.10 * warmup);
    int size = 25;
    if (window_end - init_end < size) {
      window_end = init_end;  // warmup too short for mass windows
      return;
    }
    int next = std::min(init_end + size, window_end);
    while (true) {
      boundaries.push_back(next);
      if (next == window_end) break;
      size *= 2;
      next += size;
      // absorb the remainder when the following doubling would overflow
      if (next + 2 * size > window_end) next = window_end;
    }
  }
};

inline void run_one_chain(const SampleTarget& target, const SamplerConfig& cfg, int chain_index,
                          PosteriorDraws& out) {
  const auto t_start = std::chrono::steady_clock::now();
  Rng chain_rng(cfg.seed, static_cast<std::uint64_t>(chain_index));
  std::vector<double> start = target.initial
                                  ? target.initial(chain_rng)
                                  : std::vector<double>(static_cast<std::size_t>(target.dim));
  NutsChain chain(target, std::move(chain_rng), cfg.max_depth);
  chain.set_position(start);

  const WarmupSchedule sched(cfg.warmup);
  DualAveraging da;
  da.restart(chain.find_reasonable_step_size(), cfg.target_accept, 10.0);
  Welford welford;
  welford.reset(static_cast<std::size_t>(target.dim));
  std::size_t next_boundary = 0;

  ChainDiagnostics& diag = out.diags[static_cast<std::size_t>(chain_index)];
  auto& draws = out.chains[static_cast<std::size_t>(chain_index)];
  draws.assign(static_cast<std::size_t>(out.n_draws) * static_cast<std::size_t>(out.n_params),
               0.0);
  std::vector<double> constrained(static_cast<std::size_t>(target.dim));
  int warmup_divergences = 0;
  double accept_sum = 0.0;

  for (int it = 0; it < cfg.iterations; ++it) {
    const NutsChain::TransitionStats stats = chain.transition();
    if (it < cfg.warmup) {
      if (stats.divergent) ++warmup_divergences;
      chain.set_step_size(da.learn(stats.accept_stat));
      const bool in_window = it >= sched.init_end && it < sched.window_end;
      if (in_window) welford.add(chain.position());
      if (next_boundary < sched.boundaries.size() && it + 1 == sched.boundaries[next_boundary]) {
        chain.set_inv_mass(welford.regularized_variance());
        welford.reset(static_cast<std::size_t>(target.dim));
        ++next_boundary;
        // interior boundaries change the metric materially, so re-center the
        // step-size search there; after the last window the iterate dynamics
        // continue (avoiding a fresh transient) but the reported average is
        // rebased so it only reflects iterations under the final mass matrix
        if (next_boundary < sched.boundaries.size()) {
          da.restart(chain.find_reasonable_step_size(), cfg.target_accept, 1.0);
        } else {
          da.rebase_average();
        }
      }
      if (it + 1 == cfg.warmup) {
        if (warmup_divergences == cfg.warmup) {
          throw std::runtime_error(
              "chain " + std::to_string(chain_index + 1) +
              ": every warmup iteration diverged; the posterior is likely ill-conditioned");
        }
        chain.set_step_size(da.adapted());
        diag.step_size = da.adapted();
      }
    } else {
      const int d = it - cfg.warmup;
      if (target.constrain) {
        target.constrain(chain.position(), constrained);
      } else {
        constrained = chain.position();
      }
      std::copy(constrained.begin(), constrained.end(),
                draws.begin() + static_cast<std::ptrdiff_t>(
                                    static_cast<std::size_t>(d) *
                                    static_cast<std::size_t>(out.n_params)));
      if (stats.divergent) ++diag.divergences;
      diag.tree_depths.push_back(stats.depth);
      accept_sum += stats.accept_stat;
    }
  }
  diag.accept_mean = accept_sum / static_cast<double>(cfg.iterations - cfg.warmup);
  diag.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
}

}  // namespace nuts_detail

// Run all chains (optionally on threads); draws and diagnostics are ordered
// by chain index and are identical for any thread count.
inline PosteriorDraws run_chains(const SampleTarget& target, const SamplerConfig& cfg) {
  if (cfg.chains < 1) throw std::invalid_argument("chains must be >= 1");
  if (!(cfg.iterations > cfg.warmup && cfg.warmup > 0)) {
    throw std::invalid_argument("need iterations > warmup > 0, got " +
                                std::to_string(cfg.iterations) + " / " +
                                std::to_string(cfg.warmup));
  }
  if (target.dim <= 0 || !target.logp_grad) {
    throw std::invalid_argument("sampling target is incomplete");
  }
  PosteriorDraws out;
  out.names = target.names;
  if (out.names.empty()) {
    for (int k = 0; k < target.dim; ++k) out.names.push_back("theta[" + std::to_string(k + 1) + "]");
  }
  out.n_chains = cfg.chains;
  out.n_draws = cfg.iterations - cfg.warmup;
  out.warmup = cfg.warmup;
  out.iterations = cfg.iterations;
  out.n_params = target.dim;
  out.chains.resize(static_cast<std::size_t>(cfg.chains));
  out.diags.resize(static_cast<std::size_t>(cfg.chains));

  const int threads = std::max(1, std::min(cfg.threads, cfg.chains));
  if (threads == 1) {
    for (int c = 0; c < cfg.chains; ++c) nuts_detail::run_one_chain(target, cfg, c, out);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  // static partition: chain c runs on thread c % threads, so the assignment
  // (and every chain's private stream) is independent of scheduling
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      for (int c = t; c < cfg.chains; c += threads) {
        try {
          nuts_detail::run_one_chain(target, cfg, c, out);
        } catch (...) {
          errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace regddm
