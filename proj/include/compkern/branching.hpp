#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "pgf.hpp"
#include "rng.hpp"

namespace compkern {

// Vose's alias method over p_0..p_D. Tail mass beyond D cannot be sampled and
// is dropped by renormalizing; tail_dropped records how much.
class AliasTable {
 public:
  explicit AliasTable(const Pgf& g) {
    const int n = g.degree_cap() + 1;
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    tail_dropped_ = g.tail_mass;
    const double total = g.mass();
    require(total > 0, "AliasTable: zero probability mass");
    std::vector<double> scaled(n);
    std::vector<int> small, large;
    for (int i = 0; i < n; ++i) {
      scaled[i] = g.coefficients[i] / total * n;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const int s = small.back(), l = large.back();
      small.pop_back();
      large.pop_back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (int i : large) prob_[i] = 1.0;
    for (int i : small) prob_[i] = 1.0;
  }

  template <class Eng>
  int sample(Eng& eng) const {
    const double u = eng.uniform() * prob_.size();
    const auto i = static_cast<std::size_t>(u);
    const std::size_t idx = i < prob_.size() ? i : prob_.size() - 1;
    return (u - idx) < prob_[idx] ? static_cast<int>(idx) : alias_[idx];
  }

  double tail_dropped() const { return tail_dropped_; }

 private:
  std::vector<double> prob_;
  std::vector<int> alias_;
  double tail_dropped_ = 0.0;
};

struct GwTrajectory {
  std::vector<std::uint64_t> sizes;  // Z_0..Z_L, shorter when truncated
  bool extinct = false;
  bool truncated = false;  // population exceeded the cap; later sizes unknown
  int truncated_at = -1;   // generation whose size exceeded the cap

  std::uint64_t final_size() const { return sizes.back(); }
};

inline constexpr std::uint64_t kDefaultPopulationCap = 10'000'000;

inline GwTrajectory simulate_one(const AliasTable& table, int L, Philox4x32 eng, std::uint64_t cap) {
  GwTrajectory t;
  t.sizes.reserve(L + 1);
  t.sizes.push_back(1);
  std::uint64_t z = 1;
  for (int l = 1; l <= L; ++l) {
    std::uint64_t next = 0;
    for (std::uint64_t i = 0; i < z; ++i) next += static_cast<std::uint64_t>(table.sample(eng));
    z = next;
    t.sizes.push_back(z);
    if (z == 0) {
      t.extinct = true;
      t.sizes.resize(L + 1, 0);
      return t;
    }
    if (z > cap && l < L) {
      t.truncated = true;
      t.truncated_at = l;
      return t;
    }
  }
  return t;
}

// Independent trajectories; trial i always uses substream i.
inline std::vector<GwTrajectory> simulate_generation_sizes(const Pgf& g, int L, std::uint64_t trials, std::uint64_t seed,
                                                           std::uint64_t cap = kDefaultPopulationCap) {
  require(L >= 0, "simulate_generation_sizes: depth must be >= 0");
  require(trials >= 1, "simulate_generation_sizes: trials must be >= 1");
  const AliasTable table(g);
  std::vector<GwTrajectory> out(trials);
  constexpr std::uint64_t block = 4096;
  const std::uint64_t blocks = (trials + block - 1) / block;
  parallel_for(blocks, [&](std::size_t b) {
    const std::uint64_t end = std::min<std::uint64_t>(trials, (b + 1) * block);
    for (std::uint64_t i = b * block; i < end; ++i)
      out[i] = simulate_one(table, L, substream(seed, StreamTag::gw_trials, i), cap);
  });
  return out;
}

struct GwSummary {
  std::uint64_t trials = 0;
  std::uint64_t extinct = 0;
  std::uint64_t truncated = 0;
  double survival_fraction = 0.0;
  double survival_stderr = 0.0;
  std::vector<double> mean_sizes;  // per generation, over non-truncated trajectories
};

inline GwSummary summarize(const std::vector<GwTrajectory>& trajs, int L) {
  GwSummary s;
  s.trials = trajs.size();
  s.mean_sizes.assign(L + 1, 0.0);
  std::uint64_t complete = 0;
  for (const auto& t : trajs) {
    if (t.extinct) ++s.extinct;
    if (t.truncated) {
      ++s.truncated;
      continue;
    }
    ++complete;
    for (int l = 0; l <= L; ++l) s.mean_sizes[l] += static_cast<double>(t.sizes[l]);
  }
  if (complete) for (double& m : s.mean_sizes) m /= static_cast<double>(complete);
  const double n = static_cast<double>(s.trials);
  s.survival_fraction = 1.0 - s.extinct / n;
  s.survival_stderr = std::sqrt(s.survival_fraction * (1 - s.survival_fraction) / n);
  return s;
}

inline void to_json(nlohmann::json& j, const GwSummary& s) {
  j = nlohmann::json{{"trials", s.trials},
                     {"extinct", s.extinct},
                     {"truncated", s.truncated},
                     {"survival_fraction", s.survival_fraction},
                     {"survival_stderr", s.survival_stderr},
                     {"mean_generation_sizes", s.mean_sizes}};
}

// Coefficients of G^{(L)} up to degree D. Each level computes
// G^{(l+1)} = G^{(l)} o G by Horner's rule in the ring of power series
// truncated at D, O(D^2 deg G) per level. Whatever falls above D, plus the
// base tail, is carried in tail_mass.
inline Pgf exact_generation_distribution(const Pgf& g, int L, int D = 512) {
  require(L >= 0, "exact_generation_distribution: depth must be >= 0");
  require(D >= 1, "exact_generation_distribution: degree cap must be >= 1");
  std::vector<double> cur(D + 1, 0.0);
  cur[1] = 1.0;
  const int deg = g.degree_cap();
  std::vector<double> acc(D + 1), tmp(D + 1);
  for (int l = 0; l < L; ++l) {
    int top = D;
    while (top > 0 && cur[top] == 0.0) --top;
    std::fill(acc.begin(), acc.end(), 0.0);
    acc[0] = cur[top];
    int acc_deg = 0;
    for (int k = top - 1; k >= 0; --k) {
      // acc <- acc * G + cur[k]
      std::fill(tmp.begin(), tmp.end(), 0.0);
      const int new_deg = std::min(D, acc_deg + deg);
      for (int i = 0; i <= acc_deg; ++i) {
        const double a = acc[i];
        if (a == 0.0) continue;
        const int jmax = std::min(deg, D - i);
        for (int j = 0; j <= jmax; ++j) tmp[i + j] += a * g.coefficients[j];
      }
      tmp[0] += cur[k];
      acc.swap(tmp);
      acc_deg = new_deg;
    }
    cur = acc;
  }
  Pgf out;
  out.coefficients = std::move(cur);
  double total = 0.0;
  for (double p : out.coefficients) total += p;
  out.tail_mass = std::max(0.0, 1.0 - total);
  out.family = "generation";
  out.params = {{"depth", L}, {"base_family", g.family}};
  return out;
}

struct LaplacePoint {
  double t = 0.0;
  double estimate = 0.0;  // E[exp(-t W) | survival]
  double stderr_ = 0.0;
};

struct WEstimate {
  double mu = 0.0;
  int depth = 0;
  std::uint64_t trials = 0;
  std::uint64_t survived = 0;
  std::uint64_t truncated = 0;
  // Z_L / mu^L over surviving, non-truncated trajectories.
  std::vector<double> samples;
  double mean = 0.0, variance = 0.0, mean_stderr = 0.0, variance_stderr = 0.0;
  // Same statistics with extinct trajectories contributing W = 0; these are
  // the moments E[W] = 1 and Var[W] = Var[Y]/(mu(mu - 1)) refer to.
  double unconditional_mean = 0.0, unconditional_variance = 0.0;
  double unconditional_mean_stderr = 0.0, unconditional_variance_stderr = 0.0;
  std::vector<LaplacePoint> laplace;

  void write_laplace_csv(std::ostream& os) const {
    os << "t,laplace_estimate,stderr\n";
    for (const auto& p : laplace) os << fmt::format("{:.17g},{:.17g},{:.17g}\n", p.t, p.estimate, p.stderr_);
  }
};

namespace detail {
struct Moments {
  double mean = 0, var = 0, mean_se = 0, var_se = 0;
};
inline Moments moments(const std::vector<double>& x) {
  Moments m;
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return m;
  for (double v : x) m.mean += v;
  m.mean /= n;
  double m2 = 0, m4 = 0;
  for (double v : x) {
    const double d = (v - m.mean) * (v - m.mean);
    m2 += d;
    m4 += d * d;
  }
  m.var = m2 / (n - 1);
  m4 /= n;
  m.mean_se = std::sqrt(m.var / n);
  m.var_se = std::sqrt(std::max(0.0, m4 - m.var * m.var) / n);
  return m;
}
}  // namespace detail

inline std::vector<double> default_t_grid() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(0.25 * i);
  return t;
}

inline WEstimate kesten_stigum_estimate(const Pgf& g, int L, std::uint64_t trials, std::uint64_t seed,
                                        const std::vector<double>& t_grid = default_t_grid(),
                                        std::uint64_t cap = kDefaultPopulationCap) {
  const double mu = pgf_mean(g);
  require(mu > 1.0, "kesten_stigum_estimate: requires mu > 1 (got " + std::to_string(mu) + ")");
  const auto trajs = simulate_generation_sizes(g, L, trials, seed, cap);
  WEstimate w;
  w.mu = mu;
  w.depth = L;
  w.trials = trials;
  const double scale = std::pow(mu, -L);
  std::vector<double> all;
  all.reserve(trials);
  for (const auto& t : trajs) {
    if (t.truncated) {
      ++w.truncated;
      continue;
    }
    const double v = static_cast<double>(t.final_size()) * scale;
    all.push_back(v);
    if (!t.extinct) w.samples.push_back(v);
  }
  w.survived = w.samples.size() + w.truncated;
  const auto c = detail::moments(w.samples);
  w.mean = c.mean;
  w.variance = c.var;
  w.mean_stderr = c.mean_se;
  w.variance_stderr = c.var_se;
  const auto u = detail::moments(all);
  w.unconditional_mean = u.mean;
  w.unconditional_variance = u.var;
  w.unconditional_mean_stderr = u.mean_se;
  w.unconditional_variance_stderr = u.var_se;
  for (double t : t_grid) {
    require(t >= 0, "kesten_stigum_estimate: t-grid must be non-negative");
    std::vector<double> e;
    e.reserve(w.samples.size());
    for (double v : w.samples) e.push_back(std::exp(-t * v));
    const auto m = detail::moments(e);
    w.laplace.push_back({t, m.mean, m.mean_se});
  }
  return w;
}

inline void to_json(nlohmann::json& j, const WEstimate& w) {
  j = nlohmann::json{{"mu", w.mu},
                     {"depth", w.depth},
                     {"trials", w.trials},
                     {"survived", w.survived},
                     {"truncated", w.truncated},
                     {"conditional", {{"mean", w.mean}, {"mean_stderr", w.mean_stderr}, {"variance", w.variance},
                                      {"variance_stderr", w.variance_stderr}}},
                     {"unconditional", {{"mean", w.unconditional_mean}, {"mean_stderr", w.unconditional_mean_stderr},
                                        {"variance", w.unconditional_variance},
                                        {"variance_stderr", w.unconditional_variance_stderr}}}};
}

}  // namespace compkern
