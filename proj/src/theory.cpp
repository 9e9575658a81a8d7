#include "graphclip/theory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "graphclip/errors.hpp"
#include "graphclip/graph.hpp"

namespace graphclip::theory {

namespace {

// Box-Muller pair from the portable uniform draw.
struct NormalSource {
  std::mt19937_64 rng;
  double spare = 0.0;
  bool has_spare = false;

  explicit NormalSource(std::uint64_t seed) : rng(seed) {}
  double next() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare = r * std::sin(2.0 * M_PI * u2);
    has_spare = true;
    return r * std::cos(2.0 * M_PI * u2);
  }
};

std::uint64_t block_seed(std::uint64_t seed, std::size_t block) { return mix_seed(seed ^ mix_seed(block + 1)); }

// Runs `fn(source, count, out)` over fixed blocks; `out` holds `width` sums.
// Partial sums are reduced in block order.
template <class Fn>
std::vector<double> block_sums(std::size_t n, std::uint64_t seed, std::size_t width, Exec exec, Fn fn) {
  const std::size_t blocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<std::vector<double>> partial(blocks, std::vector<double>(width, 0.0));
  auto run = [&](std::size_t b) {
    NormalSource src(block_seed(seed, b));
    const std::size_t count = std::min(kBlockSize, n - b * kBlockSize);
    fn(src, count, partial[b]);
  };
  if (exec == Exec::Parallel) {
    const auto nb = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < nb; ++b) run(static_cast<std::size_t>(b));
  } else {
    for (std::size_t b = 0; b < blocks; ++b) run(b);
  }
  std::vector<double> total(width, 0.0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < width; ++i) total[i] += p[i];
  return total;
}

McEstimate finish(double sum, double sumsq, std::size_t n) {
  McEstimate e;
  e.samples = n;
  e.mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sumsq / static_cast<double>(n) - e.mean * e.mean);
  e.stderr_ = std::sqrt(var / static_cast<double>(n));
  return e;
}

bool predicts_one(double t, double m, LinearClassifier c, double z1, double z2) {
  return c.w * (z1 + t * m * z2) + c.b >= 0.0;
}

void require_samples(std::size_t n) {
  if (n == 0) throw ValidationError("Monte Carlo estimate needs at least one sample");
}

}  // namespace

McEstimate alignment_loss_mc(double t, std::size_t n, std::uint64_t seed, Exec exec) {
  require_samples(n);
  if (t < 0.0 || !std::isfinite(t)) throw ValidationError("representation slope t must be finite and >= 0");
  const auto s = block_sums(n, seed, 2, exec, [t](NormalSource& src, std::size_t count, std::vector<double>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      const double z2 = src.next(), a = src.next(), b = src.next();
      const double d = t * z2 * (a - b);
      out[0] += d * d;
      out[1] += d * d * d * d;
    }
  });
  return finish(s[0], s[1], n);
}

McEstimate risk_mc(double t, double m, LinearClassifier c, std::size_t n, std::uint64_t seed, Exec exec) {
  require_samples(n);
  if (!std::isfinite(m)) throw ValidationError("domain scale m must be finite");
  const auto s = block_sums(n, seed, 1, exec, [&](NormalSource& src, std::size_t count, std::vector<double>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      const double z1 = src.next(), z2 = src.next();
      if (predicts_one(t, m, c, z1, z2) != (z1 >= 0.0)) out[0] += 1.0;
    }
  });
  return finish(s[0], s[0], n);
}

PropositionReport verify_proposition(double zeta, std::size_t n, std::uint64_t seed, Exec exec) {
  if (!(zeta > 0.0) || !std::isfinite(zeta)) throw ValidationError("zeta must be a positive number");
  PropositionReport r;
  r.zeta = zeta;
  r.t = std::sqrt(zeta) / 2.0;
  r.alignment = alignment_loss_mc(r.t, n, seed, exec);
  // Common random numbers for the two domains.
  const std::uint64_t risk_seed = mix_seed(seed ^ 0x7269736bULL);
  const auto s = block_sums(n, risk_seed, 3, exec, [&](NormalSource& src, std::size_t count, std::vector<double>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      const double z1 = src.next(), z2 = src.next();
      const bool y = z1 >= 0.0;
      const double e0 = predicts_one(r.t, 0.0, {}, z1, z2) != y ? 1.0 : 0.0;
      const double e1 = predicts_one(r.t, 1.0 / r.t, {}, z1, z2) != y ? 1.0 : 0.0;
      out[0] += e0;
      out[1] += e1;
      out[2] += (e1 - e0) * (e1 - e0);
    }
  });
  r.risk_m0 = finish(s[0], s[0], n);
  r.risk_m1 = finish(s[1], s[1], n);
  const McEstimate diff = finish(s[1] - s[0], s[2], n);
  r.gap = std::abs(diff.mean);
  r.gap_stderr = diff.stderr_;
  r.alignment_ok = r.alignment.mean < zeta;
  r.gap_ok = r.gap >= 0.25 - 3.0 * r.gap_stderr;
  r.passed = r.alignment_ok && r.gap_ok;
  return r;
}

TheoremReport verify_theorem_bound(const TheoremConfig& cfg, Exec exec) {
  if (!std::isfinite(cfg.radius) || cfg.radius <= 0.0)
    throw ValidationError("the bound constant is not finite on an unbounded region; set a finite positive "
                          "truncation radius (theory.radius)");
  if (cfg.domains.empty()) throw ValidationError("theorem check needs at least one domain");
  if (cfg.samples == 0) throw ValidationError("theorem check needs samples > 0");
  for (const auto& c : cfg.classifiers)
    if (c.w == 0.0) throw ValidationError("classifier weight must be nonzero");

  TheoremReport rep;
  rep.config = cfg;
  // Margin density given Z2 is φ(z1)/|w|; its sup over |z1| <= radius is at z1 = 0.
  rep.kappa = 1.0 / std::sqrt(2.0 * M_PI);
  const auto [lo, hi] = std::minmax_element(cfg.domains.begin(), cfg.domains.end());
  const double spread = *hi - *lo;
  const std::size_t nd = cfg.domains.size();

  struct Job {
    double t;
    LinearClassifier c;
  };
  std::vector<Job> jobs;
  for (double t : cfg.ts)
    for (const auto& c : cfg.classifiers) jobs.push_back({t, c});
  rep.points.resize(jobs.size());

  auto evaluate = [&](std::size_t j) {
    const auto [t, c] = jobs[j];
    if (t < 0.0 || !std::isfinite(t)) throw ValidationError("representation slope t must be finite and >= 0");
    // Sums: per-domain errors, pairwise squared error differences, Δ², and
    // E_R[Δ], E_R[Δ²], count on the truncation region.
    const std::size_t pairs = nd * nd;
    const std::size_t width = nd + pairs + 4;
    const std::uint64_t seed = mix_seed(cfg.seed ^ mix_seed(j + 0x100));
    const auto s = block_sums(cfg.samples, seed, width, Exec::Serial,
                              [&](NormalSource& src, std::size_t count, std::vector<double>& out) {
                                std::vector<double> e(nd);
                                for (std::size_t i = 0; i < count; ++i) {
                                  const double z1 = src.next(), z2 = src.next();
                                  const bool y = z1 >= 0.0;
                                  for (std::size_t a = 0; a < nd; ++a) {
                                    e[a] = predicts_one(t, cfg.domains[a], c, z1, z2) != y ? 1.0 : 0.0;
                                    out[a] += e[a];
                                  }
                                  for (std::size_t a = 0; a < nd; ++a)
                                    for (std::size_t b = 0; b < nd; ++b)
                                      out[nd + a * nd + b] += (e[a] - e[b]) * (e[a] - e[b]);
                                  const double delta = t * std::abs(z2) * spread;
                                  out[nd + pairs] += delta * delta;
                                  if (z1 * z1 + z2 * z2 <= cfg.radius * cfg.radius) {
                                    out[nd + pairs + 1] += delta;
                                    out[nd + pairs + 2] += delta * delta;
                                    out[nd + pairs + 3] += 1.0;
                                  }
                                }
                              });
    TheoremPoint p;
    p.t = t;
    p.c = c;
    const double n = static_cast<double>(cfg.samples);
    for (std::size_t a = 0; a < nd; ++a)
      for (std::size_t b = 0; b < nd; ++b) {
        const McEstimate d = finish(s[a] - s[b], s[nd + a * nd + b], cfg.samples);
        if (d.mean > p.lhs || (a == 0 && b == 0)) {
          p.lhs = std::max(0.0, d.mean);
          p.lhs_stderr = d.stderr_;
          p.m_a = cfg.domains[a];
          p.m_b = cfg.domains[b];
        }
      }
    p.l_ial = s[nd + pairs] / n;
    const double in_region = s[nd + pairs + 3];
    const double er_delta = in_region > 0 ? s[nd + pairs + 1] / in_region : 0.0;
    const double er_delta2 = in_region > 0 ? s[nd + pairs + 2] / in_region : 0.0;
    const double norm_c = std::abs(c.w);
    if (p.l_ial > 0.0 && er_delta2 > 0.0) {
      p.constant = 2.0 * rep.kappa * er_delta / (norm_c * er_delta2);
      p.bound = p.constant * norm_c * p.l_ial;
    }
    p.violated = p.lhs > p.bound + cfg.sigmas * p.lhs_stderr;
    rep.points[j] = p;
  };

  if (exec == Exec::Parallel) {
    const auto nj = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t j = 0; j < nj; ++j) evaluate(static_cast<std::size_t>(j));
  } else {
    for (std::size_t j = 0; j < jobs.size(); ++j) evaluate(j);
  }
  for (const auto& p : rep.points) rep.violations += p.violated ? 1 : 0;
  rep.passed = rep.violations == 0;
  return rep;
}

std::string PropositionReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "zeta=" << zeta << " t=" << t << '\n';
  os << "alignment=" << alignment.mean << " stderr=" << alignment.stderr_ << " closed_form=" << 2.0 * t * t
     << " below_zeta=" << (alignment_ok ? "yes" : "no") << '\n';
  os << "risk(m=0)=" << risk_m0.mean << " risk(m=1/t)=" << risk_m1.mean << '\n';
  os << "risk_gap=" << gap << " stderr=" << gap_stderr << " closed_form=0.25"
     << " verdict=" << (passed ? "pass" : "fail") << '\n';
  return os.str();
}

std::string TheoremReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "samples=" << config.samples << " radius=" << config.radius << " kappa=" << kappa << " domains=";
  for (std::size_t i = 0; i < config.domains.size(); ++i) os << (i ? "," : "") << config.domains[i];
  os << '\n';
  os << "t\tw\tb\tlhs\tstderr\tpair\tL_IAL\tconstant\tbound\tverdict\n";
  for (const auto& p : points)
    os << p.t << '\t' << p.c.w << '\t' << p.c.b << '\t' << p.lhs << '\t' << p.lhs_stderr << '\t' << p.m_a << "|"
       << p.m_b << '\t' << p.l_ial << '\t' << p.constant << '\t' << p.bound << '\t' << (p.violated ? "VIOLATION" : "ok")
       << '\n';
  os << "violations=" << violations << " verdict=" << (passed ? "pass" : "fail") << '\n';
  return os.str();
}

}  // namespace graphclip::theory
