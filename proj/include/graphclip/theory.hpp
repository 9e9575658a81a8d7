#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace graphclip::theory {

// Two-dimensional toy problem: Z = (Z1, Z2) standard normal, domain m maps it
// to (Z1, m·Z2), label Y = 1 iff Z1 >= 0. The representation is
// g(x) = x1 + t·x2 and a classifier predicts 1 iff w·g + b >= 0.
struct LinearClassifier {
  double w = 1.0;
  double b = 0.0;
};

enum class Exec { Serial, Parallel };

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

// Samples are drawn in fixed blocks with one RNG stream per block, so the
// serial and parallel paths give bit-identical results.
inline constexpr std::size_t kBlockSize = 8192;

// E (g(τ_α Z) − g(τ_β Z))² with α, β independent standard normal scales.
// Closed form: 2t².
McEstimate alignment_loss_mc(double t, std::size_t n, std::uint64_t seed, Exec exec = Exec::Parallel);

McEstimate risk_mc(double t, double m, LinearClassifier c, std::size_t n, std::uint64_t seed,
                   Exec exec = Exec::Parallel);

struct PropositionReport {
  double zeta = 0.0;
  double t = 0.0;
  McEstimate alignment;
  McEstimate risk_m0;
  McEstimate risk_m1;  // m = 1/t
  double gap = 0.0;
  double gap_stderr = 0.0;
  bool alignment_ok = false;
  bool gap_ok = false;
  bool passed = false;

  std::string to_text() const;
};

// t = √ζ / 2, domains m = 0 and m = 1/t.
PropositionReport verify_proposition(double zeta, std::size_t n, std::uint64_t seed, Exec exec = Exec::Parallel);

struct TheoremConfig {
  std::vector<double> ts{0.0, 0.1, 0.25, 0.5, 1.0};
  std::vector<LinearClassifier> classifiers{{1.0, 0.0}, {2.0, 0.0}, {1.0, 0.5}, {1.0, -1.0}, {-1.0, 0.25}};
  std::vector<double> domains{-2.0, -1.0, 0.0, 1.0, 2.0};
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  double radius = 6.0;  // truncation region ‖z‖ <= radius for the constant
  double sigmas = 3.0;  // allowed statistical slack in standard errors
};

struct TheoremPoint {
  double t = 0.0;
  LinearClassifier c;
  double lhs = 0.0;  // max pairwise risk difference over domains
  double lhs_stderr = 0.0;
  double m_a = 0.0, m_b = 0.0;  // domains attaining the max
  double l_ial = 0.0;           // E sup_{τ,τ'} (g(τZ) − g(τ'Z))²
  double constant = 0.0;        // m in  LHS <= m·‖c‖·L_IAL
  double bound = 0.0;
  bool violated = false;
};

struct TheoremReport {
  TheoremConfig config;
  double kappa = 0.0;  // sup of the margin density on the region
  std::vector<TheoremPoint> points;
  std::size_t violations = 0;
  bool passed = false;

  std::string to_text() const;
};

TheoremReport verify_theorem_bound(const TheoremConfig& cfg, Exec exec = Exec::Parallel);

}  // namespace graphclip::theory
