// Exact inference over linear-chain potential tables.
//
// A lattice holds log-potentials: emission scores (T x L), transition
// scores (L x L), and explicit start/stop score vectors. The score of a
// label sequence y is
//
//   start[y_1] + sum_t emission[t][y_t]
//              + sum_{t>1} transition[y_{t-1}][y_t] + stop[y_T]
//
// and all quantities here (partition function, node and pairwise marginals,
// Viterbi) are exact functions of that score under log-space forward and
// backward recursions. Hard constraints are imposed by adding the
// kForbidden sentinel to excluded emissions, never true -inf.
//
// brute_force_* enumerate all L^T sequences and are the reference oracles
// for everything else; they share nothing with the DP implementations.

#pragma once

#include <span>
#include <vector>

#include "tagunify/common.hpp"

namespace tagunify {

using LabelSequence = std::vector<int>;

struct LabelConstraint {
  std::vector<std::vector<int>> allowed;  // per token, each non-empty, sorted

  static LabelConstraint all(int T, int L);
  static LabelConstraint fixed(const LabelSequence& y);
  int T() const { return static_cast<int>(allowed.size()); }
  void validate(int T, int L) const;  // throws on mismatch or empty set
};

struct Lattice {
  int T = 0, L = 0;
  std::vector<double> emission;    // T*L, row-major
  std::vector<double> transition;  // L*L
  std::vector<double> start;       // L
  std::vector<double> stop;        // L

  static Lattice zeros(int T, int L);

  double& emis(int t, int i) { return emission[static_cast<size_t>(t) * L + i]; }
  double emis(int t, int i) const { return emission[static_cast<size_t>(t) * L + i]; }
  double& trans(int i, int j) { return transition[static_cast<size_t>(i) * L + j]; }
  double trans(int i, int j) const { return transition[static_cast<size_t>(i) * L + j]; }

  // Multiplies every score by f; f = 1/tau applies a softmax temperature.
  void scale_scores(double f);

  // Copies with excluded labels forced to kForbidden.
  Lattice restricted(const LabelConstraint& c) const;
  Lattice restricted_at(int t, std::span<const int> allowed) const;
};

// T x L row-stochastic table; rows are exact softmax-normalized.
struct MarginalTable {
  int T = 0, L = 0;
  std::vector<double> p;

  MarginalTable() = default;
  MarginalTable(int T_, int L_) : T(T_), L(L_), p(static_cast<size_t>(T_) * L_, 0.0) {}
  double& at(int t, int i) { return p[static_cast<size_t>(t) * L + i]; }
  double at(int t, int i) const { return p[static_cast<size_t>(t) * L + i]; }
  std::span<const double> row(int t) const { return {p.data() + static_cast<size_t>(t) * L, static_cast<size_t>(L)}; }
};

struct ForwardBackward {
  int T = 0, L = 0;
  std::vector<double> alpha;  // T*L
  std::vector<double> beta;   // T*L
  double log_z = 0.0;

  double a(int t, int i) const { return alpha[static_cast<size_t>(t) * L + i]; }
  double b(int t, int i) const { return beta[static_cast<size_t>(t) * L + i]; }
};

ForwardBackward forward_backward(const Lattice& lat);

double log_partition(const Lattice& lat);
double constrained_log_partition(const Lattice& lat, const LabelConstraint& c);

// Node posteriors p(y_t = i | x); each row sums to 1.
MarginalTable node_marginals(const Lattice& lat);
MarginalTable node_marginals(const ForwardBackward& fb);
// log p(y_t = i | x); rows are log-softmax of alpha+beta.
MarginalTable log_node_marginals(const ForwardBackward& fb);

// Posterior conditioned on y_t in S.
MarginalTable clamped_node_marginals(const Lattice& lat, int t, std::span<const int> allowed);

// (T-1) x L x L table of p(y_t = i, y_{t+1} = j | x); each t-slice sums to 1.
// Requires T >= 2.
std::vector<double> pairwise_marginals(const Lattice& lat);
std::vector<double> pairwise_marginals(const Lattice& lat, const ForwardBackward& fb);

struct ViterbiResult {
  LabelSequence path;
  double score = 0.0;  // raw (unnormalized) path score
};

// Argmax path. Ties break toward the smallest label index at every
// backpointer decision, making decoding deterministic.
ViterbiResult viterbi(const Lattice& lat);

// Raw score of one path, accumulated in the same association order as the
// forward recursion so a fully-constrained forward pass reproduces it
// bit-exactly.
double path_score(const Lattice& lat, const LabelSequence& y);

// ---- reference oracles (exhaustive enumeration; guard L^T <= 2^20) ----

double brute_force_log_partition(const Lattice& lat);
double brute_force_constrained_log_partition(const Lattice& lat, const LabelConstraint& c);
MarginalTable brute_force_node_marginals(const Lattice& lat);
MarginalTable brute_force_clamped_node_marginals(const Lattice& lat, int t, std::span<const int> allowed);
std::vector<double> brute_force_pairwise_marginals(const Lattice& lat);
ViterbiResult brute_force_viterbi(const Lattice& lat);

}  // namespace tagunify
