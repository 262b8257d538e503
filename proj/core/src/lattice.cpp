#include "tagunify/lattice.hpp"

#include <cmath>
#include <stdexcept>

namespace tagunify {

LabelConstraint LabelConstraint::all(int T, int L) {
  LabelConstraint c;
  c.allowed.assign(static_cast<size_t>(T), {});
  for (auto& row : c.allowed) {
    row.resize(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) row[static_cast<size_t>(i)] = i;
  }
  return c;
}

LabelConstraint LabelConstraint::fixed(const LabelSequence& y) {
  LabelConstraint c;
  for (int v : y) c.allowed.push_back({v});
  return c;
}

void LabelConstraint::validate(int T, int L) const {
  if (static_cast<int>(allowed.size()) != T)
    throw std::invalid_argument("constraint length does not match lattice length");
  for (const auto& row : allowed) {
    if (row.empty()) throw std::invalid_argument("constraint has an empty allowed set");
    for (int v : row)
      if (v < 0 || v >= L) throw std::invalid_argument("constraint label out of range");
  }
}

Lattice Lattice::zeros(int T, int L) {
  Lattice lat;
  lat.T = T;
  lat.L = L;
  lat.emission.assign(static_cast<size_t>(T) * L, 0.0);
  lat.transition.assign(static_cast<size_t>(L) * L, 0.0);
  lat.start.assign(static_cast<size_t>(L), 0.0);
  lat.stop.assign(static_cast<size_t>(L), 0.0);
  return lat;
}

void Lattice::scale_scores(double f) {
  for (double& x : emission) x *= f;
  for (double& x : transition) x *= f;
  for (double& x : start) x *= f;
  for (double& x : stop) x *= f;
}

Lattice Lattice::restricted(const LabelConstraint& c) const {
  c.validate(T, L);
  Lattice out = *this;
  std::vector<char> ok(static_cast<size_t>(L));
  for (int t = 0; t < T; ++t) {
    std::fill(ok.begin(), ok.end(), 0);
    for (int v : c.allowed[static_cast<size_t>(t)]) ok[static_cast<size_t>(v)] = 1;
    for (int i = 0; i < L; ++i)
      if (!ok[static_cast<size_t>(i)]) out.emis(t, i) = kForbidden;
  }
  return out;
}

Lattice Lattice::restricted_at(int t, std::span<const int> allowed) const {
  if (allowed.empty()) throw std::invalid_argument("empty clamp set");
  Lattice out = *this;
  std::vector<char> ok(static_cast<size_t>(L), 0);
  for (int v : allowed) ok[static_cast<size_t>(v)] = 1;
  for (int i = 0; i < L; ++i)
    if (!ok[static_cast<size_t>(i)]) out.emis(t, i) = kForbidden;
  return out;
}

ForwardBackward forward_backward(const Lattice& lat) {
  const int T = lat.T, L = lat.L;
  ForwardBackward fb;
  fb.T = T;
  fb.L = L;
  fb.alpha.assign(static_cast<size_t>(T) * L, 0.0);
  fb.beta.assign(static_cast<size_t>(T) * L, 0.0);

  std::vector<double> buf(static_cast<size_t>(L));
  auto A = [&](int t, int i) -> double& { return fb.alpha[static_cast<size_t>(t) * L + i]; };
  auto B = [&](int t, int i) -> double& { return fb.beta[static_cast<size_t>(t) * L + i]; };

  for (int j = 0; j < L; ++j) A(0, j) = lat.start[static_cast<size_t>(j)] + lat.emis(0, j);
  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < L; ++j) {
      for (int i = 0; i < L; ++i) buf[static_cast<size_t>(i)] = A(t - 1, i) + lat.trans(i, j);
      A(t, j) = lat.emis(t, j) + log_sum_exp(buf);
    }
  }
  for (int i = 0; i < L; ++i)
    buf[static_cast<size_t>(i)] = A(T - 1, i) + lat.stop[static_cast<size_t>(i)];
  fb.log_z = log_sum_exp(buf);

  for (int i = 0; i < L; ++i) B(T - 1, i) = lat.stop[static_cast<size_t>(i)];
  for (int t = T - 2; t >= 0; --t) {
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < L; ++j)
        buf[static_cast<size_t>(j)] = lat.trans(i, j) + lat.emis(t + 1, j) + B(t + 1, j);
      B(t, i) = log_sum_exp(buf);
    }
  }
  return fb;
}

double log_partition(const Lattice& lat) {
  const int T = lat.T, L = lat.L;
  std::vector<double> prev(static_cast<size_t>(L)), cur(static_cast<size_t>(L)),
      buf(static_cast<size_t>(L));
  for (int j = 0; j < L; ++j)
    prev[static_cast<size_t>(j)] = lat.start[static_cast<size_t>(j)] + lat.emis(0, j);
  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < L; ++j) {
      for (int i = 0; i < L; ++i) buf[static_cast<size_t>(i)] = prev[static_cast<size_t>(i)] + lat.trans(i, j);
      cur[static_cast<size_t>(j)] = lat.emis(t, j) + log_sum_exp(buf);
    }
    prev.swap(cur);
  }
  for (int i = 0; i < L; ++i) prev[static_cast<size_t>(i)] += lat.stop[static_cast<size_t>(i)];
  return log_sum_exp(prev);
}

double constrained_log_partition(const Lattice& lat, const LabelConstraint& c) {
  return log_partition(lat.restricted(c));
}

MarginalTable node_marginals(const ForwardBackward& fb) {
  MarginalTable m(fb.T, fb.L);
  for (int t = 0; t < fb.T; ++t) {
    for (int i = 0; i < fb.L; ++i) m.at(t, i) = fb.a(t, i) + fb.b(t, i);
    softmax_inplace({m.p.data() + static_cast<size_t>(t) * fb.L, static_cast<size_t>(fb.L)});
  }
  return m;
}

MarginalTable node_marginals(const Lattice& lat) { return node_marginals(forward_backward(lat)); }

MarginalTable log_node_marginals(const ForwardBackward& fb) {
  MarginalTable m(fb.T, fb.L);
  std::vector<double> buf(static_cast<size_t>(fb.L));
  for (int t = 0; t < fb.T; ++t) {
    for (int i = 0; i < fb.L; ++i) buf[static_cast<size_t>(i)] = fb.a(t, i) + fb.b(t, i);
    double z = log_sum_exp(buf);
    for (int i = 0; i < fb.L; ++i) m.at(t, i) = buf[static_cast<size_t>(i)] - z;
  }
  return m;
}

MarginalTable clamped_node_marginals(const Lattice& lat, int t, std::span<const int> allowed) {
  return node_marginals(lat.restricted_at(t, allowed));
}

std::vector<double> pairwise_marginals(const Lattice& lat, const ForwardBackward& fb) {
  const int T = lat.T, L = lat.L;
  if (T < 2) throw std::invalid_argument("pairwise marginals need T >= 2");
  std::vector<double> out(static_cast<size_t>(T - 1) * L * L);
  for (int t = 0; t + 1 < T; ++t) {
    double* slice = out.data() + static_cast<size_t>(t) * L * L;
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        slice[static_cast<size_t>(i) * L + j] =
            fb.a(t, i) + lat.trans(i, j) + lat.emis(t + 1, j) + fb.b(t + 1, j);
    softmax_inplace({slice, static_cast<size_t>(L) * L});
  }
  return out;
}

std::vector<double> pairwise_marginals(const Lattice& lat) {
  return pairwise_marginals(lat, forward_backward(lat));
}

ViterbiResult viterbi(const Lattice& lat) {
  const int T = lat.T, L = lat.L;
  std::vector<double> prev(static_cast<size_t>(L)), cur(static_cast<size_t>(L));
  std::vector<int> bp(static_cast<size_t>(T) * L, 0);
  for (int j = 0; j < L; ++j)
    prev[static_cast<size_t>(j)] = lat.start[static_cast<size_t>(j)] + lat.emis(0, j);
  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < L; ++j) {
      int best_i = 0;
      double best = prev[0] + lat.trans(0, j);
      for (int i = 1; i < L; ++i) {
        double s = prev[static_cast<size_t>(i)] + lat.trans(i, j);
        if (s > best) {  // strict: smallest index wins ties
          best = s;
          best_i = i;
        }
      }
      cur[static_cast<size_t>(j)] = lat.emis(t, j) + best;
      bp[static_cast<size_t>(t) * L + j] = best_i;
    }
    prev.swap(cur);
  }
  int best_j = 0;
  double best = prev[0] + lat.stop[0];
  for (int j = 1; j < L; ++j) {
    double s = prev[static_cast<size_t>(j)] + lat.stop[static_cast<size_t>(j)];
    if (s > best) {
      best = s;
      best_j = j;
    }
  }
  ViterbiResult r;
  r.score = best;
  r.path.assign(static_cast<size_t>(T), 0);
  r.path[static_cast<size_t>(T - 1)] = best_j;
  for (int t = T - 1; t > 0; --t)
    r.path[static_cast<size_t>(t - 1)] = bp[static_cast<size_t>(t) * L + r.path[static_cast<size_t>(t)]];
  return r;
}

double path_score(const Lattice& lat, const LabelSequence& y) {
  if (static_cast<int>(y.size()) != lat.T)
    throw std::invalid_argument("path length does not match lattice");
  double s = lat.start[static_cast<size_t>(y[0])] + lat.emis(0, y[0]);
  for (int t = 1; t < lat.T; ++t)
    s = lat.emis(t, y[static_cast<size_t>(t)]) + (s + lat.trans(y[static_cast<size_t>(t - 1)], y[static_cast<size_t>(t)]));
  return s + lat.stop[static_cast<size_t>(y[static_cast<size_t>(lat.T - 1)])];
}

// ---- brute force ----

namespace {

void check_enumerable(const Lattice& lat) {
  double paths = std::pow(static_cast<double>(lat.L), static_cast<double>(lat.T));
  if (paths > static_cast<double>(1 << 20))
    throw std::invalid_argument("instance too large for brute-force enumeration");
}

// Calls fn(y, score) for every sequence, in lexicographic order.
template <typename Fn>
void enumerate_paths(const Lattice& lat, Fn&& fn) {
  LabelSequence y(static_cast<size_t>(lat.T), 0);
  for (;;) {
    double s = lat.start[static_cast<size_t>(y[0])] + lat.emis(0, y[0]);
    for (int t = 1; t < lat.T; ++t)
      s += lat.trans(y[static_cast<size_t>(t - 1)], y[static_cast<size_t>(t)]) +
           lat.emis(t, y[static_cast<size_t>(t)]);
    s += lat.stop[static_cast<size_t>(y[static_cast<size_t>(lat.T - 1)])];
    fn(y, s);
    int t = lat.T - 1;
    while (t >= 0 && y[static_cast<size_t>(t)] == lat.L - 1) y[static_cast<size_t>(t--)] = 0;
    if (t < 0) break;
    ++y[static_cast<size_t>(t)];
  }
}

bool satisfies(const LabelSequence& y, const LabelConstraint& c) {
  for (size_t t = 0; t < y.size(); ++t) {
    const auto& row = c.allowed[t];
    if (std::find(row.begin(), row.end(), y[t]) == row.end()) return false;
  }
  return true;
}

}  // namespace

double brute_force_log_partition(const Lattice& lat) {
  check_enumerable(lat);
  std::vector<double> scores;
  enumerate_paths(lat, [&](const LabelSequence&, double s) { scores.push_back(s); });
  return log_sum_exp(scores);
}

double brute_force_constrained_log_partition(const Lattice& lat, const LabelConstraint& c) {
  check_enumerable(lat);
  c.validate(lat.T, lat.L);
  std::vector<double> scores;
  enumerate_paths(lat, [&](const LabelSequence& y, double s) {
    if (satisfies(y, c)) scores.push_back(s);
  });
  if (scores.empty()) return kForbidden;
  return log_sum_exp(scores);
}

MarginalTable brute_force_node_marginals(const Lattice& lat) {
  check_enumerable(lat);
  // Accumulate exp(score - max) per (t, label), then normalize per row.
  double max_s = -std::numeric_limits<double>::infinity();
  enumerate_paths(lat, [&](const LabelSequence&, double s) { max_s = std::max(max_s, s); });
  MarginalTable m(lat.T, lat.L);
  double z = 0.0;
  enumerate_paths(lat, [&](const LabelSequence& y, double s) {
    double w = std::exp(s - max_s);
    z += w;
    for (int t = 0; t < lat.T; ++t) m.at(t, y[static_cast<size_t>(t)]) += w;
  });
  for (double& x : m.p) x /= z;
  return m;
}

MarginalTable brute_force_clamped_node_marginals(const Lattice& lat, int t,
                                                 std::span<const int> allowed) {
  return brute_force_node_marginals(lat.restricted_at(t, allowed));
}

std::vector<double> brute_force_pairwise_marginals(const Lattice& lat) {
  check_enumerable(lat);
  if (lat.T < 2) throw std::invalid_argument("pairwise marginals need T >= 2");
  double max_s = -std::numeric_limits<double>::infinity();
  enumerate_paths(lat, [&](const LabelSequence&, double s) { max_s = std::max(max_s, s); });
  std::vector<double> out(static_cast<size_t>(lat.T - 1) * lat.L * lat.L, 0.0);
  double z = 0.0;
  enumerate_paths(lat, [&](const LabelSequence& y, double s) {
    double w = std::exp(s - max_s);
    z += w;
    for (int t = 0; t + 1 < lat.T; ++t)
      out[(static_cast<size_t>(t) * lat.L + static_cast<size_t>(y[static_cast<size_t>(t)])) * lat.L +
          static_cast<size_t>(y[static_cast<size_t>(t + 1)])] += w;
  });
  for (double& x : out) x /= z;
  return out;
}

ViterbiResult brute_force_viterbi(const Lattice& lat) {
  check_enumerable(lat);
  ViterbiResult best;
  bool first = true;
  enumerate_paths(lat, [&](const LabelSequence& y, double s) {
    if (first || s > best.score) {  // lexicographically first argmax wins
      best.path = y;
      best.score = s;
      first = false;
    }
  });
  return best;
}

}  // namespace tagunify
