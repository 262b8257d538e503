#include "tagunify/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace tagunify {

void DistillConfig::validate() const {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0,1]");
}

LabelConstraint PartialAnnotation::induced_constraint() const {
  if (!projection) throw std::invalid_argument("partial annotation without projection");
  LabelConstraint c;
  c.allowed.reserve(observed.size());
  for (int label : observed) {
    if (label < 0 || label >= static_cast<int>(projection->groups.size()))
      throw std::invalid_argument("observed label outside source tag set");
    const auto& group = projection->groups[static_cast<size_t>(label)];
    if (group.empty()) throw std::invalid_argument("projection group is empty");
    c.allowed.push_back(group);
  }
  return c;
}

LabelConstraint induced_constraint(const std::vector<BioLabel>& labels, const TagSet& source,
                                   const Projection& proj) {
  PartialAnnotation pa;
  pa.projection = &proj;
  pa.observed.reserve(labels.size());
  for (const auto& l : labels) pa.observed.push_back(source.index_of(l));
  return pa.induced_constraint();
}

double nll_loss(const Model& m, const SentenceFeatures& feats, const LabelSequence& y,
                ParamVec* grad, double grad_weight) {
  for (int v : y)
    if (v < 0 || v >= m.L()) throw std::invalid_argument("gold label out of range");
  Lattice lat = score_lattice(m, feats);
  ForwardBackward fb = forward_backward(lat);
  double loss = fb.log_z - path_score(lat, y);
  if (grad) {
    MarginalTable marg = node_marginals(fb);
    std::vector<double> pair;
    if (lat.T >= 2) pair = pairwise_marginals(lat, fb);
    accumulate_expected_counts(feats, marg, lat.T >= 2 ? pair.data() : nullptr, grad_weight, *grad);
    accumulate_observed_counts(feats, y, -grad_weight, *grad);
  }
  return loss;
}

double marginal_nll_loss(const Model& m, const SentenceFeatures& feats, const LabelConstraint& c,
                         ParamVec* grad, double grad_weight) {
  Lattice lat = score_lattice(m, feats);
  c.validate(lat.T, lat.L);
  Lattice clat = lat.restricted(c);
  ForwardBackward fb = forward_backward(lat);
  ForwardBackward cfb = forward_backward(clat);
  double loss = fb.log_z - cfb.log_z;
  if (grad) {
    MarginalTable marg = node_marginals(fb);
    MarginalTable cmarg = node_marginals(cfb);
    std::vector<double> pair, cpair;
    if (lat.T >= 2) {
      pair = pairwise_marginals(lat, fb);
      cpair = pairwise_marginals(clat, cfb);
    }
    accumulate_expected_counts(feats, marg, lat.T >= 2 ? pair.data() : nullptr, grad_weight, *grad);
    accumulate_expected_counts(feats, cmarg, lat.T >= 2 ? cpair.data() : nullptr, -grad_weight,
                               *grad);
  }
  return loss;
}

LocalDistillResult local_distill_loss(const MarginalTable& p, const MarginalTable& q,
                                      const Projection& proj) {
  if (p.T != q.T) throw std::invalid_argument("distill: sentence lengths differ");
  if (static_cast<size_t>(q.L) != proj.groups.size() ||
      static_cast<size_t>(p.L) != proj.group_of.size())
    throw std::invalid_argument("distill: projection does not match the tag sets");

  LocalDistillResult r;
  r.dlogits.assign(static_cast<size_t>(p.T) * p.L, 0.0);
  std::vector<double> group_mass(static_cast<size_t>(q.L));
  for (int t = 0; t < p.T; ++t) {
    double q_total = 0.0;
    for (int i = 0; i < q.L; ++i) {
      double mass = 0.0;
      for (int j : proj.groups[static_cast<size_t>(i)]) mass += p.at(t, j);
      group_mass[static_cast<size_t>(i)] = mass;
      q_total += q.at(t, i);
      if (q.at(t, i) > 0.0) r.loss -= q.at(t, i) * std::log(mass);
    }
    for (int j = 0; j < p.L; ++j) {
      int g = proj.group_of[static_cast<size_t>(j)];
      double ratio = q.at(t, g) > 0.0 ? q.at(t, g) / group_mass[static_cast<size_t>(g)] : 0.0;
      r.dlogits[static_cast<size_t>(t) * p.L + j] = p.at(t, j) * (q_total - ratio);
    }
  }
  return r;
}

double local_distill_model_loss(const Model& student, const SentenceFeatures& feats,
                                const MarginalTable& q, const Projection& proj,
                                const DistillConfig& cfg, ParamVec* grad, double grad_weight) {
  cfg.validate();
  Lattice lat = score_lattice(student, feats);
  MarginalTable p(lat.T, lat.L);
  for (int t = 0; t < lat.T; ++t) {
    for (int i = 0; i < lat.L; ++i) p.at(t, i) = lat.emis(t, i) / cfg.tau;
    softmax_inplace({p.p.data() + static_cast<size_t>(t) * lat.L, static_cast<size_t>(lat.L)});
  }
  LocalDistillResult r = local_distill_loss(p, q, proj);
  if (grad) {
    double w = grad_weight / cfg.tau;
    for (int t = 0; t < lat.T; ++t)
      for (uint32_t f : feats.tokens[static_cast<size_t>(t)]) {
        auto& row = grad->emission_row(f);
        for (int i = 0; i < lat.L; ++i)
          row[static_cast<size_t>(i)] += w * r.dlogits[static_cast<size_t>(t) * lat.L + i];
      }
  }
  return r.loss;
}

double crf_distill_loss(const Model& student, const SentenceFeatures& feats,
                        const MarginalTable& q, const Projection& proj, const DistillConfig& cfg,
                        ParamVec* grad, double grad_weight) {
  cfg.validate();
  if (static_cast<size_t>(q.L) != proj.groups.size() ||
      static_cast<size_t>(student.L()) != proj.group_of.size())
    throw std::invalid_argument("distill: projection does not match the tag sets");
  Lattice lat = score_lattice(student, feats);
  lat.scale_scores(1.0 / cfg.tau);
  if (q.T != lat.T) throw std::invalid_argument("distill: sentence lengths differ");

  ForwardBackward fb = forward_backward(lat);
  MarginalTable logp = log_node_marginals(fb);

  double loss = 0.0;
  std::vector<double> buf;
  for (int t = 0; t < lat.T; ++t) {
    for (int i = 0; i < q.L; ++i) {
      if (q.at(t, i) <= 0.0) continue;
      buf.clear();
      for (int j : proj.groups[static_cast<size_t>(i)]) buf.push_back(logp.at(t, j));
      loss -= q.at(t, i) * log_sum_exp(buf);
    }
  }

  if (grad) {
    MarginalTable marg = node_marginals(fb);
    std::vector<double> pair;
    if (lat.T >= 2) pair = pairwise_marginals(lat, fb);
    const double* pair_ptr = lat.T >= 2 ? pair.data() : nullptr;

    // grad = (1/tau) * sum_{t,i} q_{t,i} (E[counts] - E[counts | y_t in group_i]).
    double total_mass = 0.0;
    for (int t = 0; t < lat.T; ++t) {
      for (int i = 0; i < q.L; ++i) {
        double mass = q.at(t, i);
        if (mass < kDistillMassCutoff) continue;
        total_mass += mass;
        Lattice clat = lat.restricted_at(t, proj.groups[static_cast<size_t>(i)]);
        ForwardBackward cfb = forward_backward(clat);
        MarginalTable cmarg = node_marginals(cfb);
        std::vector<double> cpair;
        if (lat.T >= 2) cpair = pairwise_marginals(clat, cfb);
        accumulate_expected_counts(feats, cmarg, lat.T >= 2 ? cpair.data() : nullptr,
                                   -grad_weight * mass / cfg.tau, *grad);
      }
    }
    accumulate_expected_counts(feats, marg, pair_ptr, grad_weight * total_mass / cfg.tau, *grad);
  }
  return loss;
}

double local_nll_loss(const Model& m, const SentenceFeatures& feats, const LabelSequence& y,
                      ParamVec* grad, double grad_weight) {
  const int L = m.L();
  for (int v : y)
    if (v < 0 || v >= L) throw std::invalid_argument("gold label out of range");
  Lattice lat = score_lattice(m, feats);
  double loss = 0.0;
  std::vector<double> row(static_cast<size_t>(L));
  for (int t = 0; t < lat.T; ++t) {
    for (int i = 0; i < L; ++i) row[static_cast<size_t>(i)] = lat.emis(t, i);
    double z = log_sum_exp(row);
    loss += z - lat.emis(t, y[static_cast<size_t>(t)]);
    if (grad) {
      softmax_inplace(row);
      row[static_cast<size_t>(y[static_cast<size_t>(t)])] -= 1.0;
      for (uint32_t f : feats.tokens[static_cast<size_t>(t)]) {
        auto& dst = grad->emission_row(f);
        for (int i = 0; i < L; ++i) dst[static_cast<size_t>(i)] += grad_weight * row[static_cast<size_t>(i)];
      }
    }
  }
  return loss;
}

double local_marginal_nll_loss(const Model& m, const SentenceFeatures& feats,
                               const LabelConstraint& c, ParamVec* grad, double grad_weight) {
  const int L = m.L();
  Lattice lat = score_lattice(m, feats);
  c.validate(lat.T, L);
  double loss = 0.0;
  std::vector<double> row(static_cast<size_t>(L)), sub;
  for (int t = 0; t < lat.T; ++t) {
    for (int i = 0; i < L; ++i) row[static_cast<size_t>(i)] = lat.emis(t, i);
    double z = log_sum_exp(row);
    sub.clear();
    for (int i : c.allowed[static_cast<size_t>(t)]) sub.push_back(lat.emis(t, i));
    double cz = log_sum_exp(sub);
    loss += z - cz;
    if (grad) {
      // p - p_constrained
      softmax_inplace(row);
      std::vector<double> delta = row;
      double denom = 0.0;
      for (int i : c.allowed[static_cast<size_t>(t)]) denom += std::exp(lat.emis(t, i) - cz);
      for (int i : c.allowed[static_cast<size_t>(t)])
        delta[static_cast<size_t>(i)] -= std::exp(lat.emis(t, i) - cz) / denom;
      for (uint32_t f : feats.tokens[static_cast<size_t>(t)]) {
        auto& dst = grad->emission_row(f);
        for (int i = 0; i < L; ++i) dst[static_cast<size_t>(i)] += grad_weight * delta[static_cast<size_t>(i)];
      }
    }
  }
  return loss;
}

LossGrad combined_loss(const std::vector<LossGrad>& distill,
                       const std::optional<LossGrad>& student, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0,1]");
  if (distill.empty() && !student) throw std::invalid_argument("no loss terms present");

  int L = student ? student->grad.L : distill.front().grad.L;
  LossGrad out;
  out.grad.init(L);
  double distill_weight = student ? 1.0 - alpha : 1.0;
  for (const auto& d : distill) {
    out.loss += distill_weight * d.loss;
    out.grad.axpy(distill_weight, d.grad);
  }
  if (student) {
    out.loss += alpha * student->loss;
    out.grad.axpy(alpha, student->grad);
  }
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

}  // namespace tagunify
