#include "tagunify/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "tagunify/common.hpp"

namespace tagunify {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (lr_decay < 0.0) throw std::invalid_argument("lr decay must be non-negative");
  if (max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (l2 < 0.0) throw std::invalid_argument("l2 must be non-negative");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto run = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<int>(workers, static_cast<int>(n));
  pool.reserve(static_cast<size_t>(spawn - 1));
  for (int w = 1; w < spawn; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

AnnotatedCorpus tag_corpus(const Model& m, const AnnotatedCorpus& corpus, bool bio_mask,
                           int workers) {
  AnnotatedCorpus out = corpus;
  parallel_for(corpus.sentences.size(), workers, [&](size_t n) {
    const auto& s = corpus.sentences[n];
    SentenceFeatures feats = extract_sentence_features(s.sentence, m.hash_seed);
    LabelSequence y = decode(m, feats, bio_mask);
    auto& labels = out.sentences[n].labels;
    labels.resize(y.size());
    for (size_t t = 0; t < y.size(); ++t) labels[t] = m.tag_set.label_at(y[t]);
  });
  return out;
}

EvalResult evaluate_checkpoint(const Model& m, const AnnotatedCorpus& dev, int workers) {
  return micro_prf(dev, tag_corpus(m, dev, /*bio_mask=*/true, workers));
}

namespace {

void check_finite(double loss, const ParamVec& grad, int epoch, size_t batch_start) {
  if (!std::isfinite(loss) || !std::isfinite(grad.max_abs()))
    throw std::runtime_error("training diverged (non-finite loss or gradient) at epoch " +
                             std::to_string(epoch) + ", instance " + std::to_string(batch_start));
}

void sgd_update(Model& m, const ParamVec& grad, double eta, double l2) {
  if (l2 > 0.0) m.w.scale(1.0 - eta * l2);
  m.w.axpy(-eta, grad);
}

struct AdamState {
  ParamVec m1, m2;
  long step = 0;
};

void adam_update(Model& m, AdamState& st, const ParamVec& grad, double eta,
                 const TrainConfig& cfg) {
  ++st.step;
  double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  double corr1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  double corr2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  if (cfg.l2 > 0.0) m.w.scale(1.0 - eta * cfg.l2);

  auto update = [&](double& w, double& m1, double& m2, double g) {
    m1 = b1 * m1 + (1.0 - b1) * g;
    m2 = b2 * m2 + (1.0 - b2) * g * g;
    w -= eta * (m1 / corr1) / (std::sqrt(m2 / corr2) + cfg.adam_eps);
  };
  for (const auto& [f, row] : grad.emission) {
    auto& wrow = m.w.emission_row(f);
    auto& m1row = st.m1.emission_row(f);
    auto& m2row = st.m2.emission_row(f);
    for (int i = 0; i < grad.L; ++i)
      update(wrow[static_cast<size_t>(i)], m1row[static_cast<size_t>(i)],
             m2row[static_cast<size_t>(i)], row[static_cast<size_t>(i)]);
  }
  for (size_t i = 0; i < grad.transition.size(); ++i)
    update(m.w.transition[i], st.m1.transition[i], st.m2.transition[i], grad.transition[i]);
  for (size_t i = 0; i < grad.start.size(); ++i)
    update(m.w.start[i], st.m1.start[i], st.m2.start[i], grad.start[i]);
  for (size_t i = 0; i < grad.stop.size(); ++i)
    update(m.w.stop[i], st.m1.stop[i], st.m2.stop[i], grad.stop[i]);
}

}  // namespace

TrainResult train(const Objective& objective, Model init, const AnnotatedCorpus* dev,
                  const TrainConfig& cfg, std::ostream* log, std::ostream* progress) {
  cfg.validate();
  if (objective.size() == 0) throw std::invalid_argument("empty training stream");
  auto t0 = std::chrono::steady_clock::now();

  Model model = std::move(init);
  Model best = model;
  TrainReport report;
  report.best_f1 = -1.0;

  AdamState adam;
  if (cfg.adam) {
    adam.m1.init(model.L());
    adam.m2.init(model.L());
  }

  Rng rng(cfg.seed);
  std::vector<size_t> order(objective.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<ParamVec> slot_grad(static_cast<size_t>(cfg.batch_size));
  std::vector<double> slot_loss(static_cast<size_t>(cfg.batch_size));

  bool use_dev = dev && !dev->sentences.empty();
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double eta = cfg.learning_rate / (1.0 + cfg.lr_decay * static_cast<double>(epoch));
    double epoch_loss = 0.0;

    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      size_t batch = std::min(static_cast<size_t>(cfg.batch_size), order.size() - pos);
      parallel_for(batch, cfg.workers, [&](size_t b) {
        slot_grad[b].init(model.L());
        slot_loss[b] = objective.eval(model, order[pos + b], slot_grad[b]);
      });
      // Reduce in slot order: grouping is fixed regardless of worker count.
      ParamVec batch_grad;
      batch_grad.init(model.L());
      double batch_loss = 0.0;
      double inv = 1.0 / static_cast<double>(batch);
      for (size_t b = 0; b < batch; ++b) {
        batch_grad.axpy(inv, slot_grad[b]);
        batch_loss += slot_loss[b];
      }
      epoch_loss += batch_loss;
      check_finite(batch_loss, batch_grad, epoch + 1, pos);
      if (cfg.adam)
        adam_update(model, adam, batch_grad, eta, cfg);
      else
        sgd_update(model, batch_grad, eta, cfg.l2);
    }
    epoch_loss /= static_cast<double>(order.size());

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = epoch_loss;
    if (use_dev) {
      EvalResult ev = evaluate_checkpoint(model, *dev, cfg.workers);
      rec.dev_precision = ev.precision;
      rec.dev_recall = ev.recall;
      rec.dev_f1 = ev.f1;
    }
    report.epochs.push_back(rec);

    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "{\"epoch\":%d,\"train_loss\":%.6f,\"dev_precision\":%.6f,"
                    "\"dev_recall\":%.6f,\"dev_f1\":%.6f}\n",
                    rec.epoch, rec.train_loss, rec.dev_precision, rec.dev_recall, rec.dev_f1);
      (*log) << buf;
    }
    if (progress) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "epoch %3d  loss %.5f  dev F1 %.4f\n", rec.epoch,
                    rec.train_loss, rec.dev_f1);
      (*progress) << buf;
    }

    if (use_dev) {
      if (rec.dev_f1 > report.best_f1) {
        report.best_f1 = rec.dev_f1;
        report.best_epoch = rec.epoch;
        best = model;
      } else if (rec.epoch - report.best_epoch >= cfg.patience) {
        break;
      }
    } else {
      report.best_epoch = rec.epoch;
      best = model;
    }
  }
  if (!use_dev) report.best_f1 = 0.0;

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {use_dev ? std::move(best) : std::move(model), std::move(report)};
}

SupervisedObjective::SupervisedObjective(const Model& proto, const AnnotatedCorpus& corpus) {
  local_ = proto.kind == ModelKind::local;
  instances_.reserve(corpus.sentences.size());
  for (const auto& s : corpus.sentences) {
    Instance inst;
    inst.feats = extract_sentence_features(s.sentence, proto.hash_seed);
    inst.gold.reserve(s.labels.size());
    for (const auto& l : s.labels) inst.gold.push_back(proto.tag_set.index_of(l));
    instances_.push_back(std::move(inst));
  }
}

double SupervisedObjective::eval(const Model& m, size_t index, ParamVec& grad) const {
  const Instance& inst = instances_[index];
  return local_ ? local_nll_loss(m, inst.feats, inst.gold, &grad)
                : nll_loss(m, inst.feats, inst.gold, &grad);
}

MarginalObjective::MarginalObjective(const Model& proto, const std::vector<Source>& sources) {
  local_ = proto.kind == ModelKind::local;
  for (const auto& src : sources) {
    for (const auto& s : src.corpus->sentences) {
      Instance inst;
      inst.feats = extract_sentence_features(s.sentence, proto.hash_seed);
      inst.constraint = induced_constraint(s.labels, *src.tag_set, *src.projection);
      instances_.push_back(std::move(inst));
    }
  }
}

double MarginalObjective::eval(const Model& m, size_t index, ParamVec& grad) const {
  const Instance& inst = instances_[index];
  return local_ ? local_marginal_nll_loss(m, inst.feats, inst.constraint, &grad)
                : marginal_nll_loss(m, inst.feats, inst.constraint, &grad);
}

}  // namespace tagunify
