#include "memarray/pipeline.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "memarray/encoder.hpp"
#include "memarray/errors.hpp"
#include "memarray/parallel.hpp"

namespace mema {

void OptimizerConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("optimizer: rho must be in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be > 0");
  if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be > 0");
  if (grad_clip < 0.0) throw ConfigError("optimizer: grad_clip must be >= 0");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdaDelta ? "adadelta" : "sgd"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adadelta") return OptimizerKind::kAdaDelta;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adadelta or sgd)");
}

Optimizer::Optimizer(const OptimizerConfig& cfg, const Model& like)
    : cfg_(cfg), acc_grad_(like.zeros_like()), acc_delta_(like.zeros_like()) {
  cfg_.validate();
}

double Optimizer::step(Model& m, Model& grad) {
  auto params = m.groups();
  auto grads = grad.groups();
  auto ag = acc_grad_.groups();
  auto ad = acc_delta_.groups();
  if (params.size() != grads.size()) throw ShapeError("optimizer: gradient does not mirror model");

  double sq = 0.0;
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].frozen) continue;
    for (const auto& t : grads[g].tensors) sq += t.value->squared_norm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
  const double scale = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].frozen) continue;
    for (std::size_t k = 0; k < params[g].tensors.size(); ++k) {
      auto& p = params[g].tensors[k].value->data();
      const auto& dg = grads[g].tensors[k].value->data();
      auto& eg = ag[g].tensors[k].value->data();
      auto& ed = ad[g].tensors[k].value->data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = dg[i] * scale;
        if (cfg_.kind == OptimizerKind::kSgd) {
          p[i] -= cfg_.lr * gi;
          continue;
        }
        eg[i] = cfg_.rho * eg[i] + (1.0 - cfg_.rho) * gi * gi;
        const double dx = -std::sqrt(ed[i] + cfg_.eps) / std::sqrt(eg[i] + cfg_.eps) * gi;
        ed[i] = cfg_.rho * ed[i] + (1.0 - cfg_.rho) * dx * dx;
        p[i] += cfg_.lr * dx;
      }
    }
  }
  return norm;
}

std::string to_string(Stage2Augment a) {
  switch (a) {
    case Stage2Augment::kNone: return "none";
    case Stage2Augment::kTimeMask: return "time_mask";
    case Stage2Augment::kDropout: return "dropout";
  }
  return "unknown";
}

Stage2Augment stage2_augment_from_string(const std::string& s) {
  if (s == "none") return Stage2Augment::kNone;
  if (s == "time_mask") return Stage2Augment::kTimeMask;
  if (s == "dropout") return Stage2Augment::kDropout;
  throw ConfigError("unknown stage-2 augmentation '" + s + "' (expected none, time_mask or dropout)");
}

void TrainConfig::validate() const {
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) throw ConfigError("train: ctc_weight must be in [0, 1]");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("train: smoothing must be in [0, 1)");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (patience < 1 || patience > epochs) throw ConfigError("train: patience must be in [1, epochs]");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (stage2_num_masks < 0 || stage2_max_len < 0) throw ConfigError("train: negative mask settings");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train: dropout must be in [0, 1)");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw ConfigError("train: data_fraction must be in (0, 1]");
  }
  if (jobs < 1) throw ConfigError("train: jobs must be >= 1");
  if (stage1_mask.num_time_masks < 0 || stage1_mask.num_freq_masks < 0 ||
      stage1_mask.max_time < 0 || stage1_mask.max_freq < 0) {
    throw ConfigError("train: negative stage-1 mask settings");
  }
  optimizer.validate();
}

std::vector<std::size_t> data_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("data fraction must be in (0, 1]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n == 0) return idx;
  Rng rng = Rng(seed).split("data_subset");
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(idx[i], idx[j]);
  }
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  idx.resize(std::min(keep, n));
  return idx;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// loss_fn(model, sample, epoch, grad) returns the sample's total loss and
// accumulates its gradient; dev_fn(model) returns the dev loss.
template <class LossFn, class DevFn, class CheckFn>
TrainResult run_training(Model model, std::size_t n, const TrainConfig& cfg, Rng rng,
                         LossFn&& loss_fn, DevFn&& dev_fn, CheckFn&& after_epoch,
                         const EpochCallback& on_epoch) {
  if (n == 0) throw DataError("train: empty training set");
  Optimizer opt(cfg.optimizer, model);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<Model> slot_grads(std::min(batch, n), model.zeros_like());
  std::vector<double> slot_loss(slot_grads.size());
  Model grad = model.zeros_like();

  TrainResult res;
  res.best_dev_loss = dev_fn(model);
  res.best_epoch = 0;
  res.model = model;
  EpochLog initial{0, std::numeric_limits<double>::quiet_NaN(), res.best_dev_loss, 0.0, true};
  res.history.push_back(initial);
  if (on_epoch) on_epoch(initial);
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(n, rng.split("order").split(static_cast<std::uint64_t>(epoch)));
    double total = 0.0;
    double norm_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      parallel_for(count, cfg.jobs, [&](std::size_t k) {
        slot_grads[k].set_zero();
        slot_loss[k] = loss_fn(model, order[start + k], epoch, &slot_grads[k]);
      });
      grad.set_zero();
      for (std::size_t k = 0; k < count; ++k) {
        if (!std::isfinite(slot_loss[k])) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " on sample " + std::to_string(order[start + k]));
        }
        total += slot_loss[k];
        grad += slot_grads[k];
      }
      grad *= 1.0 / static_cast<double>(count);
      norm_sum += opt.step(model, grad);
      ++steps;
    }
    after_epoch(model);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = total / static_cast<double>(n);
    log.dev_loss = dev_fn(model);
    log.grad_norm = norm_sum / static_cast<double>(steps);
    if (!std::isfinite(log.dev_loss)) {
      throw NumericError("train: non-finite dev loss at epoch " + std::to_string(epoch));
    }
    log.improved = log.dev_loss < res.best_dev_loss;
    if (log.improved) {
      res.best_dev_loss = log.dev_loss;
      res.best_epoch = epoch;
      res.model = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (since_best >= cfg.patience) break;
  }
  return res;
}

}  // namespace

std::vector<Utterance> pooled_view(const std::vector<StreamBundle>& bundles,
                                   const std::vector<std::string>& stream_ids) {
  std::vector<Utterance> out;
  for (const auto& b : bundles) {
    for (const auto& id : stream_ids) {
      out.push_back({b.utt_id + "/" + id, &b.stream(id).frames, &b.transcript});
    }
  }
  return out;
}

double stage1_eval_loss(const Model& m, const std::vector<Utterance>& data, const LossWeights& w,
                        int jobs) {
  if (data.empty()) throw DataError("eval: empty set");
  std::vector<double> losses(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    losses[i] = stage1_loss(m, *data[i].features, *data[i].transcript, w).total;
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(data.size());
}

TrainResult train_stage1(const Model& init, const std::vector<Utterance>& train,
                         const std::vector<Utterance>& dev, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  if (init.num_streams() != 1) throw ConfigError("train_stage1: expects a single-stream model");
  cfg.stage1_mask.validate(init.dims.feat_dim);
  Model model = init;
  model.frozen = {"han"};  // one stream: beta is constant and the HAN gets no gradient
  const LossWeights w{cfg.ctc_weight, cfg.smoothing};
  const Rng rng = Rng(cfg.seed).split("stage1");
  auto loss_fn = [&](const Model& m, std::size_t i, int epoch, Model* grad) {
    Rng r = rng.split("augment").split(static_cast<std::uint64_t>(epoch)).split(i);
    const FeatureSequence masked =
        spec_augment({*train[i].features, "", train[i].utt_id}, cfg.stage1_mask, r);
    return stage1_loss(m, masked.frames, *train[i].transcript, w, grad).total;
  };
  auto dev_fn = [&](const Model& m) { return stage1_eval_loss(m, dev, w, cfg.jobs); };
  return run_training(std::move(model), train.size(), cfg, rng, loss_fn, dev_fn,
                      [](const Model&) {}, on_epoch);
}

std::vector<StreamBundle> extract_ufe(const Model& m, const std::vector<StreamBundle>& corpus,
                                      int jobs) {
  std::vector<StreamBundle> out(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const auto& b = corpus[i];
    out[i].utt_id = b.utt_id;
    out[i].transcript = b.transcript;
    for (const auto& s : b.streams) {
      if (s.frames.cols() != m.dims.feat_dim) {
        throw DataError("extract_ufe: " + b.utt_id + "/" + s.stream_id + " has feature dim " +
                        std::to_string(s.frames.cols()) + ", checkpoint expects " +
                        std::to_string(m.dims.feat_dim));
      }
      out[i].streams.push_back({encode(m.encoder, s.frames), s.stream_id, b.utt_id});
    }
  });
  return out;
}

std::vector<UfeBundle> select_streams(const std::vector<StreamBundle>& ufe,
                                      const std::vector<std::string>& stream_ids) {
  if (stream_ids.empty()) throw ConfigError("select_streams: no streams");
  std::vector<UfeBundle> out;
  out.reserve(ufe.size());
  for (const auto& b : ufe) {
    UfeBundle u{b.utt_id, {}, b.transcript};
    for (const auto& id : stream_ids) u.streams.push_back(b.stream(id).frames);
    out.push_back(std::move(u));
  }
  return out;
}

double stage2_eval_loss(const Model& m, const std::vector<UfeBundle>& data, const LossWeights& w,
                        int jobs) {
  if (data.empty()) throw DataError("eval: empty set");
  std::vector<double> losses(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    losses[i] = stage2_loss(m, data[i].streams, data[i].transcript, w).total;
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(data.size());
}

TrainResult train_stage2(const Model& init, const std::vector<UfeBundle>& train,
                         const std::vector<UfeBundle>& dev, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw DataError("train_stage2: empty training set");
  const std::size_t N = train.front().streams.size();
  if (N < 2) throw ConfigError("train_stage2: needs at least two streams");
  Model model;
  if (init.num_streams() == 1) {
    model = init.to_multistream(N);
  } else if (init.num_streams() == N) {
    model = init;
  } else {
    throw ConfigError("train_stage2: model has " + std::to_string(init.num_streams()) +
                      " streams, data has " + std::to_string(N));
  }
  for (const auto& g : model.group_names()) {
    if (g != "han" && !model.is_frozen(g)) {
      throw ConfigError("train_stage2: transferred group '" + g + "' is not frozen");
    }
  }
  Model reference = model;

  const auto subset = data_subset(train.size(), cfg.data_fraction, cfg.seed);
  const LossWeights w{cfg.ctc_weight, cfg.smoothing};
  const Rng rng = Rng(cfg.seed).split("stage2");
  auto loss_fn = [&](const Model& m, std::size_t k, int epoch, Model* grad) {
    const std::size_t i = subset[k];
    const UfeBundle& b = train[i];
    if (b.streams.size() != N) throw DataError("train_stage2: " + b.utt_id + " stream count differs");
    Rng r = rng.split("augment").split(static_cast<std::uint64_t>(epoch)).split(i);
    std::vector<Matrix> feats;
    feats.reserve(N);
    for (std::size_t s = 0; s < N; ++s) {
      Rng rs = r.split(s);
      switch (cfg.stage2_augment) {
        case Stage2Augment::kNone: feats.push_back(b.streams[s]); break;
        case Stage2Augment::kTimeMask:
          feats.push_back(stage2_time_mask({b.streams[s], "", b.utt_id}, cfg.stage2_num_masks,
                                           cfg.stage2_max_len, rs)
                              .frames);
          break;
        case Stage2Augment::kDropout:
          feats.push_back(input_dropout({b.streams[s], "", b.utt_id}, cfg.dropout, rs).frames);
          break;
      }
    }
    return stage2_loss(m, feats, b.transcript, w, grad).total;
  };
  auto dev_fn = [&](const Model& m) { return stage2_eval_loss(m, dev, w, cfg.jobs); };
  auto check = [&](Model& m) {
    for (const auto& g : m.group_names()) {
      if (m.is_frozen(g) && !groups_identical(m, reference, g)) {
        throw InvariantError("train_stage2: frozen group '" + g + "' changed during training");
      }
    }
  };
  return run_training(std::move(model), subset.size(), cfg, rng, loss_fn, dev_fn, check, on_epoch);
}

}  // namespace mema
