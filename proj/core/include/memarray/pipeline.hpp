#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "memarray/datagen.hpp"
#include "memarray/model.hpp"

namespace mema {

enum class OptimizerKind { kAdaDelta, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdaDelta;
  double rho = 0.95;
  double eps = 1e-8;
  double lr = 1.0;         // step multiplier (AdaDelta) or learning rate (SGD)
  double grad_clip = 5.0;  // global L2 norm over trainable groups; 0 disables

  void validate() const;
};

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

// Updates every group of the model that is not frozen. Frozen groups are
// never written.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, const Model& like);
  // Scales `grad` down to the clip norm (grad itself is not modified), then
  // applies one update. Returns the pre-clip norm.
  double step(Model& m, Model& grad);

 private:
  OptimizerConfig cfg_;
  Model acc_grad_;
  Model acc_delta_;
};

enum class Stage2Augment { kNone, kTimeMask, kDropout };

std::string to_string(Stage2Augment a);
Stage2Augment stage2_augment_from_string(const std::string& s);

struct TrainConfig {
  double ctc_weight = 0.2;  // lambda
  double smoothing = 0.05;
  int epochs = 30;
  int patience = 3;
  int batch_size = 8;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  MaskPolicy stage1_mask{2, 5, 2, 3, MaskFill::kZero};
  Stage2Augment stage2_augment = Stage2Augment::kTimeMask;
  int stage2_num_masks = 3;
  int stage2_max_len = 10;
  double dropout = 0.2;
  double data_fraction = 1.0;
  int jobs = 1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;  // 0 = before training
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm
  bool improved = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainResult {
  Model model;  // parameters of the best dev epoch
  int best_epoch = 0;
  double best_dev_loss = 0.0;
  std::vector<EpochLog> history;
};

// One single-stream training sample; points into a corpus that must outlive it.
struct Utterance {
  std::string utt_id;
  const Matrix* features = nullptr;
  const Transcript* transcript = nullptr;
};

// Every listed stream of every bundle as its own sample (multi-condition
// pooling), ordered by utterance then stream.
std::vector<Utterance> pooled_view(const std::vector<StreamBundle>& bundles,
                                   const std::vector<std::string>& stream_ids);

// Joint CTC/attention training of a single-stream model with SpecAugment
// applied on the fly. Stops early when the dev loss has not improved for
// `patience` epochs and returns the best-dev parameters.
TrainResult train_stage1(const Model& init, const std::vector<Utterance>& train,
                         const std::vector<Utterance>& dev, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

// Mean joint loss over the samples, no augmentation.
double stage1_eval_loss(const Model& m, const std::vector<Utterance>& data,
                        const LossWeights& w, int jobs = 1);

// UFE features of every stream of every bundle; stream ids and transcripts
// are carried over.
std::vector<StreamBundle> extract_ufe(const Model& m, const std::vector<StreamBundle>& corpus,
                                      int jobs = 1);

struct UfeBundle {
  std::string utt_id;
  std::vector<Matrix> streams;
  Transcript transcript;
};

// Picks the named streams, in the given order.
std::vector<UfeBundle> select_streams(const std::vector<StreamBundle>& ufe,
                                      const std::vector<std::string>& stream_ids);

// Trains only the HAN. A single-stream Stage-1 model is first expanded to
// N streams with every transferred group frozen. Time masking or input
// dropout is drawn independently per stream, utterance and epoch. Throws
// InvariantError if a frozen group changes.
TrainResult train_stage2(const Model& init, const std::vector<UfeBundle>& train,
                         const std::vector<UfeBundle>& dev, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

double stage2_eval_loss(const Model& m, const std::vector<UfeBundle>& data,
                        const LossWeights& w, int jobs = 1);

// The first round(fraction * n) items (at least one) of a seeded
// permutation of [0, n).
std::vector<std::size_t> data_subset(std::size_t n, double fraction, std::uint64_t seed);

}  // namespace mema
