#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include "cafct/checkpoint.hpp"
#include "cafct/dataset.hpp"
#include "cafct/objective.hpp"

namespace cafct {

// SGD with momentum: v = mu*v + g + wd*p; p -= lr*v. With momentum 0 a step
// is exactly p -= lr*g.
class Sgd {
 public:
  Sgd(const std::vector<Parameter>& params, double lr, double momentum, double weight_decay);
  void step(std::vector<Parameter>& params);

  double lr = 0.0, momentum = 0.0, weight_decay = 0.0;

 private:
  std::vector<std::vector<double>> velocity_;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_dice = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  int64_t parameter_count = 0;
};

// Full training run: loads cfg.data_dir, trains for cfg.epochs, writes a
// checkpoint to cfg.checkpoint_path after every epoch, and emits one
// `epoch=<k> loss=<mean> dice=<train-dice>` line per epoch.
TrainResult train(const TrainConfig& cfg, std::ostream& log);

// Eval-mode metrics at threshold 0.5, reported under both aggregations
// (global pooled counts, per-image mean). per_image_out, when given, receives
// one line per image.
std::pair<MetricsReport, MetricsReport> evaluate(CafctModel& model,
                                                 const std::vector<SegSample>& data,
                                                 std::ostream* per_image_out = nullptr);

// Predicted binary mask for one image; prob_path optionally receives the
// sigmoid probability map.
void infer(CafctModel& model, const std::string& image_path, const std::string& out_path,
           const std::string& prob_path = "");

}  // namespace cafct
