#include "cafct/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "cafct/kernels.hpp"
#include "cafct/pgm.hpp"

namespace cafct {

Sgd::Sgd(const std::vector<Parameter>& params, double lr, double momentum, double weight_decay)
    : lr(lr), momentum(momentum), weight_decay(weight_decay) {
  velocity_.reserve(params.size());
  for (const auto& p : params) velocity_.emplace_back(static_cast<size_t>(p.tensor.size()), 0.0);
}

void Sgd::step(std::vector<Parameter>& params) {
  check_arg(params.size() == velocity_.size(), "sgd: parameter list changed size");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    double* value = t.data();
    const std::vector<double>& grad = t.grad_vec();
    double* vel = velocity_[i].data();
    const double mu = momentum, wd = weight_decay, step_lr = lr;
    kernels::parallel_for(t.size(), [&](int64_t j) {
      const double g = grad[static_cast<size_t>(j)] + wd * value[j];
      vel[j] = mu * vel[j] + g;
      value[j] -= step_lr * vel[j];
    });
  }
}

namespace {

Tensor stack_images(const std::vector<SegSample>& data, const std::vector<int>& idx, bool masks) {
  const Tensor& first = masks ? data[0].mask : data[0].image;
  const int h = first.dim(1), w = first.dim(2);
  const int b = static_cast<int>(idx.size());
  std::vector<double> out(static_cast<size_t>(b) * h * w);
  for (int i = 0; i < b; ++i) {
    const Tensor& t = masks ? data[static_cast<size_t>(idx[static_cast<size_t>(i)])].mask
                            : data[static_cast<size_t>(idx[static_cast<size_t>(i)])].image;
    std::memcpy(out.data() + static_cast<int64_t>(i) * h * w, t.data(),
                static_cast<size_t>(h) * w * sizeof(double));
  }
  return Tensor::from_data({b, 1, h, w}, std::move(out));
}

Tensor threshold_logits(const Tensor& logits) {
  // sigmoid(l) >= 0.5 exactly when l >= 0
  std::vector<double> pred(static_cast<size_t>(logits.size()));
  const double* l = logits.data();
  for (int64_t i = 0; i < logits.size(); ++i) pred[static_cast<size_t>(i)] = l[i] >= 0.0 ? 1.0 : 0.0;
  return Tensor::from_data(logits.shape(), std::move(pred));
}

void check_dataset_size(const std::vector<SegSample>& data, int input_size) {
  for (const auto& s : data) {
    check_arg(s.image.dim(1) == input_size && s.image.dim(2) == input_size,
              "dataset sample '" + s.id + "' is " + shape_str(s.image.shape()) +
                  ", model expects " + std::to_string(input_size) + "x" + std::to_string(input_size));
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::ostream& log) {
  cfg.validate();
  const std::vector<SegSample> data = load_dataset(cfg.data_dir);
  check_dataset_size(data, cfg.model.encoder.input_size);

  if (foreground_fraction(data) < 0.001) {
    std::fprintf(stderr,
                 "warning: foreground fraction below 0.1%%; the BCE term of the BCE-Dice loss "
                 "degrades on objects this small\n");
  }

  Rng rng(cfg.seed);
  CafctModel model(cfg.model, rng);
  std::vector<Parameter> params = model.parameters();
  Sgd opt(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay);

  TrainResult result;
  result.parameter_count = model.parameter_count();
  log << "parameters=" << result.parameter_count << "\n";

  const int n = static_cast<int>(data.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  char line[160];
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    }

    double loss_sum = 0.0;
    ConfusionCounts epoch_counts;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int stop = std::min(n, start + cfg.batch_size);
      const std::vector<int> idx(order.begin() + start, order.begin() + stop);
      const Tensor images = stack_images(data, idx, false);
      const Tensor masks = stack_images(data, idx, true);

      model.zero_grad();
      const Tensor logits = model.forward(images, /*training=*/true);
      const Tensor loss = bce_dice_loss(logits, masks, cfg.w_bce, cfg.w_dice);
      backward(loss);
      opt.step(params);

      loss_sum += loss.item() * static_cast<double>(stop - start);
      epoch_counts += confusion_counts(threshold_logits(logits), masks);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(n);
    entry.train_dice = metrics_from_counts(epoch_counts).dice;
    result.logs.push_back(entry);
    std::snprintf(line, sizeof(line), "epoch=%d loss=%.10g dice=%.6f\n", epoch, entry.mean_loss, entry.train_dice);
    log << line;
    log.flush();

    save_checkpoint(cfg.checkpoint_path, model, cfg, epoch, rng);
  }
  return result;
}

std::pair<MetricsReport, MetricsReport> evaluate(CafctModel& model,
                                                 const std::vector<SegSample>& data,
                                                 std::ostream* per_image_out) {
  check_arg(!data.empty(), "evaluate: empty dataset");
  check_dataset_size(data, model.config().encoder.input_size);
  NoGradGuard no_grad;

  std::vector<ConfusionCounts> per_image;
  per_image.reserve(data.size());
  char line[160];
  for (const auto& s : data) {
    const Tensor image = ops::reshape(s.image, {1, 1, s.image.dim(1), s.image.dim(2)});
    const Tensor logits = model.forward(image, /*training=*/false);
    const Tensor pred = threshold_logits(logits);
    const Tensor target = ops::reshape(s.mask, pred.shape());
    const ConfusionCounts c = confusion_counts(pred, target);
    per_image.push_back(c);
    if (per_image_out) {
      const MetricsReport r = metrics_from_counts(c);
      std::snprintf(line, sizeof(line), "image=%s iou=%.6f dice=%.6f\n", s.id.c_str(), r.iou, r.dice);
      *per_image_out << line;
    }
  }
  return {aggregate_metrics(per_image, Aggregation::global),
          aggregate_metrics(per_image, Aggregation::per_image_mean)};
}

void infer(CafctModel& model, const std::string& image_path, const std::string& out_path,
           const std::string& prob_path) {
  NoGradGuard no_grad;
  const Tensor image = read_image_pgm(image_path);
  const int size = model.config().encoder.input_size;
  check_arg(image.dim(1) == size && image.dim(2) == size,
            "infer: image " + shape_str(image.shape()) + " does not match checkpoint input size " +
                std::to_string(size));
  const Tensor logits = model.forward(ops::reshape(image, {1, 1, size, size}), /*training=*/false);
  const Tensor pred = threshold_logits(logits);
  write_mask_pgm(ops::reshape(pred, {1, size, size}), out_path);
  if (!prob_path.empty()) {
    write_image_pgm(ops::reshape(ops::sigmoid(logits), {1, size, size}), prob_path);
  }
}

}  // namespace cafct
