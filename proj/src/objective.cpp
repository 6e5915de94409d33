#include "cafct/objective.hpp"

#include <cmath>
#include <cstdio>

#include "cafct/kernels.hpp"
#include "cafct/ops.hpp"

namespace cafct {

namespace {

using detail::Node;

void check_pair(const Tensor& logits, const Tensor& target, const char* op) {
  check_arg(logits.shape() == target.shape(),
            std::string(op) + ": logits " + shape_str(logits.shape()) + " and target " +
                shape_str(target.shape()) + " differ");
  const double* t = target.data();
  for (int64_t i = 0; i < target.size(); ++i) {
    check_arg(t[i] == 0.0 || t[i] == 1.0,
              std::string(op) + ": target is not binary at element " + std::to_string(i));
  }
}

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor bce_loss(const Tensor& logits, const Tensor& target) {
  check_pair(logits, target, "bce_loss");
  const int64_t n = logits.size();
  const double* l = logits.data();
  const double* t = target.data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    // max(l,0) - l*t + log(1+exp(-|l|))
    total += std::max(l[i], 0.0) - l[i] * t[i] + std::log1p(std::exp(-std::fabs(l[i])));
  }

  auto nl = logits.node();
  auto node = std::make_shared<Node>();
  node->shape = Shape{};
  node->value = {total / static_cast<double>(n)};
  if (grad_recording_enabled() && nl->requires_grad) {
    auto nt = target.node();
    node->requires_grad = true;
    node->parents = {nl, nt};
    node->backward_fn = [nl, nt, n](Node& self) {
      const double g = self.grad[0] / static_cast<double>(n);
      double* dl = nl->grad_data();
      const double* lv = nl->value.data();
      const double* tv = nt->value.data();
      kernels::parallel_for(n, [&](int64_t i) { dl[i] += g * (sigmoid_stable(lv[i]) - tv[i]); });
    };
  }
  return Tensor(node);
}

Tensor dice_loss(const Tensor& logits, const Tensor& target, double smoothing) {
  check_pair(logits, target, "dice_loss");
  check_arg(smoothing > 0.0, "dice_loss: smoothing must be positive");
  const int64_t n = logits.size();
  const double* l = logits.data();
  const double* t = target.data();
  std::vector<double> p(static_cast<size_t>(n));
  double sum_pt = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = sigmoid_stable(l[i]);
    sum_pt += p[static_cast<size_t>(i)] * t[i];
    sum_p += p[static_cast<size_t>(i)];
    sum_t += t[i];
  }
  const double num = 2.0 * sum_pt + smoothing;
  const double den = sum_p + sum_t + smoothing;

  auto nl = logits.node();
  auto node = std::make_shared<Node>();
  node->shape = Shape{};
  node->value = {1.0 - num / den};
  if (grad_recording_enabled() && nl->requires_grad) {
    auto nt = target.node();
    node->requires_grad = true;
    node->parents = {nl, nt};
    node->backward_fn = [nl, nt, p = std::move(p), num, den, n](Node& self) {
      const double g = self.grad[0];
      double* dl = nl->grad_data();
      const double* tv = nt->value.data();
      kernels::parallel_for(n, [&](int64_t i) {
        // d(1 - num/den)/dp_i = -(2*t_i*den - num) / den^2
        const double dp = -(2.0 * tv[i] * den - num) / (den * den);
        dl[i] += g * dp * p[static_cast<size_t>(i)] * (1.0 - p[static_cast<size_t>(i)]);
      });
    };
  }
  return Tensor(node);
}

Tensor bce_dice_loss(const Tensor& logits, const Tensor& target, double w_bce, double w_dice) {
  check_arg(w_bce >= 0.0 && w_dice >= 0.0, "bce_dice_loss: weights must be nonnegative");
  check_arg(w_bce > 0.0 || w_dice > 0.0, "bce_dice_loss: at least one weight must be positive");
  return ops::add(ops::scale(bce_loss(logits, target), w_bce),
                  ops::scale(dice_loss(logits, target), w_dice));
}

ConfusionCounts confusion_counts(const Tensor& pred_mask, const Tensor& target) {
  check_arg(pred_mask.shape() == target.shape(),
            "confusion_counts: shapes " + shape_str(pred_mask.shape()) + " and " + shape_str(target.shape()) +
                " differ");
  const double* p = pred_mask.data();
  const double* t = target.data();
  ConfusionCounts c;
  for (int64_t i = 0; i < pred_mask.size(); ++i) {
    check_arg(p[i] == 0.0 || p[i] == 1.0, "confusion_counts: prediction is not binary at element " + std::to_string(i));
    check_arg(t[i] == 0.0 || t[i] == 1.0, "confusion_counts: target is not binary at element " + std::to_string(i));
    if (p[i] == 1.0) {
      t[i] == 1.0 ? ++c.tp : ++c.fp;
    } else {
      t[i] == 1.0 ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

namespace {

double ratio(int64_t num, int64_t den, int64_t dual_errors) {
  if (den > 0) return static_cast<double>(num) / static_cast<double>(den);
  return dual_errors == 0 ? 1.0 : 0.0;
}

}  // namespace

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  check_arg(c.total() > 0, "metrics_from_counts: empty confusion counts");
  MetricsReport r;
  r.counts = c;
  r.iou = ratio(c.tp, c.tp + c.fn + c.fp, 0);
  r.dice = ratio(2 * c.tp, (c.tp + c.fn) + (c.tp + c.fp), 0);
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = ratio(c.tp, c.tp + c.fp, c.fn);
  r.sensitivity = ratio(c.tp, c.tp + c.fn, c.fp);
  r.specificity = ratio(c.tn, c.tn + c.fp, c.fn);
  return r;
}

MetricsReport aggregate_metrics(const std::vector<ConfusionCounts>& per_image, Aggregation mode) {
  check_arg(!per_image.empty(), "aggregate_metrics: empty image list");
  ConfusionCounts pooled;
  for (const auto& c : per_image) pooled += c;
  if (mode == Aggregation::global) {
    MetricsReport r = metrics_from_counts(pooled);
    r.aggregation = Aggregation::global;
    return r;
  }
  MetricsReport mean;
  mean.aggregation = Aggregation::per_image_mean;
  mean.counts = pooled;
  for (const auto& c : per_image) {
    const MetricsReport r = metrics_from_counts(c);
    mean.iou += r.iou;
    mean.dice += r.dice;
    mean.accuracy += r.accuracy;
    mean.precision += r.precision;
    mean.sensitivity += r.sensitivity;
    mean.specificity += r.specificity;
  }
  const double inv = 1.0 / static_cast<double>(per_image.size());
  mean.iou *= inv;
  mean.dice *= inv;
  mean.accuracy *= inv;
  mean.precision *= inv;
  mean.sensitivity *= inv;
  mean.specificity *= inv;
  return mean;
}

std::string metrics_to_kv(const MetricsReport& r) {
  char buf[128];
  std::string out;
  out += std::string("aggregation=") + (r.aggregation == Aggregation::global ? "global" : "per_image_mean") + "\n";
  std::snprintf(buf, sizeof(buf), "tp=%lld\nfp=%lld\nfn=%lld\ntn=%lld\n",
                static_cast<long long>(r.counts.tp), static_cast<long long>(r.counts.fp),
                static_cast<long long>(r.counts.fn), static_cast<long long>(r.counts.tn));
  out += buf;
  std::snprintf(buf, sizeof(buf), "iou=%.6f\ndice=%.6f\naccuracy=%.6f\nprecision=%.6f\nsensitivity=%.6f\nspecificity=%.6f\n",
                r.iou, r.dice, r.accuracy, r.precision, r.sensitivity, r.specificity);
  out += buf;
  return out;
}

}  // namespace cafct
