#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cafct/tensor.hpp"

namespace cafct {

// Mean pixelwise binary cross-entropy on logits, computed in the stable
// softplus form. Targets must be exactly 0 or 1.
Tensor bce_loss(const Tensor& logits, const Tensor& target);

// Batch-global soft Dice loss 1 - (2*sum(p*t)+s)/(sum(p)+sum(t)+s) with
// p = sigmoid(logits).
Tensor dice_loss(const Tensor& logits, const Tensor& target, double smoothing = 1.0);

Tensor bce_dice_loss(const Tensor& logits, const Tensor& target,
                     double w_bce = 1.0, double w_dice = 1.0);

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
  }
};

enum class Aggregation { per_image_mean, global };

struct MetricsReport {
  ConfusionCounts counts;  // pooled counts (reference in per_image_mean mode)
  double iou = 0.0, dice = 0.0, accuracy = 0.0;
  double precision = 0.0, sensitivity = 0.0, specificity = 0.0;
  Aggregation aggregation = Aggregation::global;
};

// Exact pixel counting over two binary maps of equal shape.
ConfusionCounts confusion_counts(const Tensor& pred_mask, const Tensor& target);

// Derives the full criterion group. Empty-denominator convention: a metric is
// 1 when both of its defining sets are empty (vacuously perfect), else 0 when
// the numerator is 0 against a nonzero denominator.
MetricsReport metrics_from_counts(const ConfusionCounts& c);

MetricsReport aggregate_metrics(const std::vector<ConfusionCounts>& per_image, Aggregation mode);

// Flat `metric=value` block, 6 decimal places for fractions.
std::string metrics_to_kv(const MetricsReport& r);

}  // namespace cafct
