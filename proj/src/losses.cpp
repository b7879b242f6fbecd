#include "pah/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pah/errors.hpp"
#include "pah/ops.hpp"

namespace pah {

namespace {

constexpr double kProbabilityFloor = 1e-12;

// (1/alpha) ln(1 + sum exp(z)) with z = sign*alpha*(s - margin) over the
// entries of `row` selected by `take`, plus d/ds for each selected entry.
double log_sum_term(const double* row, std::span<const std::size_t> take, double sign, double alpha,
                    double margin, std::vector<double>& weights) {
  weights.assign(take.size(), 0.0);
  if (take.empty()) return 0.0;
  double mx = 0.0;
  for (std::size_t t = 0; t < take.size(); ++t) {
    weights[t] = sign * alpha * (row[take[t]] - margin);
    mx = std::max(mx, weights[t]);
  }
  double total = std::exp(-mx);
  for (double z : weights) total += std::exp(z - mx);
  for (double& z : weights) z = sign * std::exp(z - mx) / total;
  return (mx + std::log(total)) / alpha;
}

}  // namespace

std::string_view head_name(std::size_t head) {
  static constexpr std::array<std::string_view, kNumHeads> kNames{
      "global_gmp", "global_ae", "global_gap", "part", "head_gmp", "head_ae", "head_gap"};
  return kNames.at(head);
}

bool head_enabled(const StreamSet& streams, std::size_t head) {
  if (head <= 2) return streams.global;
  if (head == 3) return streams.part;
  return streams.head;
}

Tensor one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) throw LabelError("one_hot: label out of range");
  Tensor t({classes});
  t.mutable_data()[label] = 1.0;
  return t;
}

Tensor one_hot_rows(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw LabelError("one_hot_rows: label out of range");
    d[i * classes + labels[i]] = 1.0;
  }
  return t;
}

Tensor identity_loss(const FeatureBundle& bundle) {
  std::vector<Tensor> terms;
  for (const auto& logits : bundle.logits) {
    if (logits.defined()) terms.push_back(softmax_cross_entropy(logits, bundle.label));
  }
  if (terms.empty()) throw ContractError("identity_loss: bundle has no logit heads");
  return add_n(terms);
}

Tensor ms_loss(const FeatureBundle& anchor, std::span<const FeatureBundle> positives,
               std::span<const FeatureBundle> negatives, const PairLossParams& params) {
  std::vector<Tensor> terms;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    const Tensor& f = anchor.features[h];
    if (!f.defined()) continue;
    auto similarities = [&](std::span<const FeatureBundle> others) {
      std::vector<Tensor> dots;
      for (const auto& other : others) dots.push_back(dot(f, other.features[h]));
      return dots;
    };
    auto pos = similarities(positives);
    auto neg = similarities(negatives);
    if (!pos.empty()) {
      terms.push_back(
          log_one_plus_sum_exp(stack(pos), -1.0, params.alpha_pos, params.margin));
    }
    if (!neg.empty()) {
      terms.push_back(log_one_plus_sum_exp(stack(neg), 1.0, params.alpha_neg, params.margin));
    }
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return add_n(terms);
}

PsdLoss psd_loss(const Tensor& probs, const Tensor& labels_one_hot) {
  if (probs.rank() != 3) throw DimensionError("psd_loss: expected [h,w,K] probabilities");
  PsdLoss out;
  out.value = clamped_cross_entropy(probs, labels_one_hot, kProbabilityFloor, &out.clamped);
  return out;
}

Tensor total_loss(const Tensor& l_id, const Tensor& l_pair, const Tensor& l_psd, double lambda_pair,
                  double lambda_psd) {
  if (lambda_pair < 0.0 || lambda_psd < 0.0) throw ContractError("total_loss: negative weight");
  std::vector<Tensor> terms{l_id, scale(l_pair, lambda_pair), scale(l_psd, lambda_psd)};
  return add_n(terms);
}

Tensor identity_loss_batch(std::span<const Tensor> head_logits, const Tensor& targets) {
  std::vector<Tensor> terms;
  for (const auto& logits : head_logits) {
    if (logits.defined()) terms.push_back(softmax_cross_entropy(logits, targets));
  }
  if (terms.empty()) throw ContractError("identity_loss_batch: no logit heads");
  return add_n(terms);
}

Tensor ms_loss_from_similarity(const Tensor& similarity, std::span<const std::size_t> labels,
                               const PairLossParams& params) {
  const std::size_t n = labels.size();
  if (similarity.rank() != 2 || similarity.dim(0) != n || similarity.dim(1) != n) {
    throw DimensionError("ms_loss_from_similarity: similarity must be [N,N] for N labels");
  }
  auto s = similarity.data();
  std::vector<double> coeff(n * n, 0.0);  // d(loss)/dS
  std::vector<std::size_t> pos, neg;
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pos.clear();
    neg.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? pos : neg).push_back(j);
    }
    const double* row = s.data() + i * n;
    total += log_sum_term(row, pos, -1.0, params.alpha_pos, params.margin, w);
    for (std::size_t t = 0; t < pos.size(); ++t) coeff[i * n + pos[t]] += w[t];
    total += log_sum_term(row, neg, 1.0, params.alpha_neg, params.margin, w);
    for (std::size_t t = 0; t < neg.size(); ++t) coeff[i * n + neg[t]] += w[t];
  }
  Tensor out = Tensor::scalar(total);
  record_op({similarity}, out, [similarity, out, coeff]() mutable {
    const double g = out.grad()[0];
    auto gs = similarity.grad();
    for (std::size_t i = 0; i < coeff.size(); ++i) gs[i] += g * coeff[i];
  });
  check_finite(out.data(), "ms_loss");
  return out;
}

Tensor ms_loss_batch(std::span<const Tensor> features, std::span<const std::size_t> labels,
                     const PairLossParams& params) {
  std::vector<Tensor> terms;
  for (const auto& f : features) {
    if (!f.defined()) continue;
    terms.push_back(ms_loss_from_similarity(matmul(f, transpose(f)), labels, params));
  }
  if (terms.empty()) throw ContractError("ms_loss_batch: no feature heads");
  return add_n(terms);
}

}  // namespace pah
