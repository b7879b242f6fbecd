#include "pah/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pah/errors.hpp"
#include "pah/losses.hpp"
#include "pah/ops.hpp"

namespace pah {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

std::string metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", m.epoch, m.loss_id,
                m.loss_pair, m.loss_psd, m.loss_total, m.lr);
  return buf;
}

Trainer::Trainer(RunConfig config) : config_(std::move(config)) {
  if (config_.dataset.empty()) throw ConfigError("train: no dataset given");
  dataset_ = Dataset::load(config_.dataset, LoadOptions{config_.closed_set});
  train_indices_ = dataset_.indices(Split::kTrain);
  if (train_indices_.empty()) throw EmptyDatasetError("train: dataset has no training split");
  config_.model.num_classes = dataset_.num_train_classes();
  config_.validate();

  model_ = PahModel(config_.model);
  optimizer_ = Optimizer(model_.parameters(), parse_optimizer(config_.optimizer), config_.momentum,
                         config_.weight_decay);
  for (std::size_t idx : train_indices_) train_labels_.push_back(dataset_.train_label(idx));
  sampler_.emplace(train_labels_, config_.model.batch_identities, config_.model.batch_instances,
                   derive_seed(config_.model.seed, 0x5A4D));
  augment_rng_.seed(derive_seed(config_.model.seed, 0xA067));
  load_split_images();
}

void Trainer::load_split_images() {
  for (std::size_t idx : train_indices_) {
    ImageSample s = dataset_.sample(idx);
    if (s.pixels.dim(0) != config_.model.input_h || s.pixels.dim(1) != config_.model.input_w) {
      throw DimensionError("train: image " + dataset_.records()[idx].path + " is " +
                           shape_to_string(s.pixels.shape()) + ", config expects " +
                           std::to_string(config_.model.input_h) + "x" +
                           std::to_string(config_.model.input_w));
    }
    train_images_.push_back(std::move(s));
  }
  for (std::size_t idx : dataset_.indices(Split::kQuery)) query_images_.push_back(dataset_.sample(idx));
  for (std::size_t idx : dataset_.indices(Split::kGallery)) {
    gallery_images_.push_back(dataset_.sample(idx));
  }
}

std::vector<PseudoLabelMap> Trainer::pseudo_labels(std::size_t epoch) const {
  std::vector<PseudoLabelMap> maps;
  maps.reserve(train_images_.size());
  for (std::size_t i = 0; i < train_images_.size(); ++i) {
    const Tensor dense = model_.dense_features(train_images_[i].pixels);
    maps.push_back(generate_pseudo_labels(dense, config_.model.num_parts,
                                          derive_seed(config_.model.seed, epoch + 1, i), epoch));
  }
  return maps;
}

EpochMetrics Trainer::train_epoch() {
  const ModelConfig& mc = config_.model;
  const StreamSet& streams = mc.streams;
  EpochMetrics metrics;
  metrics.epoch = epoch_;

  std::vector<PseudoLabelMap> labels;
  if (streams.part && refresh_policy(static_cast<long long>(epoch_))) {
    labels = pseudo_labels(epoch_);
    for (const auto& m : labels) metrics.psd_fallbacks += m.fallback ? 1 : 0;
  }

  AugmentOptions aug;
  aug.flip_probability = config_.augment ? config_.flip_probability : 0.0;
  aug.erase_probability = config_.augment ? config_.erase_probability : 0.0;

  const auto batches = sampler_->epoch();
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    const double lr = lr_schedule(static_cast<double>(epoch_) +
                                      static_cast<double>(b) / static_cast<double>(batches.size()),
                                  config_);
    if (b == 0) metrics.lr = lr;

    std::vector<Tensor> images, heads, psd_targets;
    std::vector<std::size_t> batch_labels;
    std::vector<bool> flipped;
    for (std::size_t pos : batch) {
      Augmented a = augment(train_images_[pos], augment_rng_, aug);
      images.push_back(a.sample.pixels);
      if (streams.head) heads.push_back(crop_head(a.sample.pixels, a.sample.head_box).image);
      if (streams.part) {
        psd_targets.push_back(a.flipped ? labels[pos].flipped().one_hot() : labels[pos].one_hot());
      }
      batch_labels.push_back(train_labels_[pos]);
      flipped.push_back(a.flipped);
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    optimizer_.zero_grad();
    double l_id = 0.0, l_pair = 0.0, l_psd = 0.0, l_total = 0.0;
    try {
      Tape tape;
      TapeScope scope(tape);
      BatchOutput out = model_.forward(images, heads, NormMode::kTrain);
      std::vector<Tensor> logits, features;
      for (std::size_t h = 0; h < kNumHeads; ++h) {
        if (!out.logits[h].defined()) continue;
        logits.push_back(out.logits[h]);
        features.push_back(out.features[h]);
      }
      const Tensor targets = one_hot_rows(batch_labels, mc.num_classes);
      Tensor id = scale(identity_loss_batch(logits, targets), inv_n);
      Tensor pair = scale(ms_loss_batch(features, batch_labels, mc.pair), inv_n);
      Tensor psd = Tensor::scalar(0.0);
      if (streams.part) {
        std::vector<Tensor> terms;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          terms.push_back(psd_loss(out.part_probs[i], psd_targets[i]).value);
        }
        psd = scale(add_n(terms), inv_n);
      }
      Tensor total = total_loss(id, pair, psd, mc.lambda_pair, mc.lambda_psd);
      l_id = id.item();
      l_pair = pair.item();
      l_psd = psd.item();
      l_total = total.item();
      tape.backward(total);
    } catch (const NumericError& e) {
      std::ostringstream diag;
      diag << "non-finite value in epoch " << epoch_ << " batch " << b << " (lr " << lr << "): "
           << e.what() << "\nposition,record,identity,label,flipped\n";
      for (std::size_t i = 0; i < batch.size(); ++i) {
        diag << batch[i] << ',' << dataset_.records()[train_indices_[batch[i]]].path << ','
             << train_images_[batch[i]].identity << ',' << batch_labels[i] << ','
             << (flipped[i] ? 1 : 0) << '\n';
      }
      if (!config_.out.empty()) {
        fs::create_directories(config_.out);
        std::ofstream(fs::path(config_.out) / "nan_batch.txt") << diag.str();
      }
      throw NumericError(diag.str());
    }
    optimizer_.step(lr);

    metrics.loss_id += l_id;
    metrics.loss_pair += l_pair;
    metrics.loss_psd += l_psd;
    metrics.loss_total += l_total;
  }
  const double nb = static_cast<double>(batches.size());
  metrics.loss_id /= nb;
  metrics.loss_pair /= nb;
  metrics.loss_psd /= nb;
  metrics.loss_total /= nb;
  ++epoch_;
  return metrics;
}

fs::path Trainer::checkpoint_path() const { return fs::path(config_.out) / "checkpoint.bin"; }

void Trainer::save(const fs::path& path) const {
  std::ostringstream rng;
  rng << sampler_->rng_state() << '\n' << augment_rng_;
  CheckpointMeta meta{epoch_, optimizer_.steps(), rng.str()};
  save_checkpoint(path, config_, model_, &optimizer_, meta);
}

std::vector<EpochMetrics> Trainer::run() {
  std::vector<EpochMetrics> history;
  const bool write = !config_.out.empty();
  std::ofstream csv;
  if (write) {
    fs::create_directories(config_.out);
    std::ofstream(fs::path(config_.out) / "config.txt") << config_.to_text();
    csv.open(fs::path(config_.out) / "metrics.csv");
    if (!csv) throw IoError("cannot write metrics to " + config_.out);
    csv << kMetricsHeader << '\n';
  }
  while (epoch_ < config_.total_epochs()) {
    EpochMetrics m = train_epoch();
    history.push_back(m);
    spdlog::info("epoch {:>3}  lr {:.3e}  id {:.4f}  pair {:.4f}  psd {:.4f}  total {:.4f}", m.epoch,
                 m.lr, m.loss_id, m.loss_pair, m.loss_psd, m.loss_total);
    if (m.psd_fallbacks > 0) {
      spdlog::warn("epoch {}: {} pseudo-label maps fell back to a single part", m.epoch,
                   m.psd_fallbacks);
    }
    if (write) {
      csv << metrics_row(m) << '\n';
      csv.flush();
      save(checkpoint_path());
    }
    if (config_.eval_every > 0 && epoch_ % config_.eval_every == 0 && epoch_ < config_.total_epochs() &&
        !query_images_.empty()) {
      const ScenarioReport r = evaluate().at(Scenario::kGeneral);
      if (r.cmc.empty()) {
        spdlog::warn("epoch {:>3}  eval: no query has a match in the gallery", m.epoch);
      } else {
        spdlog::info("epoch {:>3}  eval rank1 {:.4f}  mAP {:.4f}", m.epoch, r.cmc.front(), r.map);
      }
    }
  }
  return history;
}

EvalReport Trainer::evaluate() {
  if (query_images_.empty() || gallery_images_.empty()) {
    throw EmptyDatasetError("evaluate: dataset has no query or gallery split");
  }
  EvalOptions options;
  options.k_max = config_.top_k;
  options.exclude_same_sample = config_.exclude_same_sample;
  return pah::evaluate(model_, query_images_, gallery_images_, options);
}

}  // namespace pah
