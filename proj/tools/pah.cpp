// Command-line front end: gen-data | train | eval | retrieve | inspect-labels.
#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "pah/checkpoint.hpp"
#include "pah/config.hpp"
#include "pah/data.hpp"
#include "pah/errors.hpp"
#include "pah/pseudo_labeler.hpp"
#include "pah/retrieval.hpp"
#include "pah/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::optional<pah::HeadBox> parse_box(const std::string& text) {
  if (text.empty()) return std::nullopt;
  pah::HeadBox b;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  in >> b.x0 >> c1 >> b.y0 >> c2 >> b.x1 >> c3 >> b.y1;
  if (!in || c1 != ',' || c2 != ',' || c3 != ',') {
    throw pah::ConfigError("--head-box expects x0,y0,x1,y1");
  }
  return b;
}

std::vector<pah::ImageSample> load_split(const pah::Dataset& ds, pah::Split split) {
  std::vector<pah::ImageSample> out;
  for (std::size_t idx : ds.indices(split)) out.push_back(ds.sample(idx));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stream clothes-changing person re-identification"};
  app.require_subcommand(1);

  // gen-data
  pah::SyntheticSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (PNG + manifest.csv)");
  gen->add_option("--out", gen_out, "Dataset root")->required();
  gen->add_option("--seed", spec.seed, "Generator seed");
  gen->add_option("--num-ids", spec.num_ids, "Training identities");
  gen->add_option("--imgs-per-id", spec.imgs_per_id, "Training images per identity");
  gen->add_option("--clothes-per-id", spec.clothes_per_id, "Outfits per identity");
  gen->add_option("--height", spec.height, "Image height");
  gen->add_option("--width", spec.width, "Image width");
  gen->add_option("--test-ids", spec.test_ids,
                  "Fresh identities for query/gallery (0 = reuse training identities)");
  gen->add_option("--query-per-clothes", spec.query_per_clothes);
  gen->add_option("--gallery-per-clothes", spec.gallery_per_clothes);

  // train
  std::string config_path, dataset, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--dataset", dataset, "Dataset root")->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "Output directory");
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--set", overrides, "Extra key=value overrides");

  // eval
  std::string checkpoint, scenario = "all", gallery_split = "gallery", csv_out;
  std::size_t top_k = 10;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on query/gallery");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset, "Dataset root (default: the training dataset)");
  eval->add_option("--out", csv_out, "CSV report path");
  eval->add_option("--top-k", top_k, "Largest Rank-k reported");
  eval->add_option("--scenario", scenario)
      ->check(CLI::IsMember({"all", "general", "same", "cross"}));
  eval->add_option("--gallery", gallery_split, "Split used as gallery")
      ->check(CLI::IsMember({"gallery", "query"}));

  // retrieve
  std::string query_image, head_box;
  auto* retrieve = app.add_subcommand("retrieve", "Rank the gallery for one query image");
  retrieve->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  retrieve->add_option("--dataset", dataset, "Dataset root (default: the training dataset)");
  retrieve->add_option("--query", query_image, "Query PNG")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--head-box", head_box, "x0,y0,x1,y1 head box of the query");
  retrieve->add_option("--top-k", top_k, "Rows to print");

  // inspect-labels
  std::size_t count = 8, label_scale = 4;
  auto* inspect = app.add_subcommand("inspect-labels", "Dump pseudo-label maps as PNG");
  inspect->add_option("--checkpoint", checkpoint)->check(CLI::ExistingFile);
  inspect->add_option("--config", config_path)->check(CLI::ExistingFile);
  inspect->add_option("--dataset", dataset)->check(CLI::ExistingDirectory);
  inspect->add_option("--out", out)->required();
  inspect->add_option("--seed", seed);
  inspect->add_option("--count", count, "Training images to dump");
  inspect->add_option("--scale", label_scale, "Pixel upscaling of label maps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto records = pah::generate_synthetic(gen_out, spec);
      std::printf("wrote %zu images to %s\n", records.size(), gen_out.c_str());
      return 0;
    }

    if (*train) {
      pah::RunConfig config = config_path.empty() ? pah::RunConfig{} : pah::RunConfig::load(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw pah::ConfigError("--set expects key=value");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!dataset.empty()) config.dataset = dataset;
      if (!out.empty()) config.out = out;
      if (seed) config.model.seed = *seed;
      pah::Trainer trainer(config);
      trainer.run();
      if (!trainer.dataset().indices(pah::Split::kQuery).empty()) {
        const pah::EvalReport report = trainer.evaluate();
        pah::write_report_csv(fs::path(config.out) / "eval.csv", report);
        std::cout << pah::format_report(report);
      }
      std::printf("checkpoint: %s\n", trainer.checkpoint_path().c_str());
      return 0;
    }

    if (*eval || *retrieve) {
      pah::LoadedCheckpoint ckpt = pah::load_checkpoint(checkpoint);
      const std::string root = dataset.empty() ? ckpt.config.dataset : dataset;
      const pah::Dataset ds = pah::Dataset::load(root, pah::LoadOptions{ckpt.config.closed_set});
      const auto gallery =
          load_split(ds, gallery_split == "query" ? pah::Split::kQuery : pah::Split::kGallery);

      if (*eval) {
        const auto queries = load_split(ds, pah::Split::kQuery);
        pah::EvalOptions options;
        options.k_max = top_k;
        options.exclude_same_sample = ckpt.config.exclude_same_sample || gallery_split == "query";
        if (scenario != "all") options.scenarios = {pah::parse_scenario(scenario)};
        const pah::EvalReport report = pah::evaluate(ckpt.model, queries, gallery, options);
        if (!csv_out.empty()) pah::write_report_csv(csv_out, report);
        std::cout << pah::format_report(report);
        return 0;
      }

      pah::ImageSample query;
      query.pixels = pah::read_png(query_image);
      query.head_box = parse_box(head_box);
      query.sample_id = -1;
      const pah::Descriptor q = pah::extract_descriptor(ckpt.model, query);
      const auto descriptors = pah::extract_descriptors(ckpt.model, gallery);
      const auto ranked = pah::rank_gallery(q, descriptors);
      const auto gallery_idx = ds.indices(gallery_split == "query" ? pah::Split::kQuery
                                                                   : pah::Split::kGallery);
      std::printf("rank,path,identity,clothes_id,similarity\n");
      for (std::size_t r = 0; r < std::min(top_k, ranked.size()); ++r) {
        const auto& rec = ds.records()[gallery_idx[ranked[r].index]];
        std::printf("%zu,%s,%d,%d,%.6f\n", r + 1, rec.path.c_str(), rec.identity, rec.clothes_id,
                    ranked[r].similarity);
      }
      return 0;
    }

    if (*inspect) {
      pah::PahModel model;
      pah::RunConfig config;
      if (!checkpoint.empty()) {
        auto ckpt = pah::load_checkpoint(checkpoint);
        config = ckpt.config;
        model = ckpt.model;
      } else {
        if (!config_path.empty()) config = pah::RunConfig::load(config_path);
        if (seed) config.model.seed = *seed;
        model = pah::PahModel(config.model);
      }
      const std::string root = dataset.empty() ? config.dataset : dataset;
      if (root.empty()) throw pah::ConfigError("inspect-labels: no dataset given");
      const pah::Dataset ds = pah::Dataset::load(root, pah::LoadOptions{true});
      fs::create_directories(out);
      const auto train_idx = ds.indices(pah::Split::kTrain);
      for (std::size_t i = 0; i < std::min(count, train_idx.size()); ++i) {
        const pah::ImageSample s = ds.sample(train_idx[i]);
        const auto labels = pah::generate_pseudo_labels(
            model.dense_features(s.pixels), config.model.num_parts,
            pah::derive_seed(config.model.seed, 1, i));
        char name[64];
        std::snprintf(name, sizeof name, "%03zu_image.png", i);
        pah::write_png(fs::path(out) / name, s.pixels);
        std::snprintf(name, sizeof name, "%03zu_labels.png", i);
        pah::write_label_png(fs::path(out) / name, labels.labels, labels.height, labels.width,
                             label_scale);
        if (labels.fallback) spdlog::warn("image {}: too few distinct foreground features", i);
      }
      std::printf("wrote %zu label maps to %s\n", std::min(count, train_idx.size()), out.c_str());
      return 0;
    }
  } catch (const pah::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
