// Runs the eight acceptance checks and prints one PASS/FAIL line for each.
// Exit status is nonzero if any check fails.
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "oracles.hpp"
#include "pah/checkpoint.hpp"
#include "pah/config.hpp"
#include "pah/losses.hpp"
#include "pah/part_stream.hpp"
#include "pah/pseudo_labeler.hpp"
#include "pah/retrieval.hpp"
#include "pah/stream_heads.hpp"
#include "pah/trainer.hpp"
#include "support.hpp"

using namespace pah;
namespace fs = std::filesystem;
using test::grad_check;
using test::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double budget_s, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += " [over time budget]";
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s (%.1f s, budget %.0f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), secs, budget_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ 1

double gradient_instance(int i) {
  std::mt19937_64 rng(7000 + i);
  double worst = 0.0;
  auto track = [&](const std::function<Tensor()>& loss, std::vector<Tensor> params) {
    worst = std::max(worst, grad_check(loss, std::move(params), rng).max_rel_error);
  };

  // Identity loss over three heads.
  std::vector<std::size_t> labels{0, 1, 1, 2, 0, 2};
  const Tensor targets = one_hot_rows(labels, 3);
  Tensor l1 = random_tensor({6, 3}, rng, -2, 2), l2 = random_tensor({6, 3}, rng, -2, 2);
  track([&] { return identity_loss_batch(std::array<Tensor, 2>{l1, l2}, targets); }, {l1, l2});

  // Pair loss, batched and per bundle.
  Tensor f1 = random_tensor({6, 4}, rng, -0.4, 0.4), f2 = random_tensor({6, 4}, rng, -0.4, 0.4);
  track([&] { return ms_loss_batch(std::array<Tensor, 2>{f1, f2}, labels, PairLossParams{}); },
        {f1, f2});
  FeatureBundle a, p, n;
  a.features[0] = random_tensor({4}, rng, -0.5, 0.5);
  p.features[0] = random_tensor({4}, rng, -0.5, 0.5);
  n.features[0] = random_tensor({4}, rng, -0.5, 0.5);
  std::array<FeatureBundle, 1> pos{p}, neg{n};
  track([&] { return ms_loss(a, pos, neg, PairLossParams{}); },
        {a.features[0], p.features[0], n.features[0]});

  // Part loss through the part-probability softmax.
  Tensor logits = random_tensor({4, 3, 5}, rng, -2, 2);
  Tensor onehot({4, 3, 5});
  for (std::size_t px = 0; px < 12; ++px) onehot.mutable_data()[px * 5 + rng() % 5] = 1.0;
  track([&] { return psd_loss(softmax(logits, 2), onehot).value; }, {logits});

  // Total loss.
  Tensor x = random_tensor({3}, rng), y = random_tensor({3}, rng);
  track([&] { return total_loss(dot(x, x), dot(x, y), sum(mul(y, y)), 1.0, 0.1); }, {x, y});

  // Global stream head with adversarial erasing.
  std::vector<Tensor> m21, m22;
  for (int k = 0; k < 3; ++k) {
    m21.push_back(random_tensor({6, 2, 3}, rng, 0, 1));
    m22.push_back(random_tensor({6, 2, 3}, rng, 0, 1));
  }
  std::array<EmbeddingHead, 3> heads;
  for (auto& h : heads) {
    h = make_embedding_head(3, 4, rng);
    h.fc_weight = random_tensor({3, 4}, rng);
  }
  const Tensor target = random_tensor({3, 4}, rng);
  const std::vector<std::size_t> head_labels{0, 1, 3};
  const Tensor head_targets = one_hot_rows(head_labels, 4);
  track(
      [&] {
        StreamHeadOutput o = stream_head(m21, m22, heads, NormMode::kTrain);
        Tensor d = sub(o.p_ae, target);
        return add_n(std::array<Tensor, 3>{
            identity_loss_batch(std::array<Tensor, 3>{o.p_gmp, o.p_ae, o.p_gap}, head_targets),
            sum(mul(d, d)), sum(mul(o.f_ae, o.f_ae))});
      },
      {m21[0], m21[1], m22[0], m22[2], heads[1].gamma, heads[1].fc_weight, heads[2].beta});

  // Part aggregation.
  Tensor dense = random_tensor({4, 3, 5}, rng, 0, 2), w = random_tensor({4, 5}, rng);
  const Tensor agg_target = random_tensor({15}, rng);
  track(
      [&] {
        Tensor d = sub(part_aggregate(dense, part_probabilities(dense, w)).f_l, agg_target);
        return sum(mul(d, d));
      },
      {dense, w});
  return worst;
}

Outcome gradients() {
  constexpr int kInstances = 24;
  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) worst = std::max(worst, gradient_instance(i));
  return {worst < 1e-4, std::to_string(kInstances) + " instances x 8 checks, max rel err " +
                            fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 2

Outcome metric_oracles() {
  std::mt19937_64 rng(8000);
  int mismatches = 0, compared = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t nq = 1 + rng() % 50, ng = 1 + rng() % 100;
    const std::size_t dim = 1 + rng() % 6;
    const int ids = 2 + static_cast<int>(rng() % 10);
    auto q = test::random_descriptors(rng, nq, dim, ids, 3, 0);
    auto g = test::random_descriptors(rng, ng, dim, ids, 3, 100000);
    EvalOptions o;
    o.k_max = 10;
    for (Scenario s : {Scenario::kGeneral, Scenario::kSame, Scenario::kCross}) {
      const auto oracle = test::metrics_oracle(q, g, s, o.k_max);
      o.scenarios = {s};
      const EvalReport r = evaluate(q, g, o);
      const ScenarioReport& sr = r.at(s);
      ++compared;
      if (sr.valid_queries != oracle.valid) {
        ++mismatches;
        continue;
      }
      if (oracle.valid == 0) continue;
      if (sr.cmc != oracle.cmc || sr.map != oracle.map) ++mismatches;
    }
  }
  return {mismatches == 0,
          std::to_string(compared) + " scenario reports on 200 instances, " +
              std::to_string(mismatches) + " mismatches"};
}

// ------------------------------------------------------------------ 3

Outcome clustering() {
  std::mt19937_64 rng(9000);
  std::normal_distribution<double> g(0.0, 1.0);
  int bad_monotone = 0, bad_assign = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 10 + rng() % 200, dim = 1 + rng() % 8, k = 1 + rng() % 8;
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts)
      for (double& v : p) v = g(rng);
    const KMeansResult r = kmeans(pts, k, rng());
    for (std::size_t t = 1; t < r.inertia_history.size(); ++t)
      if (r.inertia_history[t] > r.inertia_history[t - 1]) ++bad_monotone;
    for (std::size_t p = 0; p < n; ++p) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t c = 0; c < k; ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) d += (pts[p][j] - r.centroids[c][j]) * (pts[p][j] - r.centroids[c][j]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (r.assignment[p] != best) ++bad_assign;
    }
  }
  // Six horizontal bands of two rows, each carrying one basis direction.
  Tensor bands({12, 4, 6});
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 4; ++j) bands.at({i, j, i / 2}) = 1.0;
  const PseudoLabelMap m = generate_pseudo_labels(bands, 7, 1);
  bool ordered = !m.fallback;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 4; ++j) ordered = ordered && m.labels[i * 4 + j] == i / 2 + 1;
  return {bad_monotone == 0 && bad_assign == 0 && ordered,
          std::to_string(bad_monotone) + " inertia increases, " + std::to_string(bad_assign) +
              " non-nearest assignments, bands " + (ordered ? "ordered 1..6" : "NOT ordered")};
}

// ------------------------------------------------------------------ 4

Outcome erasing() {
  std::mt19937_64 rng(9500);
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t h = 2 + rng() % 30, w = 1 + rng() % 10, c = 1 + rng() % 8;
    const Tensor map = random_tensor({h, w, c}, rng, 0, 1);
    const ErasedPool e = adversarial_erase(map);
    std::size_t zeros = 0, first = h, last = 0;
    for (std::size_t r = 0; r < h; ++r) {
      if (e.mask[r] != 0.0) continue;
      ++zeros;
      first = std::min(first, r);
      last = r;
    }
    const std::size_t expect = (h + 2) / 3;
    bool ok = zeros == expect && last - first + 1 == zeros;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mx = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        if (e.mask[r] == 0.0) continue;
        for (std::size_t j = 0; j < w; ++j) mx = std::max(mx, map.at({r, j, ch}));
      }
      ok = ok && e.f_ae.data()[ch] <= mx;
    }
    bad += ok ? 0 : 1;
  }
  return {bad == 0, "100 maps, " + std::to_string(bad) + " violations"};
}

// --------------------------------------------------------------- 5, 6, 8

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("pah_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path desk_dataset() {
  const fs::path root = scratch_root() / "data";
  if (!fs::exists(root / kManifestFile)) generate_synthetic(root, SyntheticSpec{});
  return root;
}

RunConfig desk_config(std::uint64_t seed, const std::string& streams, const fs::path& out) {
  RunConfig c = RunConfig::load(fs::path(PAH_SOURCE_DIR) / "configs" / "desk.cfg");
  c.dataset = desk_dataset().string();
  c.out = out.string();
  c.model.seed = seed;
  c.model.streams = StreamSet::parse(streams);
  return c;
}

Outcome overfit() {
  Trainer t(desk_config(1, "global,part,head", ""));
  const ScenarioReport before = t.evaluate().at(Scenario::kGeneral);
  t.run();
  const ScenarioReport r = t.evaluate().at(Scenario::kGeneral);
  const double rank1 = r.cmc.at(0);
  return {rank1 >= 0.90 && r.map >= 0.70,
          "Rank-1 " + fmt("%.4f", rank1) + ", mAP " + fmt("%.4f", r.map) + " (untrained " +
              fmt("%.4f", before.cmc.at(0)) + " / " + fmt("%.4f", before.map) + ")"};
}

Outcome ablation() {
  const std::vector<std::string> variants{"global", "part", "head", "global,part,head"};
  std::vector<std::vector<double>> rank1(variants.size());
  bool bound = true;
  std::string worst;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      Trainer t(desk_config(seed, variants[v], ""));
      t.run();
      rank1[v].push_back(t.evaluate().at(Scenario::kCross).cmc.at(0));
    }
    const double full = rank1[3].back();
    for (std::size_t v = 0; v < 3; ++v) {
      if (full < rank1[v].back() - 0.05) {
        bound = false;
        worst += " seed " + std::to_string(seed) + ": full < " + variants[v] + " - 0.05;";
      }
    }
  }
  auto mean = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
  };
  std::string detail = "cross Rank-1 means: global " + fmt("%.4f", mean(rank1[0])) + ", part " +
                       fmt("%.4f", mean(rank1[1])) + ", head " + fmt("%.4f", mean(rank1[2])) +
                       ", full " + fmt("%.4f", mean(rank1[3])) + "; full > global: " +
                       (mean(rank1[3]) > mean(rank1[0]) ? "yes" : "no");
  detail += "; per seed full/global/part/head:";
  for (std::size_t s = 0; s < 3; ++s) {
    detail += " [" + fmt("%.3f", rank1[3][s]) + "/" + fmt("%.3f", rank1[0][s]) + "/" +
              fmt("%.3f", rank1[1][s]) + "/" + fmt("%.3f", rank1[2][s]) + "]";
  }
  return {bound, detail + worst};
}

Outcome schedule() {
  const RunConfig c = RunConfig::load(fs::path(PAH_SOURCE_DIR) / "configs" / "paper.cfg");
  const double at0 = lr_schedule(0, c), at10 = lr_schedule(10, c);
  const double gap = std::abs(lr_schedule(10 - 1e-9, c) - lr_schedule(10 + 1e-9, c));
  return {at0 == 6e-5 && at10 == 6e-4 && gap < 1e-12,
          "lr(0) " + fmt("%.17g", at0) + ", lr(10) " + fmt("%.17g", at10) + ", jump at 10 " +
              fmt("%.2e", gap)};
}

Outcome determinism() {
  const fs::path a = scratch_root() / "det_a", b = scratch_root() / "det_b";
  for (const fs::path& out : {a, b}) {
    RunConfig c = desk_config(5, "global,part,head", out);
    c.epochs_warmup = 1;
    c.epochs_main = 3;
    Trainer t(c);
    t.run();
    if (out == a) write_report_csv(out / "eval_in_process.csv", t.evaluate());
  }
  const bool same_losses = slurp(a / "metrics.csv") == slurp(b / "metrics.csv") &&
                           !slurp(a / "metrics.csv").empty();

  LoadedCheckpoint ckpt = load_checkpoint(a / "checkpoint.bin");
  const Dataset ds = Dataset::load(ckpt.config.dataset, LoadOptions{ckpt.config.closed_set});
  std::vector<ImageSample> q, g;
  for (std::size_t i : ds.indices(Split::kQuery)) q.push_back(ds.sample(i));
  for (std::size_t i : ds.indices(Split::kGallery)) g.push_back(ds.sample(i));
  EvalOptions o;
  o.k_max = ckpt.config.top_k;
  o.exclude_same_sample = ckpt.config.exclude_same_sample;
  write_report_csv(a / "eval_reloaded.csv", evaluate(ckpt.model, q, g, o));
  const bool same_eval = slurp(a / "eval_in_process.csv") == slurp(a / "eval_reloaded.csv");
  return {same_losses && same_eval, std::string("loss CSVs ") + (same_losses ? "identical" : "DIFFER") +
                                        ", reloaded eval " + (same_eval ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  report(1, "gradient checks", 120, gradients);
  report(2, "metric oracles", 60, metric_oracles);
  report(3, "clustering", 60, clustering);
  report(4, "erasing invariants", 10, erasing);
  report(5, "end-to-end overfit", 600, overfit);
  report(6, "ablation direction", 1800, ablation);
  report(7, "schedule endpoints", 1, schedule);
  report(8, "determinism and persistence", 300, determinism);
  fs::remove_all(scratch_root());
  std::printf("%d of 8 acceptance checks failed\n", failures);
  return failures == 0 ? 0 : 1;
}
