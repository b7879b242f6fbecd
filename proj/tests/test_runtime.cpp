#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "pah/checkpoint.hpp"
#include "pah/config.hpp"
#include "pah/errors.hpp"
#include "pah/optimizer.hpp"
#include "pah/trainer.hpp"

using namespace pah;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("pah_runtime_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Two identities, two outfits, 32x16 images and a narrow model.
RunConfig toy_config(const fs::path& data, const fs::path& out) {
  SyntheticSpec spec;
  spec.num_ids = 2;
  spec.imgs_per_id = 4;
  spec.height = 32;
  spec.width = 16;
  spec.query_per_clothes = 1;
  spec.gallery_per_clothes = 1;
  if (!fs::exists(data / kManifestFile)) generate_synthetic(data, spec);
  RunConfig c = RunConfig::parse(
      "input_h = 32\ninput_w = 16\nstem_channels = 4\nbranch_channels = 6,6\n"
      "dense_stem_channels = 4,4\ndense_channels = 5\nnum_parts = 4\n"
      "batch_identities = 2\nbatch_instances = 2\nepochs_warmup = 1\nepochs_main = 1\n"
      "lr_init = 0.001\nlr_peak = 0.01\nlr_final = 0.0001\nclosed_set = true\n");
  c.dataset = data.string();
  c.out = out.string();
  return c;
}

}  // namespace

// ----------------------------------------------------------------- config

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.set("streams", "global,head");
  c.set("lr_peak", "0.1234567890123");
  c.set("branch_channels", "8,16");
  c.set("closed_set", "true");
  c.dataset = "some/where";
  const RunConfig back = RunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.lr_peak, 0.1234567890123);
  EXPECT_EQ(back.model.streams, c.model.streams);
  EXPECT_EQ(back.model.branch_channels, (std::vector<std::size_t>{8, 16}));
}

TEST(Config, CommentsAndBlankLines) {
  const RunConfig c = RunConfig::parse("# heading\n\nepochs_main = 7  # trailing\n  momentum=0.5\n");
  EXPECT_EQ(c.epochs_main, 7u);
  EXPECT_EQ(c.momentum, 0.5);
}

TEST(Config, Errors) {
  EXPECT_THROW(RunConfig::parse("colour = blue\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("epochs_main = -3\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("lr_peak = fast\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just some words\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("optimizer = rmsprop\n"), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/pah.cfg"), IoError);
  try {
    RunConfig::parse("epochs_main = 3\nbogus = 1\n");
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"desk.cfg", "paper.cfg"}) {
    const RunConfig c = RunConfig::load(fs::path(PAH_SOURCE_DIR) / "configs" / name);
    EXPECT_NO_THROW(c.validate()) << name;
  }
}

// ------------------------------------------------------------ lr schedule

TEST(LrSchedule, DefaultEndpoints) {
  RunConfig c;
  c.epochs_warmup = 10;
  c.epochs_main = 150;
  EXPECT_EQ(lr_schedule(0, c), 6e-5);
  EXPECT_EQ(lr_schedule(10, c), 6e-4);
  EXPECT_NEAR(lr_schedule(5, c), 3.3e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(85, c), 3.003e-4, 1e-15);
  EXPECT_NEAR(lr_schedule(160, c), 6e-7, 1e-18);
}

TEST(LrSchedule, ContinuousAtWarmupEnd) {
  RunConfig c;
  c.epochs_warmup = 10;
  c.epochs_main = 150;
  EXPECT_LT(std::abs(lr_schedule(10 - 1e-9, c) - lr_schedule(10 + 1e-9, c)), 1e-12);
}

TEST(LrSchedule, MonotonePieces) {
  RunConfig c;
  double prev = lr_schedule(0, c);
  for (double e = 0.25; e <= c.epochs_warmup; e += 0.25) {
    EXPECT_GE(lr_schedule(e, c), prev);
    prev = lr_schedule(e, c);
  }
  for (double e = c.epochs_warmup + 0.25; e <= c.total_epochs(); e += 0.25) {
    EXPECT_LE(lr_schedule(e, c), prev);
    prev = lr_schedule(e, c);
  }
}

TEST(LrSchedule, OutOfRangeIsClampedAndFlagged) {
  RunConfig c;
  bool clamped = false;
  EXPECT_EQ(lr_schedule(-1, c, &clamped), c.lr_init);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(lr_schedule(1e6, c, &clamped), lr_schedule(c.total_epochs(), c));
  EXPECT_TRUE(clamped);
  lr_schedule(2, c, &clamped);
  EXPECT_FALSE(clamped);
}

// -------------------------------------------------------------- optimizer

TEST(Optimizer, SgdWithMomentum) {
  Tensor w({1}, std::vector<double>{1.0}, true);
  Optimizer opt({{"w", w}}, Optimizer::Kind::kSgd, 0.9, 0.0);
  for (int i = 0; i < 2; ++i) {
    opt.zero_grad();
    w.grad()[0] = 2.0;
    opt.step(0.1);
  }
  EXPECT_NEAR(w.data()[0], 0.42, 1e-15);
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(Optimizer, SgdWeightDecay) {
  Tensor w({1}, std::vector<double>{2.0}, true);
  Optimizer opt({{"w", w}}, Optimizer::Kind::kSgd, 0.0, 0.5);
  opt.zero_grad();
  w.grad()[0] = 0.0;
  opt.step(0.1);
  EXPECT_NEAR(w.data()[0], 1.9, 1e-15);
}

TEST(Optimizer, ParametersOutsideTheGraphAreLeftAlone) {
  Tensor w({1}, std::vector<double>{2.0}, true);
  Optimizer opt({{"w", w}}, Optimizer::Kind::kSgd, 0.9, 0.5);
  opt.step(0.1);
  EXPECT_EQ(w.data()[0], 2.0);
}

TEST(Optimizer, AdamFirstStepIsSignTimesLr) {
  Tensor w({2}, std::vector<double>{0.0, 0.0}, true);
  Optimizer opt({{"w", w}}, Optimizer::Kind::kAdam, 0.9, 0.0);
  w.grad()[0] = 3.0;
  w.grad()[1] = -0.02;
  opt.step(0.01);
  EXPECT_NEAR(w.data()[0], -0.01, 1e-9);
  EXPECT_NEAR(w.data()[1], 0.01, 1e-7);
  EXPECT_EQ(opt.state().size(), 2u);
}

// ------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  ModelConfig mc;
  mc.input_h = 32;
  mc.input_w = 16;
  mc.stem_channels = {4};
  mc.branch_channels = {6, 6};
  mc.dense_stem_channels = {4, 4};
  mc.dense_channels = 5;
  mc.num_parts = 4;
  RunConfig rc;
  rc.model = mc;
  PahModel model(mc);
  for (auto& p : model.buffers()) p.tensor.mutable_data()[0] = 0.125;
  Optimizer opt(model.parameters(), Optimizer::Kind::kSgd, 0.9, 0.0);
  for (auto& p : model.parameters()) p.tensor.grad()[0] = 1.0;
  opt.step(0.5);
  save_checkpoint(dir.path() / "c.bin", rc, model, &opt, CheckpointMeta{4, 1, "abc"});
  const LoadedCheckpoint back = load_checkpoint(dir.path() / "c.bin");
  EXPECT_EQ(back.config.to_text(), rc.to_text());
  EXPECT_EQ(back.meta.epoch, 4u);
  EXPECT_EQ(back.meta.rng_state, "abc");
  auto compare = [](const NamedTensors& a, const NamedTensors& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      EXPECT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
      EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                             b[i].tensor.data().begin()))
          << a[i].name;
    }
  };
  compare(model.parameters(), back.model.parameters());
  compare(model.buffers(), back.model.buffers());
  compare(opt.state(), back.optimizer_state);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir;
  std::ofstream(dir.path() / "bad.bin") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir.path() / "bad.bin"), IoError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.bin"), IoError);
}

TEST(Checkpoint, RestoreChecksNamesAndShapes) {
  NamedTensors src{{"a", Tensor({2}, 1.0)}};
  NamedTensors wrong_shape{{"a", Tensor({3})}};
  NamedTensors missing{{"b", Tensor({2})}};
  EXPECT_THROW(restore_tensors(src, wrong_shape, "test"), IoError);
  EXPECT_THROW(restore_tensors(src, missing, "test"), IoError);
  NamedTensors ok{{"a", Tensor({2})}};
  restore_tensors(src, ok, "test");
  EXPECT_EQ(ok[0].tensor.data()[1], 1.0);
}

// ---------------------------------------------------------------- trainer

TEST(Trainer, SeedDerivationSeparatesKeys) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Trainer, ToyRunWritesArtifacts) {
  TempDir dir;
  Trainer t(toy_config(dir.path() / "data", dir.path() / "run"));
  const auto history = t.run();
  ASSERT_EQ(history.size(), 2u);
  for (const auto& m : history) {
    EXPECT_TRUE(std::isfinite(m.loss_total));
    EXPECT_NEAR(m.loss_total, m.loss_id + m.loss_pair + 0.1 * m.loss_psd, 1e-9);
    EXPECT_GT(m.loss_psd, 0.0);
  }
  EXPECT_EQ(history[0].lr, 0.001);
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "config.txt"));
  const LoadedCheckpoint c = load_checkpoint(t.checkpoint_path());
  EXPECT_EQ(c.meta.epoch, 2u);
  EXPECT_EQ(c.config.model.num_classes, 2u);
  const EvalReport r = t.evaluate();
  EXPECT_EQ(r.num_queries, 4u);
}

TEST(Trainer, SeededRunsAreIdentical) {
  TempDir dir;
  Trainer a(toy_config(dir.path() / "data", dir.path() / "a"));
  Trainer b(toy_config(dir.path() / "data", dir.path() / "b"));
  a.run();
  b.run();
  EXPECT_EQ(slurp(dir.path() / "a" / "metrics.csv"), slurp(dir.path() / "b" / "metrics.csv"));
  RunConfig other = toy_config(dir.path() / "data", dir.path() / "c");
  other.model.seed = 99;
  Trainer c(other);
  c.run();
  EXPECT_NE(slurp(dir.path() / "a" / "metrics.csv"), slurp(dir.path() / "c" / "metrics.csv"));
}

TEST(Trainer, SingleStreamRuns) {
  TempDir dir;
  for (const char* streams : {"global", "part", "head"}) {
    RunConfig c = toy_config(dir.path() / "data", "");
    c.model.streams = StreamSet::parse(streams);
    c.epochs_main = 0;
    Trainer t(c);
    const auto history = t.run();
    ASSERT_EQ(history.size(), 1u);
    EXPECT_TRUE(std::isfinite(history[0].loss_total)) << streams;
    if (std::string(streams) != "part") EXPECT_EQ(history[0].loss_psd, 0.0);
  }
}

TEST(Trainer, DivergenceIsReported) {
  TempDir dir;
  RunConfig c = toy_config(dir.path() / "data", dir.path() / "run");
  c.lr_init = 1e200;
  c.lr_peak = 1e200;
  c.epochs_main = 20;
  Trainer t(c);
  EXPECT_THROW(t.run(), NumericError);
  const std::string diag = slurp(dir.path() / "run" / "nan_batch.txt");
  EXPECT_NE(diag.find("non-finite"), std::string::npos);
  EXPECT_NE(diag.find("images/train/"), std::string::npos);
}

TEST(Trainer, WrongImageSizeIsRejected) {
  TempDir dir;
  RunConfig c = toy_config(dir.path() / "data", "");
  c.model.input_h = 64;
  c.model.input_w = 32;
  EXPECT_THROW(Trainer{c}, DimensionError);
}

TEST(Trainer, MissingDataset) {
  RunConfig c;
  EXPECT_THROW(Trainer{c}, ConfigError);
}
