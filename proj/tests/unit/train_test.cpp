#include "inflect/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "inflect/error.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace inflect {
namespace {

TrainingConfig small_config() {
  TrainingConfig c;
  c.model.char_embedding = 6;
  c.model.tag_embedding = 6;
  c.model.hidden = c.model.tag_attention = 8;
  c.model.attention = 8;
  c.model.discriminator_hidden = 4;
  c.max_epochs = {1, 1, 1};
  return c;
}

Vocabulary vocab_of(std::initializer_list<std::span<const Example>> sets) {
  std::vector<std::vector<Example>> copies;
  for (auto s : sets) copies.emplace_back(s.begin(), s.end());
  return Vocabulary::build(copies);
}

ModelParams tiny_params(double fill) {
  ModelConfig c;
  c.char_embedding = c.tag_embedding = 2;
  c.hidden = c.tag_attention = c.attention = c.discriminator_hidden = 2;
  ModelParams p(c, 5, 3, 1);
  for (auto& [name, t] : p.named_tensors()) t->values().setConstant(fill);
  return p;
}

TEST(Checkpoints, FirstEvaluationFillsEverySlot) {
  CheckpointSet cs;
  EXPECT_TRUE(cs.empty());
  const CheckpointUpdate u = update_checkpoints(cs, tiny_params(1.0), 0.4, 2.0, 0);
  EXPECT_TRUE(u.accuracy && u.levenshtein && u.both);
  EXPECT_EQ(cs.best_accuracy->evaluation, 0);
  EXPECT_EQ(cs.best_levenshtein->evaluation, 0);
  EXPECT_EQ(cs.both_improved->evaluation, 0);
  EXPECT_FALSE(cs.best_accuracy->params.char_embed.requires_grad());

  const CheckpointUpdate v = update_checkpoints(cs, tiny_params(2.0), 0.5, 2.5, 1);
  EXPECT_TRUE(v.accuracy);
  EXPECT_FALSE(v.levenshtein || v.both);
  EXPECT_EQ(cs.best_accuracy->params.char_embed.values()(0, 0), 2.0);
  EXPECT_EQ(cs.best_levenshtein->params.char_embed.values()(0, 0), 1.0);

  const CheckpointUpdate tie = update_checkpoints(cs, tiny_params(3.0), 0.5, 2.0, 2);
  EXPECT_FALSE(tie.accuracy || tie.levenshtein || tie.both);
}

TEST(Checkpoints, MatchReplayOracleOnRandomSequences) {
  Rng rng(12);
  const ModelParams p = tiny_params(0.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 30);
    std::vector<testing::Metric> seq;
    CheckpointSet cs;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so ties happen.
      seq.push_back({static_cast<double>(uniform_index(rng, 6)) / 5.0, static_cast<double>(uniform_index(rng, 6)) / 2.0});
      update_checkpoints(cs, p, seq.back().accuracy, seq.back().distance, static_cast<int>(i));
    }
    const testing::ReplayedSlots r = testing::replay_checkpoints(seq);
    ASSERT_EQ(cs.best_accuracy->evaluation, r.accuracy);
    ASSERT_EQ(cs.best_levenshtein->evaluation, r.levenshtein);
    ASSERT_EQ(cs.both_improved->evaluation, r.both);
    double best_acc = 0.0, best_lev = std::numeric_limits<double>::infinity();
    for (const auto& m : seq) best_acc = std::max(best_acc, m.accuracy), best_lev = std::min(best_lev, m.distance);
    ASSERT_EQ(cs.best_accuracy->accuracy, best_acc);
    ASSERT_EQ(cs.best_levenshtein->distance, best_lev);
  }
}

TEST(Sgd, ClosedFormStepAndZeroRate) {
  ad::Tensor w(ad::Matrix::Constant(1, 1, 1.0), true);
  const std::pair<std::string, ad::Tensor*> params[] = {{"w", &w}};
  auto square_grad = [&] {
    ad::Tape tape;
    const ad::Expr x = tape.param(w);
    tape.backward(ad::elementwise_mul(x, x));
  };
  square_grad();
  sgd_step(params, 0.0);
  EXPECT_EQ(w.values()(0, 0), 1.0);
  EXPECT_EQ(w.grad()(0, 0), 0.0);
  square_grad();
  EXPECT_DOUBLE_EQ(sgd_step(params, 0.1), 2.0);
  EXPECT_DOUBLE_EQ(w.values()(0, 0), 0.8);
}

TEST(Sgd, ClipsGlobalNormAndRejectsNonFinite) {
  ad::Tensor a(ad::Matrix::Zero(2, 1), true), b(ad::Matrix::Zero(1, 1), true);
  const std::pair<std::string, ad::Tensor*> params[] = {{"a", &a}, {"b", &b}};
  a.grad() << 6.0, 0.0;
  b.grad() << 8.0;
  EXPECT_DOUBLE_EQ(sgd_step(params, 1.0, 5.0), 10.0);
  EXPECT_DOUBLE_EQ(a.values()(0, 0), -3.0);
  EXPECT_DOUBLE_EQ(b.values()(0, 0), -4.0);

  b.grad() << std::numeric_limits<double>::quiet_NaN();
  a.grad() << 1.0, 1.0;
  try {
    sgd_step(params, 1.0);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find('b'), std::string::npos);
  }
  EXPECT_DOUBLE_EQ(a.values()(0, 0), -3.0);
}

TEST(Config, RoundTripsAndRejectsUnknownKeys) {
  TrainingConfig c = small_config();
  c.lr = 0.037;
  c.max_epochs = {3, 7, 11};
  c.batch_sizes = {4, 5, 2};
  c.discriminator = false;
  c.hallucinate = 10000;
  c.model.markov = false;
  c.model.lstm = LstmKind::standard;
  c.model.tag_informed_recurrence = false;
  std::istringstream in(format_config(c));
  TrainingConfig back;
  apply_config_text(back, in, "cfg");
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.max_epochs, c.max_epochs);
  EXPECT_EQ(back.model, c.model);

  TrainingConfig d;
  EXPECT_THROW(apply_config_value(d, "learning_rate", "0.1"), UsageError);
  EXPECT_THROW(apply_config_value(d, "lr", "fast"), UsageError);
  EXPECT_THROW(apply_config_value(d, "max_epochs", "1,2"), UsageError);
  std::istringstream bad("# comment\nlr = 0.2\nbogus = 1\n");
  try {
    apply_config_text(d, bad, "my.cfg");
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("my.cfg:3"), std::string::npos);
  }
  EXPECT_EQ(d.lr, 0.2);
  d.phase2_copy_prob = 1.5;
  EXPECT_THROW(d.validate(), UsageError);
  d = TrainingConfig{};
  d.decay_patience = 0;
  EXPECT_THROW(d.validate(), UsageError);
}

TEST(Trainer, PhaseOneEpochHasOriginalsAndBothCopies) {
  const auto split = testing::make_synthetic_split(1, 5, 2);
  TrainingConfig c = small_config();
  c.warmup_copy_threshold = 1.0;  // never exceeded: run the full budget
  c.max_epochs[0] = 2;
  Trainer t(c, vocab_of({split.train}));
  int items = 0, copies = 0;
  t.on_item = [&](int phase, const Example& e) {
    EXPECT_EQ(phase, 1);
    ++items;
    copies += e.is_copy_task;
  };
  EXPECT_EQ(t.phase1(split.train), 2);
  EXPECT_EQ(items, 30);
  EXPECT_EQ(copies, 20);
  EXPECT_EQ(t.copy_eval_set().size(), 10u);
  ASSERT_EQ(t.history().size(), 2u);
  EXPECT_EQ(t.history()[1].phase, 1);
}

TEST(Trainer, PhaseTwoCopyFraction) {
  const auto split = testing::make_synthetic_split(2, 300, 1);
  TrainingConfig c = small_config();
  c.model.hidden = c.model.tag_attention = c.model.attention = 4;
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    c.seed = seed;
    Trainer t(c, vocab_of({split.train, split.dev}));
    int items = 0, copies = 0;
    t.on_item = [&](int, const Example& e) {
      ++items;
      copies += e.is_copy_task;
    };
    t.phase2({}, split.train, {}, split.dev);
    EXPECT_EQ(items - copies, 300);
    total += static_cast<double>(copies) / items;
  }
  EXPECT_NEAR(total / 10.0, 0.30 / 1.30, 0.02);
}

TEST(Trainer, PhaseTwoUpsamplesLowWithoutHallucination) {
  const auto high = testing::make_synthetic_split(3, 40, 0, "hi");
  const auto low = testing::make_synthetic_split(4, 4, 1, "lo");
  TrainingConfig c = small_config();
  c.phase2_copy_prob = 0.0;
  Trainer t(c, vocab_of({high.train, low.train}));
  int low_items = 0, high_items = 0;
  t.on_item = [&](int, const Example& e) { (e.language == "lo" ? low_items : high_items)++; };
  t.phase2(high.train, low.train, {}, low.dev);
  EXPECT_EQ(high_items, 40);
  EXPECT_EQ(low_items, 40);

  Trainer h(c, vocab_of({high.train, low.train}));
  int hallucinated = 0;
  h.on_item = [&](int, const Example& e) { hallucinated += e.is_hallucinated; };
  std::vector<Example> hall = low.train;
  for (Example& e : hall) e.is_hallucinated = true;
  h.phase2({}, low.train, hall, low.dev);
  EXPECT_EQ(hallucinated, 4);
}

TEST(Trainer, PhaseThreeUsesOnlyLowResourceItems) {
  const auto high = testing::make_synthetic_split(3, 30, 0, "hi");
  const auto low = testing::make_synthetic_split(4, 10, 3, "lo");
  TrainingConfig c = small_config();
  c.max_epochs = {1, 1, 2};
  Trainer t(c, vocab_of({high.train, low.train}));
  t.phase2(high.train, low.train, {}, low.dev);
  int phase3_items = 0;
  t.on_item = [&](int phase, const Example& e) {
    ASSERT_EQ(phase, 3);
    EXPECT_EQ(e.language, "lo");
    EXPECT_FALSE(e.is_copy_task);
    ++phase3_items;
  };
  t.phase3(low.train, low.dev);
  EXPECT_EQ(phase3_items, 20);
  EXPECT_EQ(t.history().size(), 3u);
}

TEST(Trainer, PhaseThreeWithCertainGoldFeedIsTeacherForcing) {
  const auto low = testing::make_synthetic_split(5, 6, 2);
  TrainingConfig c = small_config();
  c.max_epochs = {1, 1, 2};
  c.phase3_sample_prob = 1.0;
  const Vocabulary vocab = vocab_of({low.train, low.dev});
  Trainer t(c, vocab);
  t.phase3(low.train, low.dev);

  // Independent replay: same init stream and shuffles, teacher-forced
  // batch-1 SGD.
  ModelParams p(c.model, vocab.char_count(), vocab.tag_count(), vocab.language_count());
  Rng init = make_stream(c.seed, "init");
  p.initialize(init);
  p.set_requires_grad(true);
  LossWeights w;
  w.coverage_lambda = c.coverage_lambda;
  w.discriminator = false;
  std::vector<Example> items = low.train;
  for (int epoch = 1; epoch <= 2; ++epoch) {
    Rng order = make_stream(c.seed, "phase3-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(std::span<Example>(items), order);
    for (const Example& e : items) {
      ad::Tape tape;
      tape.backward(forward_loss(bind(tape, p), vocab.encode(e), w).loss);
      sgd_step(p.named_tensors(), c.lr, c.clip_threshold);
    }
  }
  const auto expected = p.named_tensors();
  const auto actual = t.params().named_tensors();
  for (std::size_t i = 0; i < expected.size(); ++i)
    EXPECT_TRUE(expected[i].second->values() == actual[i].second->values()) << expected[i].first;
}

TEST(Trainer, LearningRateHalvesAfterPatienceRuns) {
  const auto low = testing::make_synthetic_split(6, 4, 2);
  TrainingConfig c = small_config();
  c.lr = 1e-12;  // dev accuracy stays put
  c.max_epochs = {1, 1, 14};
  Trainer t(c, vocab_of({low.train, low.dev}));
  t.phase3(low.train, low.dev);
  const auto& h = t.history();
  ASSERT_EQ(h.size(), 14u);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const bool expect_decay = i + 1 == 7 || i + 1 == 13;
    EXPECT_EQ(h[i].decayed, expect_decay) << "epoch " << i + 1;
    if (i > 0) EXPECT_EQ(h[i].lr, h[i - 1].decayed ? h[i - 1].lr * 0.5 : h[i - 1].lr);
  }
  EXPECT_EQ(t.learning_rate(), 1e-12 * 0.25);
}

TEST(Trainer, DeterministicAcrossRuns) {
  const auto split = testing::make_synthetic_split(7, 8, 2);
  TrainingConfig c = small_config();
  c.warmup_copy_threshold = 1.0;
  auto run = [&] {
    Trainer t(c, vocab_of({split.train, split.dev}));
    t.phase1(split.train);
    t.phase2({}, split.train, {}, split.dev);
    t.phase3(split.train, split.dev);
    t.finalize();
    return t.checkpoints().best_accuracy->params.named_tensors()[0].second->values();
  };
  EXPECT_TRUE(run() == run());
}

TEST(Trainer, LogLineFormat) {
  const EpochRecord r{2, 5, 0.05, 1.25, 0.5, 0.75, true};
  EXPECT_EQ(format_log_line(r), "2\t5\t0.050000\t1.250000\t0.5000\t0.7500\t1");
}

}  // namespace
}  // namespace inflect
