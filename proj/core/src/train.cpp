#include "inflect/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "inflect/error.hpp"
#include "inflect/eval.hpp"

namespace inflect {

CheckpointUpdate update_checkpoints(CheckpointSet& cs, const ModelParams& p, double accuracy, double distance,
                                    int evaluation) {
  auto snapshot = [&] {
    Snapshot s{p, accuracy, distance, evaluation};
    s.params.set_requires_grad(false);
    return s;
  };
  CheckpointUpdate u;
  if (!cs.best_accuracy || accuracy > cs.best_accuracy->accuracy) {
    cs.best_accuracy = snapshot();
    u.accuracy = true;
  }
  if (!cs.best_levenshtein || distance < cs.best_levenshtein->distance) {
    cs.best_levenshtein = snapshot();
    u.levenshtein = true;
  }
  if (!cs.both_improved || (accuracy > cs.both_improved->accuracy && distance < cs.both_improved->distance)) {
    cs.both_improved = snapshot();
    u.both = true;
  }
  return u;
}

double sgd_step(std::span<const std::pair<std::string, ad::Tensor*>> params, double lr, double clip_threshold) {
  double squared = 0.0;
  for (const auto& [name, t] : params) {
    if (!t->requires_grad()) continue;
    if (!t->grad().allFinite()) throw NumericError("non-finite gradient in parameter group '" + name + "'");
    squared += t->grad().squaredNorm();
  }
  const double norm = std::sqrt(squared);
  const double factor = clip_threshold > 0.0 && norm > clip_threshold ? clip_threshold / norm : 1.0;
  for (const auto& [name, t] : params) {
    if (!t->requires_grad()) continue;
    t->values().noalias() -= (lr * factor) * t->grad();
    t->zero_grad();
  }
  return norm;
}

std::string format_log_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%d\t%.6f\t%.6f\t%.4f\t%.4f\t%d", r.phase, r.epoch, r.lr, r.train_loss,
                r.dev_accuracy, r.dev_distance, r.decayed ? 1 : 0);
  return buf;
}

std::vector<Chars> predict_forms(std::span<const ModelParams* const> models, const Vocabulary& vocab,
                                 std::span<const Example> data) {
  std::vector<Chars> out;
  out.reserve(data.size());
  for (const Example& e : data) {
    const Decoded d = decode(models, vocab.encode(e), default_max_length(e.lemma.size()));
    out.push_back(render(vocab, d, e.lemma));
  }
  return out;
}

DevScores score(std::span<const ModelParams* const> models, const Vocabulary& vocab, std::span<const Example> data) {
  std::vector<Chars> gold;
  gold.reserve(data.size());
  for (const Example& e : data) {
    if (!e.form) throw UsageError("score: example without a gold form");
    gold.push_back(*e.form);
  }
  const std::vector<Chars> predicted = predict_forms(models, vocab, data);
  return {exact_match_accuracy(predicted, gold), mean_levenshtein(predicted, gold)};
}

double copy_attention_offset(const ModelParams& p, const Vocabulary& vocab, std::span<const Example> copies) {
  LossWeights w;
  w.coverage_lambda = 0.0;
  w.discriminator = false;
  double total = 0.0;
  std::size_t steps = 0;
  for (const Example& e : copies) {
    ad::Tape tape;
    const BoundModel m = bind(tape, p);
    const LossResult r = forward_loss(m, vocab.encode(e), w);
    const ad::Index n = r.alpha_x.cols();
    for (ad::Index k = 0; k < std::min(r.alpha_x.rows(), n); ++k) {
      ad::Index best = 0;
      r.alpha_x.row(k).maxCoeff(&best);
      total += static_cast<double>(std::abs(best - k));
      ++steps;
    }
  }
  if (steps == 0) throw UsageError("copy_attention_offset: no decoder steps");
  return total / static_cast<double>(steps);
}

std::vector<Example> copy_tasks(std::span<const Example> data) {
  std::vector<Example> out;
  out.reserve(2 * data.size());
  for (const Example& e : data) {
    auto [lemma_copy, form_copy] = make_copy_triples(e);
    out.push_back(std::move(lemma_copy));
    out.push_back(std::move(form_copy));
  }
  return out;
}

Trainer::Trainer(const TrainingConfig& cfg, Vocabulary vocab)
    : cfg_(cfg), vocab_(std::move(vocab)), lr_(cfg.lr) {
  cfg_.validate();
  params_ = ModelParams(cfg_.model, vocab_.char_count(), vocab_.tag_count(), vocab_.language_count());
  Rng init = make_stream(cfg_.seed, "init");
  params_.initialize(init);
  params_.set_requires_grad(true);
}

LossWeights Trainer::weights(bool discriminator) const {
  LossWeights w;
  w.coverage_lambda = cfg_.coverage_lambda;
  w.adv_weight = cfg_.adv_weight;
  w.reverse_lambda = cfg_.reverse_lambda;
  w.discriminator = discriminator;
  return w;
}

double Trainer::train_epoch(int phase, std::span<const Example> items, int batch_size, const LossWeights& weights,
                            double teacher_forcing, Rng* sampling) {
  double total = 0.0;
  const auto named = params_.named_tensors();
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
    ad::Tape tape;
    const BoundModel m = bind(tape, params_);
    std::vector<ad::Expr> losses;
    losses.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      if (on_item) on_item(phase, items[i]);
      losses.push_back(forward_loss(m, vocab_.encode(items[i]), weights, teacher_forcing, sampling).loss);
    }
    const ad::Expr loss = losses.size() == 1 ? losses[0] : ad::sum(ad::concat(losses, 0));
    if (!std::isfinite(loss.scalar())) throw NumericError("non-finite training loss in phase " + std::to_string(phase));
    total += loss.scalar();
    tape.backward(loss);
    sgd_step(named, lr_, cfg_.clip_threshold);
  }
  return items.empty() ? 0.0 : total / static_cast<double>(items.size());
}

void Trainer::record(const EpochRecord& r) {
  history_.push_back(r);
  if (on_epoch) on_epoch(r);
}

void Trainer::evaluate_and_schedule(EpochRecord& rec, std::span<const Example> dev) {
  const ModelParams* one[] = {&params_};
  const DevScores s = score(one, vocab_, dev);
  rec.dev_accuracy = s.accuracy;
  rec.dev_distance = s.distance;
  update_checkpoints(checkpoints_, params_, s.accuracy, s.distance, evaluations_++);
  if (s.accuracy > best_dev_accuracy_) {
    best_dev_accuracy_ = s.accuracy;
    non_improving_ = 0;
  } else if (++non_improving_ % cfg_.decay_patience == 0) {
    lr_ *= cfg_.lr_decay;
    rec.decayed = true;
  }
}

int Trainer::phase1(std::span<const Example> train) {
  if (train.empty()) throw UsageError("phase1: empty training data");
  std::vector<Example> items;
  items.reserve(3 * train.size());
  for (const Example& e : train) {
    auto [lemma_copy, form_copy] = make_copy_triples(e);
    items.push_back(e);
    items.push_back(std::move(lemma_copy));
    items.push_back(std::move(form_copy));
  }
  copy_eval_ = copy_tasks(train);
  Rng pick = make_stream(cfg_.seed, "copy-eval");
  shuffle(std::span<Example>(copy_eval_), pick);
  if (copy_eval_.size() > cfg_.copy_eval_size) copy_eval_.resize(cfg_.copy_eval_size);

  const ModelParams* one[] = {&params_};
  for (int epoch = 1; epoch <= cfg_.max_epochs[0]; ++epoch) {
    Rng order = make_stream(cfg_.seed, "phase1-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(std::span<Example>(items), order);
    EpochRecord rec{1, epoch, lr_, 0.0, 0.0, 0.0, false};
    rec.train_loss = train_epoch(1, items, cfg_.batch_sizes[0], weights(false), 1.0, nullptr);
    const DevScores s = score(one, vocab_, copy_eval_);
    rec.dev_accuracy = s.accuracy;
    rec.dev_distance = s.distance;
    last_copy_accuracy_ = s.accuracy;
    record(rec);
    if (s.accuracy > cfg_.warmup_copy_threshold) return epoch;
  }
  return cfg_.max_epochs[0];
}

void Trainer::phase2(std::span<const Example> high, std::span<const Example> low,
                     std::span<const Example> hallucinated, std::span<const Example> dev) {
  if (low.empty()) throw UsageError("phase2: empty low-resource data");
  if (dev.empty()) throw UsageError("phase2: empty dev set");
  std::vector<Example> pool(high.begin(), high.end());
  if (hallucinated.empty() && high.size() > low.size()) {
    Rng up = make_stream(cfg_.seed, "phase2-upsample");
    const std::vector<Example> replicated = upsample(low, high.size(), up);
    pool.insert(pool.end(), replicated.begin(), replicated.end());
  } else {
    pool.insert(pool.end(), low.begin(), low.end());
  }
  pool.insert(pool.end(), hallucinated.begin(), hallucinated.end());

  const bool discriminator = cfg_.discriminator && params_.languages >= 2;
  std::vector<Example> stream;
  for (int epoch = 1; epoch <= cfg_.max_epochs[1]; ++epoch) {
    Rng order = make_stream(cfg_.seed, "phase2-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(std::span<Example>(pool), order);
    Rng copies = make_stream(cfg_.seed, "phase2-copy", static_cast<std::uint64_t>(epoch));
    stream.clear();
    for (const Example& e : pool) {
      if (bernoulli(copies, cfg_.phase2_copy_prob)) {
        auto [lemma_copy, form_copy] = make_copy_triples(pool[uniform_index(copies, pool.size())]);
        stream.push_back(uniform_index(copies, 2) == 0 ? std::move(lemma_copy) : std::move(form_copy));
      }
      stream.push_back(e);
    }
    EpochRecord rec{2, epoch, lr_, 0.0, 0.0, 0.0, false};
    rec.train_loss = train_epoch(2, stream, cfg_.batch_sizes[1], weights(discriminator), 1.0, nullptr);
    evaluate_and_schedule(rec, dev);
    record(rec);
  }
}

void Trainer::phase3(std::span<const Example> low, std::span<const Example> dev) {
  if (low.empty()) throw UsageError("phase3: empty low-resource data");
  if (dev.empty()) throw UsageError("phase3: empty dev set");
  std::vector<Example> items(low.begin(), low.end());
  for (int epoch = 1; epoch <= cfg_.max_epochs[2]; ++epoch) {
    Rng order = make_stream(cfg_.seed, "phase3-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle(std::span<Example>(items), order);
    Rng sampling = make_stream(cfg_.seed, "phase3-sampling", static_cast<std::uint64_t>(epoch));
    EpochRecord rec{3, epoch, lr_, 0.0, 0.0, 0.0, false};
    rec.train_loss = train_epoch(3, items, cfg_.batch_sizes[2], weights(false), cfg_.phase3_sample_prob, &sampling);
    evaluate_and_schedule(rec, dev);
    record(rec);
  }
}

void Trainer::finalize() {
  if (checkpoints_.empty()) update_checkpoints(checkpoints_, params_, 0.0, 0.0, -1);
}

}  // namespace inflect
