#include "inflect/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "inflect/error.hpp"

namespace inflect {

using ad::Expr;
using ad::Matrix;
using ad::Tape;
using ad::Tensor;

nlohmann::json ModelConfig::to_json() const {
  return {
      {"char_embedding", char_embedding},
      {"tag_embedding", tag_embedding},
      {"hidden", hidden},
      {"attention", attention},
      {"tag_attention", tag_attention},
      {"discriminator_hidden", discriminator_hidden},
      {"lstm", lstm == LstmKind::coupled ? "coupled" : "standard"},
      {"markov", markov},
      {"discriminator_concat", discriminator_concat},
      {"tag_informed_recurrence", tag_informed_recurrence},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.char_embedding = j.at("char_embedding").get<int>();
    c.tag_embedding = j.at("tag_embedding").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.attention = j.at("attention").get<int>();
    c.tag_attention = j.at("tag_attention").get<int>();
    c.discriminator_hidden = j.at("discriminator_hidden").get<int>();
    const std::string lstm = j.at("lstm").get<std::string>();
    if (lstm == "coupled") {
      c.lstm = LstmKind::coupled;
    } else if (lstm == "standard") {
      c.lstm = LstmKind::standard;
    } else {
      throw DataError("model config: unknown lstm kind '" + lstm + "'");
    }
    c.markov = j.at("markov").get<bool>();
    c.discriminator_concat = j.at("discriminator_concat").get<bool>();
    c.tag_informed_recurrence = j.at("tag_informed_recurrence").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  return c;
}

namespace {

int gate_count(LstmKind kind) { return kind == LstmKind::coupled ? 3 : 4; }

LstmParams make_lstm(LstmKind kind, int input, int hidden) {
  return {Tensor(gate_count(kind) * hidden, input + hidden), Tensor(gate_count(kind) * hidden, 1)};
}

AttentionParams make_attention(int width, int query, int state, bool markov) {
  return {Tensor(width, 1), Tensor(width, query), Tensor(width, state), markov ? Tensor(3, 1) : Tensor()};
}

void check_config(const ModelConfig& c) {
  for (int d : {c.char_embedding, c.tag_embedding, c.hidden, c.attention, c.tag_attention, c.discriminator_hidden})
    if (d <= 0) throw UsageError("model config: every dimension must be positive");
  // s(k) = s'(k-1) + c^t(k) adds a tag state to a decoder state.
  if (c.tag_attention != c.hidden)
    throw UsageError("model config: tag_attention (" + std::to_string(c.tag_attention) + ") must equal hidden (" +
                     std::to_string(c.hidden) + ")");
}

void glorot(Tensor& t, Rng& rng) {
  Matrix& v = t.values();
  if (v.size() == 0) return;
  const double limit = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
  for (ad::Index c = 0; c < v.cols(); ++c)
    for (ad::Index r = 0; r < v.rows(); ++r) v(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
}

}  // namespace

ModelParams::ModelParams(const ModelConfig& cfg, int n_chars, int n_tags, int n_languages)
    : config(cfg), chars(n_chars), tags(n_tags), languages(n_languages) {
  check_config(cfg);
  if (n_chars <= Vocabulary::kReservedChars || n_tags < Vocabulary::kReservedTags || n_languages < 0)
    throw UsageError("ModelParams: vocabulary sizes out of range");
  const int H = cfg.hidden;
  const int T = cfg.tag_attention;
  const int A = cfg.attention;
  char_embed = Tensor(n_chars, cfg.char_embedding);
  tag_embed = Tensor(n_tags, cfg.tag_embedding);
  enc_forward = make_lstm(cfg.lstm, cfg.char_embedding, H);
  enc_backward = make_lstm(cfg.lstm, cfg.char_embedding, H);
  tag_query = Tensor(T, cfg.tag_embedding);
  tag_key = Tensor(T, cfg.tag_embedding);
  tag_value = Tensor(T, cfg.tag_embedding);
  tag_attn = make_attention(A, H, T, false);
  char_attn = make_attention(A, H, 2 * H, cfg.markov);
  decoder = make_lstm(cfg.lstm, 2 * H + cfg.char_embedding, H);
  decoder_init = Tensor(H, 1);
  out_weights = Tensor(n_chars, H);
  out_bias = Tensor(n_chars, 1);
  disc_hidden_w = Tensor(cfg.discriminator_hidden, cfg.discriminator_concat ? 2 * H : H);
  disc_hidden_b = Tensor(cfg.discriminator_hidden, 1);
  disc_out_w = Tensor(n_languages, cfg.discriminator_hidden);
  disc_out_b = Tensor(n_languages, 1);
}

void ModelParams::initialize(Rng& rng) {
  for (auto& [name, t] : named_tensors()) {
    const bool is_bias = t->shape().cols == 1 && name.ends_with("bias");
    if (is_bias || name == "decoder_init") {
      t->values().setZero();
    } else {
      glorot(*t, rng);
    }
  }
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& [name, t] : named_tensors()) t->set_requires_grad(on);
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named_tensors()) t->zero_grad();
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"char_embed", &char_embed},
      {"tag_embed", &tag_embed},
      {"enc_forward.weights", &enc_forward.weights},
      {"enc_forward.bias", &enc_forward.bias},
      {"enc_backward.weights", &enc_backward.weights},
      {"enc_backward.bias", &enc_backward.bias},
      {"tag_query", &tag_query},
      {"tag_key", &tag_key},
      {"tag_value", &tag_value},
      {"tag_attn.v", &tag_attn.v},
      {"tag_attn.query", &tag_attn.query},
      {"tag_attn.state", &tag_attn.state},
      {"char_attn.v", &char_attn.v},
      {"char_attn.query", &char_attn.query},
      {"char_attn.state", &char_attn.state},
  };
  if (config.markov) out.emplace_back("char_attn.markov", &char_attn.markov);
  const std::pair<std::string, Tensor*> rest[] = {
      {"decoder.weights", &decoder.weights},
      {"decoder.bias", &decoder.bias},
      {"decoder_init", &decoder_init},
      {"out_weights", &out_weights},
      {"out_bias", &out_bias},
      {"disc_hidden.weights", &disc_hidden_w},
      {"disc_hidden.bias", &disc_hidden_b},
      {"disc_out.weights", &disc_out_w},
      {"disc_out.bias", &disc_out_b},
  };
  out.insert(out.end(), std::begin(rest), std::end(rest));
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<ModelParams*>(this)->named_tensors()) out.emplace_back(name, t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += static_cast<std::size_t>(t->shape().size());
  return n;
}

namespace {

template <class P>
BoundModel bind_impl(Tape& tape, P& p) {
  BoundModel m;
  m.params = &p;
  auto lstm = [&](auto& l) { return BoundLstm{tape.param(l.weights), tape.param(l.bias), p.config.lstm, p.config.hidden}; };
  auto attention = [&](auto& a, bool markov) {
    BoundAttention b{tape.param(a.v), tape.param(a.query), tape.param(a.state), {}, markov};
    if (markov) b.markov = tape.param(a.markov);
    return b;
  };
  m.char_embed = tape.param(p.char_embed);
  m.tag_embed = tape.param(p.tag_embed);
  m.enc_forward = lstm(p.enc_forward);
  m.enc_backward = lstm(p.enc_backward);
  m.decoder = lstm(p.decoder);
  m.tag_query = tape.param(p.tag_query);
  m.tag_key = tape.param(p.tag_key);
  m.tag_value = tape.param(p.tag_value);
  m.tag_attn = attention(p.tag_attn, false);
  m.char_attn = attention(p.char_attn, p.config.markov);
  m.decoder_init = tape.param(p.decoder_init);
  m.out_weights = tape.param(p.out_weights);
  m.out_bias = tape.param(p.out_bias);
  m.disc_hidden_w = tape.param(p.disc_hidden_w);
  m.disc_hidden_b = tape.param(p.disc_hidden_b);
  m.disc_out_w = tape.param(p.disc_out_w);
  m.disc_out_b = tape.param(p.disc_out_b);
  return m;
}

struct LstmOut {
  Expr h;
  Expr c;
};

LstmOut lstm_step(const BoundLstm& l, Expr x, Expr h, Expr c) {
  const Expr xh[] = {x, h};
  const Expr z = ad::add(ad::matmul(l.weights, ad::concat(xh, 0)), l.bias);
  const ad::Index H = l.hidden;
  Expr i, f, o, g;
  if (l.kind == LstmKind::coupled) {
    f = ad::sigmoid(ad::slice_rows(z, 0, H));
    o = ad::sigmoid(ad::slice_rows(z, H, H));
    g = ad::tanh(ad::slice_rows(z, 2 * H, H));
    i = ad::scale(f, -1.0, 1.0);
  } else {
    i = ad::sigmoid(ad::slice_rows(z, 0, H));
    f = ad::sigmoid(ad::slice_rows(z, H, H));
    o = ad::sigmoid(ad::slice_rows(z, 2 * H, H));
    g = ad::tanh(ad::slice_rows(z, 3 * H, H));
  }
  const Expr c_next = ad::add(ad::elementwise_mul(f, c), ad::elementwise_mul(i, g));
  return {ad::elementwise_mul(o, ad::tanh(c_next)), c_next};
}

Expr embed(Expr table, int id, int size, const char* what) {
  if (id < 0 || id >= size)
    throw VocabularyError(std::string(what) + " id " + std::to_string(id) + " outside [0, " + std::to_string(size) +
                          ")");
  return ad::pick_row(table, id);
}

Expr zeros(Tape& tape, int rows) { return tape.constant(Matrix::Zero(rows, 1)); }

}  // namespace

BoundModel bind(Tape& tape, ModelParams& p) { return bind_impl(tape, p); }
BoundModel bind(Tape& tape, const ModelParams& p) { return bind_impl(tape, p); }

LemmaEncoding encode_lemma(const BoundModel& m, std::span<const int> chars) {
  if (chars.empty()) throw UsageError("encode_lemma: empty lemma");
  Tape& tape = *m.char_embed.tape();
  const int H = m.params->config.hidden;
  const std::size_t N = chars.size();
  std::vector<Expr> x(N);
  for (std::size_t n = 0; n < N; ++n) x[n] = embed(m.char_embed, chars[n], m.params->chars, "character");

  std::vector<Expr> fwd(N), bwd(N);
  LstmOut s{zeros(tape, H), zeros(tape, H)};
  for (std::size_t n = 0; n < N; ++n) fwd[n] = (s = lstm_step(m.enc_forward, x[n], s.h, s.c)).h;
  s = {zeros(tape, H), zeros(tape, H)};
  for (std::size_t n = N; n-- > 0;) bwd[n] = (s = lstm_step(m.enc_backward, x[n], s.h, s.c)).h;

  std::vector<Expr> columns(N);
  for (std::size_t n = 0; n < N; ++n) {
    const Expr pair[] = {fwd[n], bwd[n]};
    columns[n] = ad::concat(pair, 0);
  }
  LemmaEncoding out;
  out.states = N == 1 ? columns[0] : ad::concat(columns, 1);
  if (m.params->config.discriminator_concat) {
    const Expr ends[] = {fwd[N - 1], bwd[0]};
    out.final = ad::concat(ends, 0);
  } else {
    out.final = fwd[N - 1];
  }
  return out;
}

TagEncoding encode_tags(const BoundModel& m, std::span<const int> tags) {
  if (tags.empty()) throw UsageError("encode_tags: empty tag list");
  std::vector<Expr> columns(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) columns[i] = embed(m.tag_embed, tags[i], m.params->tags, "tag");
  const Expr x = columns.size() == 1 ? columns[0] : ad::concat(columns, 1);
  const Expr q = ad::matmul(m.tag_query, x);
  const Expr k = ad::matmul(m.tag_key, x);
  const Expr v = ad::matmul(m.tag_value, x);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(m.params->config.tag_attention));
  // scores(i, m) = k_i . q_m / sqrt(T); column m is normalized.
  const Expr weights = ad::softmax(ad::scale(ad::matmul(k, q, true), inv_sqrt));
  return {ad::matmul(v, weights), weights};
}

AttentionMemory make_memory(const BoundAttention& p, Expr states) { return {states, ad::matmul(p.state, states)}; }

Attended attend(Expr query, const AttentionMemory& memory, const BoundAttention& p, std::optional<Expr> prev_weights) {
  const ad::Index J = memory.states.shape().cols;
  if (J == 0) throw UsageError("attend: no states");
  Expr pre = ad::add(memory.projected, ad::matmul(p.query, query));
  if (prev_weights) {
    if (prev_weights->shape() != ad::Shape{J, 1})
      throw DimensionError("attend: previous weights " + prev_weights->shape().str() + " for " + std::to_string(J) +
                           " states");
    if (p.use_markov) pre = ad::add(pre, ad::matmul(p.markov, ad::markov_window(*prev_weights), true));
  }
  const Expr weights = ad::softmax(ad::matmul(ad::tanh(pre), p.v, true));
  return {ad::matmul(memory.states, weights), weights};
}

DecoderState initial_state(const BoundModel& m) {
  DecoderState st;
  st.s_prime = m.decoder_init;
  st.cell = zeros(*m.decoder_init.tape(), m.params->config.hidden);
  return st;
}

StepOutput decoder_step(const BoundModel& m, const DecoderState& st, const AttentionMemory& tag_memory,
                        const AttentionMemory& char_memory) {
  const Attended tag = attend(st.s_prime, tag_memory, m.tag_attn);
  const Expr s = ad::add(st.s_prime, tag.context);
  const Attended chr =
      attend(s, char_memory, m.char_attn, st.alpha_x.valid() ? std::optional<Expr>(st.alpha_x) : std::nullopt);
  const Expr input[] = {chr.context, embed(m.char_embed, st.y_prev, m.params->chars, "character")};
  const Expr recurrent = m.params->config.tag_informed_recurrence ? s : st.s_prime;
  const LstmOut cell = lstm_step(m.decoder, ad::concat(input, 0), recurrent, st.cell);
  StepOutput out;
  out.probs = ad::softmax(ad::add(ad::matmul(m.out_weights, cell.h), m.out_bias));
  out.next = {cell.h, cell.c, tag.weights, chr.weights, st.y_prev};
  return out;
}

Expr coverage_penalty(Expr weights, double lambda) {
  return ad::scale(ad::l2_norm(ad::scale(ad::sum(weights, 1), 1.0, -1.0)), lambda);
}

double coverage_penalty(const Matrix& k_by_j, double lambda) {
  return lambda * (k_by_j.colwise().sum().array() - 1.0).matrix().norm();
}

Discriminated discriminate_language(const BoundModel& m, Expr encoder_final, int true_language,
                                    double reverse_lambda) {
  Discriminated out;
  const int L = m.params->languages;
  if (L < 2 || true_language < 0 || true_language >= L) {
    out.loss = encoder_final.tape()->constant(Matrix::Zero(1, 1));
    return out;
  }
  const Expr in = ad::grad_reverse(encoder_final, reverse_lambda);
  const Expr hidden = ad::tanh(ad::add(ad::matmul(m.disc_hidden_w, in), m.disc_hidden_b));
  out.probs = ad::softmax(ad::add(ad::matmul(m.disc_out_w, hidden), m.disc_out_b));
  out.loss = ad::logloss(out.probs, true_language);
  out.active = true;
  return out;
}

namespace {

int argmax(const Matrix& column) {
  ad::Index best = 0;
  column.col(0).maxCoeff(&best);
  return static_cast<int>(best);
}

Matrix stack_rows(const std::vector<Expr>& columns) {
  if (columns.empty()) return {};
  Matrix out(static_cast<ad::Index>(columns.size()), columns[0].shape().rows);
  for (std::size_t k = 0; k < columns.size(); ++k) out.row(static_cast<ad::Index>(k)) = columns[k].value().transpose();
  return out;
}

}  // namespace

LossResult forward_loss(const BoundModel& m, const EncodedExample& e, const LossWeights& weights,
                        double teacher_forcing, Rng* rng) {
  if (e.form.empty()) throw UsageError("forward_loss: example has no form");
  if (teacher_forcing < 1.0 && rng == nullptr) throw UsageError("forward_loss: sampling requires an rng");
  const LemmaEncoding lemma = encode_lemma(m, e.lemma);
  const TagEncoding tags = encode_tags(m, e.tags);
  const AttentionMemory tag_memory = make_memory(m.tag_attn, tags.states);
  const AttentionMemory char_memory = make_memory(m.char_attn, lemma.states);

  std::vector<int> target = e.form;
  target.push_back(Vocabulary::kEos);
  for (int id : target)
    if (id < 0 || id >= m.params->chars) throw VocabularyError("character id " + std::to_string(id) + " out of range");

  std::vector<Expr> step_losses, alpha_t, alpha_x;
  DecoderState st = initial_state(m);
  for (std::size_t k = 0; k < target.size(); ++k) {
    StepOutput out = decoder_step(m, st, tag_memory, char_memory);
    step_losses.push_back(ad::logloss(out.probs, target[k]));
    alpha_t.push_back(out.next.alpha_t);
    alpha_x.push_back(out.next.alpha_x);
    st = out.next;
    const bool gold = teacher_forcing >= 1.0 || bernoulli(*rng, teacher_forcing);
    st.y_prev = gold ? target[k] : argmax(out.probs.value());
  }

  LossResult r;
  r.nll = step_losses.size() == 1 ? step_losses[0] : ad::sum(ad::concat(step_losses, 0));
  std::vector<Expr> terms = {r.nll};
  if (weights.coverage_lambda != 0.0) {
    terms.push_back(coverage_penalty(ad::concat(alpha_t, 1), weights.coverage_lambda));
    terms.push_back(coverage_penalty(ad::concat(alpha_x, 1), weights.coverage_lambda));
  }
  if (weights.discriminator && weights.adv_weight != 0.0) {
    const Discriminated d = discriminate_language(m, lemma.final, e.language, weights.reverse_lambda);
    if (d.active) {
      terms.push_back(ad::scale(d.loss, weights.adv_weight));
      r.discriminator_active = true;
    }
  }
  r.loss = terms.size() == 1 ? terms[0] : ad::sum(ad::concat(terms, 0));
  r.alpha_t = stack_rows(alpha_t);
  r.alpha_x = stack_rows(alpha_x);
  return r;
}

Decoded decode(std::span<const ModelParams* const> models, const EncodedExample& e, std::size_t max_len) {
  if (models.empty()) throw UsageError("decode: no models");
  for (const ModelParams* p : models) {
    if (p->chars != models[0]->chars || p->tags != models[0]->tags || p->languages != models[0]->languages)
      throw UsageError("decode: ensemble members have different vocabulary sizes");
  }
  struct Member {
    Tape tape;
    BoundModel m;
    AttentionMemory tag_memory, char_memory;
    DecoderState st;
  };
  std::vector<std::unique_ptr<Member>> members;
  for (const ModelParams* p : models) {
    auto mem = std::make_unique<Member>();
    mem->m = bind(mem->tape, *p);
    mem->char_memory = make_memory(mem->m.char_attn, encode_lemma(mem->m, e.lemma).states);
    mem->tag_memory = make_memory(mem->m.tag_attn, encode_tags(mem->m, e.tags).states);
    mem->st = initial_state(mem->m);
    members.push_back(std::move(mem));
  }

  Decoded out;
  std::vector<Expr> alpha_t, alpha_x;
  Matrix mean(models[0]->chars, 1);
  // One row per emitted character plus one for EOS when it is produced.
  while (out.ids.size() < max_len) {
    mean.setZero();
    for (std::size_t i = 0; i < members.size(); ++i) {
      Member& mem = *members[i];
      StepOutput step = decoder_step(mem.m, mem.st, mem.tag_memory, mem.char_memory);
      mean += step.probs.value();
      if (i == 0) {
        alpha_t.push_back(step.next.alpha_t);
        alpha_x.push_back(step.next.alpha_x);
      }
      mem.st = step.next;
    }
    mean /= static_cast<double>(members.size());
    const int id = argmax(mean);
    if (id == Vocabulary::kEos) break;
    out.ids.push_back(id);
    for (auto& mem : members) mem->st.y_prev = id;
  }
  out.alpha_t = stack_rows(alpha_t);
  out.alpha_x = stack_rows(alpha_x);
  return out;
}

Decoded decode(const ModelParams& model, const EncodedExample& e, std::size_t max_len) {
  const ModelParams* one[] = {&model};
  return decode(one, e, max_len);
}

Chars render(const Vocabulary& vocab, const Decoded& d, std::u32string_view lemma) {
  Chars out;
  for (std::size_t k = 0; k < d.ids.size(); ++k) {
    const int id = d.ids[k];
    if (id == Vocabulary::kUnk) {
      if (lemma.empty() || static_cast<ad::Index>(k) >= d.alpha_x.rows()) continue;
      ad::Index n = 0;
      d.alpha_x.row(static_cast<ad::Index>(k)).maxCoeff(&n);
      if (static_cast<std::size_t>(n) < lemma.size()) out.push_back(lemma[static_cast<std::size_t>(n)]);
    } else if (id >= Vocabulary::kReservedChars) {
      out.push_back(vocab.char_at(id));
    }
  }
  return out;
}

}  // namespace inflect
