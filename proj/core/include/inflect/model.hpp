#pragma once

// Two-step-attention inflection transducer.
//
//   lemma chars --BiLSTM--> h^x (2H per char)     tags --self-attention--> h^t
//
// Decoder step k:
//   c^t, a^t = attend(s'[k-1], h^t)
//   s[k]     = s'[k-1] + c^t
//   c^x, a^x = attend(s[k], h^x, previous a^x)      (Markov window)
//   s'[k]    = LSTM(s[k], [c^x ; E[y[k-1]]])       (s'[k-1] when
//              tag_informed_recurrence is off)
//   P(y[k])  = softmax(W_out s'[k] + b_out)
//
// Attention scores are v . tanh(W_q q + W_h h_j + m . window(prev, j)); the
// Markov term is absent for tag attention and for the first character step.
// A language discriminator reads the final encoder state through a gradient
// reversal node.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "inflect/autodiff.hpp"
#include "inflect/corpus.hpp"
#include "inflect/random.hpp"

namespace inflect {

enum class LstmKind { coupled, standard };

struct ModelConfig {
  int char_embedding = 32;  // shared by source and target characters
  int tag_embedding = 32;
  int hidden = 100;         // recurrent state per direction and decoder state
  int attention = 100;      // score MLP width
  int tag_attention = 100;  // self-attention size = tag state size
  int discriminator_hidden = 100;
  LstmKind lstm = LstmKind::coupled;
  bool markov = true;
  // Discriminator reads [forward_N ; backward_1]; false reads forward_N only.
  bool discriminator_concat = true;
  // Decoder cell recurs from the tag-informed state s(k) instead of s'(k-1).
  bool tag_informed_recurrence = true;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct LossWeights {
  double coverage_lambda = 0.1;
  double adv_weight = 1.0;
  double reverse_lambda = 1.0;
  bool discriminator = true;
};

struct LstmParams {
  ad::Tensor weights;  // [gates*H, I + H]; gate order f, o, g (coupled) or i, f, o, g
  ad::Tensor bias;     // [gates*H, 1]
};

struct AttentionParams {
  ad::Tensor v;        // [A, 1]
  ad::Tensor query;    // [A, Q]
  ad::Tensor state;    // [A, S]
  ad::Tensor markov;   // [3, 1]; unused by tag attention
};

// Every learned tensor. named_tensors() fixes the serialization order.
struct ModelParams {
  ModelConfig config;
  int chars = 0;
  int tags = 0;
  int languages = 0;

  ad::Tensor char_embed;  // [chars, E]
  ad::Tensor tag_embed;   // [tags, E_t]
  LstmParams enc_forward;
  LstmParams enc_backward;
  ad::Tensor tag_query;   // [T, E_t]
  ad::Tensor tag_key;     // [T, E_t]
  ad::Tensor tag_value;   // [T, E_t]
  AttentionParams tag_attn;   // query H, state T
  AttentionParams char_attn;  // query H, state 2H
  LstmParams decoder;         // input 2H + E
  ad::Tensor decoder_init;    // [H, 1], s'[0]
  ad::Tensor out_weights;     // [chars, H]
  ad::Tensor out_bias;        // [chars, 1]
  ad::Tensor disc_hidden_w;   // [D, 2H or H]
  ad::Tensor disc_hidden_b;   // [D, 1]
  ad::Tensor disc_out_w;      // [L, D]
  ad::Tensor disc_out_b;      // [L, 1]

  ModelParams() = default;
  // Zero-valued parameters with the right shapes. languages may be 0 or 1,
  // in which case the discriminator exists but is never trained.
  ModelParams(const ModelConfig& config, int chars, int tags, int languages);

  // Glorot-uniform matrices, zero biases.
  void initialize(Rng& rng);
  void set_requires_grad(bool on);
  void zero_grad();

  std::vector<std::pair<std::string, ad::Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const ad::Tensor*>> named_tensors() const;
  std::size_t parameter_count() const;
};

// Parameters bound to one tape.
struct BoundLstm {
  ad::Expr weights;
  ad::Expr bias;
  LstmKind kind = LstmKind::coupled;
  int hidden = 0;
};

struct BoundAttention {
  ad::Expr v;
  ad::Expr query;
  ad::Expr state;
  ad::Expr markov;
  bool use_markov = false;
};

struct BoundModel {
  const ModelParams* params = nullptr;
  ad::Expr char_embed, tag_embed;
  BoundLstm enc_forward, enc_backward, decoder;
  ad::Expr tag_query, tag_key, tag_value;
  BoundAttention tag_attn, char_attn;
  ad::Expr decoder_init, out_weights, out_bias;
  ad::Expr disc_hidden_w, disc_hidden_b, disc_out_w, disc_out_b;
};

// Binds with gradient accumulation into `p`.
BoundModel bind(ad::Tape& tape, ModelParams& p);
// Read-only binding for inference.
BoundModel bind(ad::Tape& tape, const ModelParams& p);

struct LemmaEncoding {
  ad::Expr states;  // [2H, N], column n = [forward_n ; backward_n]
  ad::Expr final;   // discriminator input
};

struct TagEncoding {
  ad::Expr states;   // [T, M]
  ad::Expr weights;  // [M, M], column m = attention of tag m over all tags
};

// Precomputed keys for one attention target.
struct AttentionMemory {
  ad::Expr states;     // [D, J]
  ad::Expr projected;  // [A, J] = W_state * states
};

struct Attended {
  ad::Expr context;  // [D, 1]
  ad::Expr weights;  // [J, 1]
};

struct DecoderState {
  ad::Expr s_prime;  // [H, 1]
  ad::Expr cell;     // [H, 1]
  ad::Expr alpha_t;  // previous weights, invalid before the first step
  ad::Expr alpha_x;
  int y_prev = Vocabulary::kBos;
};

struct StepOutput {
  ad::Expr probs;  // [chars, 1]
  DecoderState next;
};

// VocabularyError on out-of-range IDs; UsageError on empty input.
LemmaEncoding encode_lemma(const BoundModel& m, std::span<const int> chars);
TagEncoding encode_tags(const BoundModel& m, std::span<const int> tags);
AttentionMemory make_memory(const BoundAttention& p, ad::Expr states);
// DimensionError when prev_weights has the wrong length.
Attended attend(ad::Expr query, const AttentionMemory& memory, const BoundAttention& p,
                std::optional<ad::Expr> prev_weights = std::nullopt);
DecoderState initial_state(const BoundModel& m);
StepOutput decoder_step(const BoundModel& m, const DecoderState& st, const AttentionMemory& tag_memory,
                        const AttentionMemory& char_memory);

// lambda * || row sums of `weights` - 1 ||_2 for a [J, K] matrix whose K
// columns are attention distributions.
ad::Expr coverage_penalty(ad::Expr weights, double lambda);
// Same quantity for a plain K x J matrix whose rows are distributions.
double coverage_penalty(const ad::Matrix& k_by_j, double lambda);

struct Discriminated {
  ad::Expr loss;   // -log y_l[true_lang], zero when disabled
  ad::Expr probs;  // invalid when disabled
  bool active = false;
};

// Disabled (zero loss) with fewer than two languages or an unknown language.
Discriminated discriminate_language(const BoundModel& m, ad::Expr encoder_final, int true_language,
                                    double reverse_lambda);

struct LossResult {
  ad::Expr loss;
  ad::Expr nll;
  ad::Matrix alpha_t;  // K x M
  ad::Matrix alpha_x;  // K x N
  bool discriminator_active = false;
};

// Sum of per-step negative log-likelihoods (EOS included), both coverage
// penalties and the weighted discriminator loss. With probability
// 1 - teacher_forcing the decoder is fed its own previous argmax instead of
// the gold character; `rng` may be null when teacher_forcing >= 1.
LossResult forward_loss(const BoundModel& m, const EncodedExample& e, const LossWeights& weights,
                        double teacher_forcing = 1.0, Rng* rng = nullptr);

struct Decoded {
  std::vector<int> ids;  // without EOS
  ad::Matrix alpha_t;    // K x M, first member
  ad::Matrix alpha_x;    // K x N, first member
};

inline std::size_t default_max_length(std::size_t lemma_length) { return 2 * lemma_length + 10; }

// Greedy decoding from the mean of the members' output distributions.
// UsageError when `models` is empty or members disagree on vocabulary sizes.
Decoded decode(std::span<const ModelParams* const> models, const EncodedExample& e, std::size_t max_len);
Decoded decode(const ModelParams& model, const EncodedExample& e, std::size_t max_len);

// Maps decoded IDs back to text. A predicted UNK copies the lemma character
// with the highest character attention at that step.
Chars render(const Vocabulary& vocab, const Decoded& d, std::u32string_view lemma);

}  // namespace inflect
