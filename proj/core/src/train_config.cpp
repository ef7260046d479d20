#include <charconv>
#include <cmath>
#include <functional>
#include <istream>
#include <sstream>
#include <string_view>

#include "inflect/error.hpp"
#include "inflect/train.hpp"

namespace inflect {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty())
    throw UsageError("config: '" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config: '" + key + "' expects true or false, got '" + value + "'");
}

std::array<int, 3> parse_triple(const std::string& key, const std::string& value) {
  std::array<int, 3> out{};
  std::stringstream ss(value);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) break;
    out[i++] = parse_number<int>(key, trim(part));
  }
  if (i != 3 || std::getline(ss, part, ','))
    throw UsageError("config: '" + key + "' expects three comma-separated integers, got '" + value + "'");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_triple(const std::array<int, 3>& t) {
  return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

struct Field {
  const char* key;
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

#define INFLECT_DOUBLE(name, member)                                                                   \
  Field {                                                                                              \
    name, [](TrainingConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); }, \
        [](const TrainingConfig& c) { return format_double(c.member); }                               \
  }
#define INFLECT_INT(name, member, type)                                                              \
  Field {                                                                                            \
    name, [](TrainingConfig& c, const std::string& v) { c.member = parse_number<type>(name, v); }, \
        [](const TrainingConfig& c) { return std::to_string(c.member); }                            \
  }
#define INFLECT_BOOL(name, member)                                                          \
  Field {                                                                                   \
    name, [](TrainingConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const TrainingConfig& c) { return std::string(c.member ? "true" : "false"); }   \
  }
#define INFLECT_TRIPLE(name, member)                                                         \
  Field {                                                                                    \
    name, [](TrainingConfig& c, const std::string& v) { c.member = parse_triple(name, v); }, \
        [](const TrainingConfig& c) { return format_triple(c.member); }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      INFLECT_DOUBLE("lr", lr),
      INFLECT_DOUBLE("lr_decay", lr_decay),
      INFLECT_INT("decay_patience", decay_patience, int),
      INFLECT_TRIPLE("max_epochs", max_epochs),
      INFLECT_TRIPLE("batch_sizes", batch_sizes),
      INFLECT_DOUBLE("warmup_copy_threshold", warmup_copy_threshold),
      INFLECT_DOUBLE("phase2_copy_prob", phase2_copy_prob),
      INFLECT_DOUBLE("phase3_sample_prob", phase3_sample_prob),
      INFLECT_DOUBLE("coverage_lambda", coverage_lambda),
      INFLECT_DOUBLE("adv_weight", adv_weight),
      INFLECT_DOUBLE("reverse_lambda", reverse_lambda),
      INFLECT_BOOL("discriminator", discriminator),
      INFLECT_DOUBLE("clip_threshold", clip_threshold),
      INFLECT_INT("copy_eval_size", copy_eval_size, std::size_t),
      INFLECT_INT("seed", seed, std::uint64_t),
      INFLECT_INT("hallucinate", hallucinate, std::size_t),
      INFLECT_INT("min_stem", min_stem, int),
      INFLECT_INT("workers", workers, unsigned),
      INFLECT_INT("char_embedding", model.char_embedding, int),
      INFLECT_INT("tag_embedding", model.tag_embedding, int),
      INFLECT_INT("hidden", model.hidden, int),
      INFLECT_INT("attention", model.attention, int),
      INFLECT_INT("tag_attention", model.tag_attention, int),
      INFLECT_INT("discriminator_hidden", model.discriminator_hidden, int),
      Field{"lstm",
            [](TrainingConfig& c, const std::string& v) {
              if (v == "coupled") {
                c.model.lstm = LstmKind::coupled;
              } else if (v == "standard") {
                c.model.lstm = LstmKind::standard;
              } else {
                throw UsageError("config: 'lstm' expects coupled or standard, got '" + v + "'");
              }
            },
            [](const TrainingConfig& c) {
              return std::string(c.model.lstm == LstmKind::coupled ? "coupled" : "standard");
            }},
      INFLECT_BOOL("markov", model.markov),
      INFLECT_BOOL("discriminator_concat", model.discriminator_concat),
      INFLECT_BOOL("tag_informed_recurrence", model.tag_informed_recurrence),
  };
  return table;
}

#undef INFLECT_DOUBLE
#undef INFLECT_INT
#undef INFLECT_BOOL
#undef INFLECT_TRIPLE

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError("config: " + message);
}

}  // namespace

void TrainingConfig::validate() const {
  auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(lr >= 0.0 && std::isfinite(lr), "lr must be a non-negative number");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  require(decay_patience >= 1, "decay_patience must be at least 1");
  for (int e : max_epochs) require(e >= 0, "max_epochs must be non-negative");
  for (int b : batch_sizes) require(b >= 1, "batch_sizes must be at least 1");
  require(probability(warmup_copy_threshold), "warmup_copy_threshold must lie in [0, 1]");
  require(probability(phase2_copy_prob), "phase2_copy_prob must lie in [0, 1]");
  require(probability(phase3_sample_prob), "phase3_sample_prob must lie in [0, 1]");
  require(coverage_lambda >= 0.0, "coverage_lambda must be non-negative");
  require(adv_weight >= 0.0, "adv_weight must be non-negative");
  require(reverse_lambda >= 0.0, "reverse_lambda must be non-negative");
  require(clip_threshold >= 0.0, "clip_threshold must be non-negative");
  require(copy_eval_size >= 1, "copy_eval_size must be at least 1");
  require(min_stem >= 1, "min_stem must be at least 1");
  require(workers >= 1, "workers must be at least 1");
  require(model.tag_attention == model.hidden, "tag_attention must equal hidden");
  for (int d : {model.char_embedding, model.tag_embedding, model.hidden, model.attention, model.discriminator_hidden})
    require(d >= 1, "model dimensions must be positive");
}

void apply_config_value(TrainingConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw UsageError("config: unknown key '" + key + "'");
}

void apply_config_text(TrainingConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw UsageError(source + ":" + std::to_string(number) + ": expected key = value");
    try {
      apply_config_value(cfg, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

std::string format_config(const TrainingConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace inflect
