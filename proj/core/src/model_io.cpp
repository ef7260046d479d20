#include "inflect/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "inflect/error.hpp"

namespace inflect {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'I', 'N', 'F', 'L', 'M', 'D', 'L', '\0'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError(std::string("model file: truncated ") + what);
  return value;
}

}  // namespace

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

void write_model(std::ostream& out, const ModelFile& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : m.params.named_tensors())
    tensors.push_back({{"name", name}, {"rows", t->shape().rows}, {"cols", t->shape().cols}});
  const nlohmann::json header = {
      {"format", "inflect-model"},
      {"version", kModelFormatVersion},
      {"config", m.params.config.to_json()},
      {"chars", m.params.chars},
      {"tags", m.params.tags},
      {"languages", m.params.languages},
      {"vocabulary", m.vocabulary.to_json()},
      {"config_hash", m.config_hash},
      {"tensors", std::move(tensors)},
  };
  const std::string text = header.dump();
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : m.params.named_tensors())
    for (double v : t->flat()) put<double>(out, v);
  if (!out) throw Error("model file: write failed");
}

ModelFile read_model(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("model file: bad magic");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kModelFormatVersion)
    throw DataError("model file: unsupported version " + std::to_string(version));
  const auto size = get<std::uint64_t>(in, "header size");
  if (size > (1ULL << 30)) throw DataError("model file: implausible header size");
  std::string text(size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(size))) throw DataError("model file: truncated header");

  ModelFile m;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    m.params = ModelParams(ModelConfig::from_json(header.at("config")), header.at("chars").get<int>(),
                           header.at("tags").get<int>(), header.at("languages").get<int>());
    m.vocabulary = Vocabulary::from_json(header.at("vocabulary"));
    m.config_hash = header.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: bad header: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("model file: bad header: ") + e.what());
  }
  if (m.vocabulary.char_count() != m.params.chars || m.vocabulary.tag_count() != m.params.tags ||
      m.vocabulary.language_count() != m.params.languages)
    throw DataError("model file: vocabulary does not match parameter shapes");

  const auto named = m.params.named_tensors();
  const nlohmann::json& listed = header.at("tensors");
  if (!listed.is_array() || listed.size() != named.size()) throw DataError("model file: tensor list mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    ad::Tensor& t = *named[i].second;
    if (listed[i].value("name", "") != named[i].first || listed[i].value("rows", -1L) != t.shape().rows ||
        listed[i].value("cols", -1L) != t.shape().cols)
      throw DataError("model file: unexpected tensor '" + listed[i].value("name", "") + "'");
    ad::Matrix& v = t.values();
    for (ad::Index r = 0; r < v.rows(); ++r)
      for (ad::Index c = 0; c < v.cols(); ++c) v(r, c) = get<double>(in, "tensor block");
  }
  return m;
}

void save_model(const std::filesystem::path& path, const ModelFile& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_model(out, m);
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return read_model(in);
}

}  // namespace inflect
