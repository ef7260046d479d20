#include "inflect/corpus.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "inflect/error.hpp"

namespace inflect {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Unicode helpers

Chars to_chars(std::string_view utf8) {
  Chars out;
  out.reserve(utf8.size());
  const auto* s = reinterpret_cast<const std::uint8_t*>(utf8.data());
  const auto length = static_cast<std::int32_t>(utf8.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) throw DataError("invalid UTF-8 sequence");
    out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

std::string to_utf8(char32_t c) {
  std::string out;
  const auto cp = static_cast<std::uint32_t>(c);
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string to_utf8(std::u32string_view chars) {
  std::string out;
  out.reserve(chars.size());
  for (char32_t c : chars) out += to_utf8(c);
  return out;
}

std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  if (norm->isNormalized(in, status) && U_SUCCESS(status)) return std::string(utf8);
  status = U_ZERO_ERROR;
  const icu::UnicodeString out = norm->normalize(in, status);
  if (U_FAILURE(status)) throw DataError("NFC normalization failed");
  std::string result;
  out.toUTF8String(result);
  return result;
}

// ---------------------------------------------------------------------------
// TSV

std::vector<Example> parse_tsv(std::istream& in, const std::string& language_id, const std::string& source) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 3)
      throw ParseError(source, lineno, "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    Example e;
    e.language = language_id;
    try {
      e.lemma = to_chars(nfc(fields[0]));
      if (!fields[1].empty() && fields[1] != "_") e.form = to_chars(nfc(fields[1]));
    } catch (const DataError& err) {
      throw ParseError(source, lineno, err.what());
    }
    if (e.lemma.empty()) throw ParseError(source, lineno, "empty lemma");
    if (fields[2].empty()) throw ParseError(source, lineno, "empty tag list");
    for (std::string& tag : split(fields[2], ';')) {
      if (tag.empty()) throw ParseError(source, lineno, "empty tag in '" + fields[2] + "'");
      e.tags.push_back(std::move(tag));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> parse_tsv(const std::filesystem::path& path, const std::string& language_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_tsv(in, language_id, path.string());
}

std::string format_tsv_line(const Example& e) {
  std::string line = to_utf8(e.lemma);
  line += '\t';
  line += e.form ? to_utf8(*e.form) : std::string("_");
  line += '\t';
  for (std::size_t i = 0; i < e.tags.size(); ++i) {
    if (i) line += ';';
    line += e.tags[i];
  }
  return line;
}

void write_tsv(std::ostream& out, std::span<const Example> examples) {
  for (const Example& e : examples) out << format_tsv_line(e) << '\n';
}

void write_tsv(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_tsv(out, examples);
}

// ---------------------------------------------------------------------------
// Vocabulary

int Vocabulary::add_char(char32_t c) {
  auto [it, inserted] = char_ids_.try_emplace(c, static_cast<int>(chars_.size()));
  if (inserted) chars_.push_back(c);
  return it->second;
}

int Vocabulary::add_tag(const std::string& tag) {
  auto [it, inserted] = tag_ids_.try_emplace(tag, static_cast<int>(tags_.size()));
  if (inserted) tags_.push_back(tag);
  return it->second;
}

int Vocabulary::add_language(const std::string& lang) {
  auto [it, inserted] = language_ids_.try_emplace(lang, static_cast<int>(languages_.size()));
  if (inserted) languages_.push_back(lang);
  return it->second;
}

Vocabulary Vocabulary::build(std::span<const std::vector<Example>> datasets) {
  std::size_t total = 0;
  for (const auto& d : datasets) total += d.size();
  if (total == 0) throw UsageError("build_vocab: no examples");

  Vocabulary v;
  v.chars_.assign(kReservedChars, U'\0');
  v.tags_ = {std::string(kCopyTag), "<unk>"};
  v.tag_ids_ = {{std::string(kCopyTag), kCopyTagId}, {"<unk>", kUnkTag}};

  auto note_char = [&](const std::string& lang, char32_t c) {
    v.add_char(c);
    auto& alpha = v.alphabets_[lang];
    if (std::find(alpha.begin(), alpha.end(), c) == alpha.end()) alpha.push_back(c);
  };
  for (const auto& d : datasets) {
    for (const Example& e : d) {
      for (char32_t c : e.lemma) note_char(e.language, c);
      if (e.form)
        for (char32_t c : *e.form) note_char(e.language, c);
    }
  }
  for (const auto& d : datasets)
    for (const Example& e : d)
      for (const std::string& t : e.tags) v.add_tag(t);
  for (const auto& d : datasets)
    for (const Example& e : d) v.add_language(e.language);
  return v;
}

int Vocabulary::char_id(char32_t c) const {
  auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnk : it->second;
}

char32_t Vocabulary::char_at(int id) const {
  if (id < kReservedChars || id >= char_count()) throw VocabularyError("character id " + std::to_string(id) + " has no surface form");
  return chars_[static_cast<std::size_t>(id)];
}

int Vocabulary::tag_id(const std::string& tag) const {
  auto it = tag_ids_.find(tag);
  return it == tag_ids_.end() ? kUnkTag : it->second;
}

const std::string& Vocabulary::tag_at(int id) const {
  if (id < 0 || id >= tag_count()) throw VocabularyError("tag id " + std::to_string(id) + " out of range");
  return tags_[static_cast<std::size_t>(id)];
}

int Vocabulary::language_id(const std::string& lang) const {
  auto it = language_ids_.find(lang);
  return it == language_ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::language_at(int id) const {
  if (id < 0 || id >= language_count()) throw VocabularyError("language id " + std::to_string(id) + " out of range");
  return languages_[static_cast<std::size_t>(id)];
}

std::span<const char32_t> Vocabulary::alphabet(const std::string& lang) const {
  auto it = alphabets_.find(lang);
  if (it == alphabets_.end()) return {};
  return it->second;
}

std::vector<int> Vocabulary::encode_chars(std::u32string_view s) const {
  std::vector<int> out;
  out.reserve(s.size());
  for (char32_t c : s) out.push_back(char_id(c));
  return out;
}

Chars Vocabulary::decode_chars(std::span<const int> ids) const {
  Chars out;
  for (int id : ids) {
    if (id == kUnk) {
      out.push_back(U'\uFFFD');
    } else if (id >= kReservedChars) {
      out.push_back(char_at(id));
    }
  }
  return out;
}

EncodedExample Vocabulary::encode(const Example& e) const {
  EncodedExample out;
  out.lemma = encode_chars(e.lemma);
  out.tags.reserve(e.tags.size());
  for (const std::string& t : e.tags) out.tags.push_back(tag_id(t));
  if (e.form) out.form = encode_chars(*e.form);
  out.language = language_id(e.language);
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json chars = nlohmann::json::array();
  for (std::size_t i = kReservedChars; i < chars_.size(); ++i) chars.push_back(to_utf8(chars_[i]));
  nlohmann::json tags = nlohmann::json::array();
  for (std::size_t i = kReservedTags; i < tags_.size(); ++i) tags.push_back(tags_[i]);
  nlohmann::json alphabets = nlohmann::json::object();
  for (const auto& [lang, alpha] : alphabets_) {
    nlohmann::json a = nlohmann::json::array();
    for (char32_t c : alpha) a.push_back(to_utf8(c));
    alphabets[lang] = std::move(a);
  }
  return {{"chars", chars}, {"tags", tags}, {"languages", languages_}, {"alphabets", alphabets}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.chars_.assign(kReservedChars, U'\0');
  v.tags_ = {std::string(kCopyTag), "<unk>"};
  v.tag_ids_ = {{std::string(kCopyTag), kCopyTagId}, {"<unk>", kUnkTag}};
  try {
    for (const auto& c : j.at("chars")) {
      const Chars cs = to_chars(c.get<std::string>());
      if (cs.size() != 1) throw VocabularyError("vocabulary entry is not a single character");
      v.add_char(cs[0]);
    }
    for (const auto& t : j.at("tags")) v.add_tag(t.get<std::string>());
    for (const auto& l : j.at("languages")) v.add_language(l.get<std::string>());
    for (const auto& [lang, alpha] : j.at("alphabets").items()) {
      auto& out = v.alphabets_[lang];
      for (const auto& c : alpha) out.push_back(to_chars(c.get<std::string>()).at(0));
    }
  } catch (const nlohmann::json::exception& err) {
    throw DataError(std::string("malformed vocabulary: ") + err.what());
  }
  return v;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  return chars_ == other.chars_ && tags_ == other.tags_ && languages_ == other.languages_ &&
         alphabets_ == other.alphabets_;
}

// ---------------------------------------------------------------------------
// Training-set construction

std::pair<Example, Example> make_copy_triples(const Example& e) {
  if (!e.form) throw UsageError("make_copy_triples: example has no form");
  Example lemma_copy;
  lemma_copy.lemma = e.lemma;
  lemma_copy.tags = {std::string(kCopyTag)};
  lemma_copy.form = e.lemma;
  lemma_copy.language = e.language;
  lemma_copy.is_hallucinated = e.is_hallucinated;
  lemma_copy.is_copy_task = true;

  Example form_copy;
  form_copy.lemma = *e.form;
  form_copy.tags = e.tags;
  form_copy.form = *e.form;
  form_copy.language = e.language;
  form_copy.is_hallucinated = e.is_hallucinated;
  form_copy.is_copy_task = true;
  return {std::move(lemma_copy), std::move(form_copy)};
}

std::vector<Example> upsample(std::span<const Example> low, std::size_t target_size, Rng& rng) {
  if (low.empty()) throw UsageError("upsample: empty input");
  if (target_size < low.size())
    throw UsageError("upsample: target size " + std::to_string(target_size) + " is below the input size " +
                     std::to_string(low.size()));
  std::vector<Example> out;
  out.reserve(target_size);
  const std::size_t cycles = target_size / low.size();
  for (std::size_t c = 0; c < cycles; ++c) out.insert(out.end(), low.begin(), low.end());
  const std::size_t extra = target_size - out.size();
  if (extra > 0) {
    std::vector<std::size_t> order(low.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t i = 0; i < extra; ++i) out.push_back(low[order[i]]);
  }
  return out;
}

}  // namespace inflect
