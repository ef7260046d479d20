#pragma once

// UniMorph-style inflection data: TSV parsing, vocabularies, copy-task
// triples and up-sampling.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "inflect/random.hpp"

namespace inflect {

// A word as a sequence of Unicode scalar values.
using Chars = std::u32string;

// Reserved tag used for lemma copy tasks.
inline constexpr std::string_view kCopyTag = "COPY";

struct Example {
  Chars lemma;
  std::vector<std::string> tags;
  std::optional<Chars> form;  // absent for prediction input
  std::string language;
  bool is_hallucinated = false;
  bool is_copy_task = false;

  bool operator==(const Example&) const = default;
};

// UTF-8 <-> scalar values. Invalid UTF-8 throws DataError.
Chars to_chars(std::string_view utf8);
std::string to_utf8(std::u32string_view chars);
std::string to_utf8(char32_t c);
// Canonical composition (NFC).
std::string nfc(std::string_view utf8);

// Lines are `lemma<TAB>form<TAB>tag1;tag2;...`. A form of "_" or "" marks
// prediction input. Text is NFC-normalized on read.
std::vector<Example> parse_tsv(const std::filesystem::path& path, const std::string& language_id);
std::vector<Example> parse_tsv(std::istream& in, const std::string& language_id, const std::string& source = "<stream>");

std::string format_tsv_line(const Example& e);
void write_tsv(std::ostream& out, std::span<const Example> examples);
void write_tsv(const std::filesystem::path& path, std::span<const Example> examples);

// Model-ready integer view of an Example.
struct EncodedExample {
  std::vector<int> lemma;
  std::vector<int> tags;
  std::vector<int> form;  // empty when the form is absent
  int language = -1;      // -1 for languages the vocabulary has not seen
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReservedChars = 4;

  static constexpr int kCopyTagId = 0;
  static constexpr int kUnkTag = 1;
  static constexpr int kReservedTags = 2;

  // IDs: reserved symbols, then characters in first-occurrence order
  // (lemma before form within an example), then tags, then languages.
  static Vocabulary build(std::span<const std::vector<Example>> datasets);

  int char_count() const { return static_cast<int>(chars_.size()); }
  int tag_count() const { return static_cast<int>(tags_.size()); }
  int language_count() const { return static_cast<int>(languages_.size()); }

  bool has_char(char32_t c) const { return char_ids_.contains(c); }
  // kUnk for unseen characters.
  int char_id(char32_t c) const;
  // VocabularyError for reserved or out-of-range IDs.
  char32_t char_at(int id) const;
  bool has_tag(const std::string& tag) const { return tag_ids_.contains(tag); }
  // kUnkTag for unseen tags.
  int tag_id(const std::string& tag) const;
  const std::string& tag_at(int id) const;
  // -1 for unseen languages.
  int language_id(const std::string& lang) const;
  const std::string& language_at(int id) const;
  const std::vector<std::string>& languages() const { return languages_; }

  // Characters of one language in first-occurrence order. Empty for unknown
  // languages.
  std::span<const char32_t> alphabet(const std::string& lang) const;

  std::vector<int> encode_chars(std::u32string_view s) const;
  // Reserved IDs are skipped; UNK decodes to U+FFFD.
  Chars decode_chars(std::span<const int> ids) const;
  EncodedExample encode(const Example& e) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const;

 private:
  int add_char(char32_t c);
  int add_tag(const std::string& tag);
  int add_language(const std::string& lang);

  std::vector<char32_t> chars_;  // reserved slots hold 0
  std::unordered_map<char32_t, int> char_ids_;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> tag_ids_;
  std::vector<std::string> languages_;
  std::unordered_map<std::string, int> language_ids_;
  std::map<std::string, std::vector<char32_t>> alphabets_;
};

// Copying tasks for warm-up: {X, [COPY], X} and {Y, T, Y}.
std::pair<Example, Example> make_copy_triples(const Example& e);

// Replicates `low` up to exactly `target_size` items: whole copies first,
// then a uniformly chosen subset (without replacement) for the remainder.
std::vector<Example> upsample(std::span<const Example> low, std::size_t target_size, Rng& rng);

}  // namespace inflect
