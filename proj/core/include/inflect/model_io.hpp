#pragma once

// Model file layout (all integers little-endian):
//
//   magic        8 bytes  "INFLMDL\0"
//   version      u32      kModelFormatVersion
//   header_size  u64
//   header       JSON text: {format, version, config, chars, tags, languages,
//                vocabulary, config_hash, tensors: [{name, rows, cols}]}
//   blocks       one f64 block per tensor, in header order, row-major
//
// Tensor order is ModelParams::named_tensors().

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "inflect/corpus.hpp"
#include "inflect/model.hpp"

namespace inflect {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  ModelParams params;
  Vocabulary vocabulary;
  // FNV-1a of the effective configuration text, hex.
  std::string config_hash;
};

std::string fnv1a_hex(std::string_view text);

void write_model(std::ostream& out, const ModelFile& m);
// DataError on a bad magic, version, header or truncated block.
ModelFile read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const ModelFile& m);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace inflect
