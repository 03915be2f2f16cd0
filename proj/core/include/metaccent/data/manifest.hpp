#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metaccent/features/spectrogram.hpp"
#include "metaccent/model/vocab.hpp"

namespace metaccent::data {

struct Utterance {
  std::string id;
  std::string audio_path;  // .wav, .f32 feature file, or empty when inline
  std::string transcript;  // normalized
  std::string accent_id;
  double duration_s = 0;
  std::optional<features::FeatureSequence> features;  // inline (synthetic)
};

// Lowercase, apostrophes kept, every other punctuation mark dropped,
// whitespace collapsed. The image alphabet is exactly {a..z, ', space}.
std::string normalize_text(const std::string& raw);

struct AccentStats {
  std::size_t count = 0;
  double hours = 0;
};

struct Manifest {
  std::vector<Utterance> utterances;
  std::map<std::string, AccentStats> stats;  // keyed by accent code
  std::vector<std::string> rejects;          // human-readable, non-fatal
};

struct ManifestOptions {
  // Accent labels to accept; empty means the sixteen CommonVoice codes
  // (full names are mapped onto codes either way).
  std::vector<std::string> accepted_accents;
  bool allow_any_accent = false;
};

// TSV with header id\taudio_path\ttranscript\taccent\tduration_s. Unknown
// accents land in the rejects report; malformed rows are fatal and name the
// line.
Manifest load_manifest(const std::filesystem::path& path,
                       const ManifestOptions& options = {});

// code -> full accent name, the sixteen labels of the accented subset.
const std::map<std::string, std::string>& commonvoice_accents();

// Table-style statistics (accent, sample count, hours, plus a total row).
std::string format_stats_table(const Manifest& manifest);

model::GraphemeVocab build_vocab(const std::vector<Utterance>& utterances);

// Maps a raw CommonVoice validated.tsv (client_id/path/sentence/.../accent
// columns) onto the manifest schema. Rows without a recognized accent label
// are dropped. Returns the number of rows written.
std::size_t convert_commonvoice_tsv(const std::filesystem::path& validated_tsv,
                                    const std::filesystem::path& clips_dir,
                                    const std::filesystem::path& out_manifest);

}  // namespace metaccent::data
