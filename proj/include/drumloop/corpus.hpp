#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drumloop/audio_io.hpp"
#include "drumloop/consensus.hpp"
#include "drumloop/errors.hpp"
#include "drumloop/pipeline.hpp"

namespace drumloop {

inline constexpr std::size_t kEmbeddingDim = 768;

struct EmbeddingVector {
  std::array<double, kEmbeddingDim> values{};
  bool operator==(const EmbeddingVector&) const = default;
};

}  // namespace drumloop

namespace drumloop::corpus {

struct SongAnnotation {
  std::string artist;
  std::string title;
  std::vector<std::string> phrases;
  std::string audio_path;  // relative paths resolve against the audio root
  bool operator==(const SongAnnotation&) const = default;
};

struct DatasetRecord {
  SongAnnotation annotation;
  EmbeddingVector embedding;
  RhythmVector target;
  bool operator==(const DatasetRecord&) const = default;
};

struct SkipReport {
  SongAnnotation annotation;
  std::string reason;
};

// A phrase that the embedding source does not know.
class MissingEmbedding : public IoError {
 public:
  explicit MissingEmbedding(const std::string& phrase)
      : IoError("no embedding for phrase \"" + phrase + "\""), phrase_(phrase) {}
  const std::string& phrase() const { return phrase_; }

 private:
  std::string phrase_;
};

// JSON Lines, one {artist, title, phrases, audio_path} object per line.
// Rejects empty phrase lists and duplicate (artist, title) pairs; ParseError
// carries the 1-based line number.
std::vector<SongAnnotation> parse_annotations(std::istream& in);
std::vector<SongAnnotation> load_annotations(const std::filesystem::path& path);

// Elementwise mean. Throws std::invalid_argument on an empty list.
EmbeddingVector average_embeddings(std::span<const EmbeddingVector> vectors);

// Deterministic stand-in for a language model: a unit vector seeded by a hash
// of the phrase text.
EmbeddingVector pseudo_embedding(std::string_view phrase, std::uint64_t seed);

// FNV-1a over the raw bytes of the 768 doubles; used to compare inputs.
std::uint64_t embedding_hash(const EmbeddingVector& v);

// Phrase -> 768-vector lookup. Backed either by an embedding file, which is
// a JSON object mapping phrase text to arrays of 768 numbers (optionally
// wrapped as {"metadata": {...}, "embeddings": {...}}), or by the
// pseudo-embedding generator.
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::filesystem::path& path);
  static EmbeddingTable from_json(const nlohmann::json& j);
  static EmbeddingTable pseudo(std::uint64_t seed);

  bool contains(std::string_view phrase) const;
  EmbeddingVector lookup(std::string_view phrase) const;  // throws MissingEmbedding
  EmbeddingVector average(std::span<const std::string> phrases) const;
  std::size_t size() const { return vectors_.size(); }

 private:
  std::map<std::string, EmbeddingVector, std::less<>> vectors_;
  std::optional<std::uint64_t> pseudo_seed_;
};

struct BuildOptions {
  ExtractOptions extract;
  int sample_rate = audio::kPipelineRate;
  audio::DecoderRegistry decoders = audio::DecoderRegistry::with_external_fallback();
};

struct BuildResult {
  std::vector<DatasetRecord> records;
  std::vector<SkipReport> skipped;
};

// Extracts each song's consensus pattern and pairs it with the averaged
// phrase embedding. Unknown phrases and missing audio files are hard errors
// (checked before any extraction); songs whose decoding or extraction fails
// are skipped and reported.
BuildResult build_dataset(std::span<const SongAnnotation> annotations, const EmbeddingTable& embeddings,
                          const std::filesystem::path& audio_root, const BuildOptions& options = {});

// `SKIP <artist> - <title>: <reason>`
std::string format_skip(const SkipReport& skip);

inline constexpr int kDatasetSchemaVersion = 1;

nlohmann::json dataset_to_json(std::span<const DatasetRecord> records);
std::vector<DatasetRecord> dataset_from_json(const nlohmann::json& j);
void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

}  // namespace drumloop::corpus
