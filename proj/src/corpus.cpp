#include "drumloop/corpus.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "drumloop/random.hpp"

namespace drumloop::corpus {
namespace {

using nlohmann::json;

EmbeddingVector embedding_from_json(const json& j, const std::string& phrase) {
  if (!j.is_array() || j.size() != kEmbeddingDim) {
    throw ParseError("embedding for \"" + phrase + "\" must be an array of " + std::to_string(kEmbeddingDim) +
                     " numbers");
  }
  EmbeddingVector v;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    if (!j[i].is_number()) throw ParseError("embedding for \"" + phrase + "\" has a non-numeric entry");
    v.values[i] = j[i].get<double>();
  }
  return v;
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw ParseError(std::string(what) + " must have " + std::to_string(N) + " entries");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& audio_path) {
  const std::filesystem::path p(audio_path);
  return p.is_absolute() ? p : root / p;
}

}  // namespace

std::vector<SongAnnotation> parse_annotations(std::istream& in) {
  std::vector<SongAnnotation> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SongAnnotation song;
    try {
      const json j = json::parse(line);
      song.artist = j.at("artist").get<std::string>();
      song.title = j.at("title").get<std::string>();
      song.phrases = j.at("phrases").get<std::vector<std::string>>();
      song.audio_path = j.at("audio_path").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    if (song.phrases.empty()) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": no phrases for " + song.artist + " - " +
                           song.title,
                       line_no);
    }
    if (!seen.emplace(song.artist, song.title).second) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": duplicate song " + song.artist + " - " +
                           song.title,
                       line_no);
    }
    out.push_back(std::move(song));
  }
  return out;
}

std::vector<SongAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations: " + path.string());
  return parse_annotations(in);
}

EmbeddingVector average_embeddings(std::span<const EmbeddingVector> vectors) {
  if (vectors.empty()) throw std::invalid_argument("average of zero embeddings");
  EmbeddingVector mean;
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) mean.values[i] += v.values[i];
  }
  for (double& x : mean.values) x /= static_cast<double>(vectors.size());
  return mean;
}

EmbeddingVector pseudo_embedding(std::string_view phrase, std::uint64_t seed) {
  Rng rng(mix_seed(fnv1a(phrase), seed));
  EmbeddingVector v;
  double norm = 0.0;
  for (double& x : v.values) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v.values) x /= norm;
  return v;
}

std::uint64_t embedding_hash(const EmbeddingVector& v) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(v.values.data()), sizeof(double) * kEmbeddingDim));
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("embedding file " + path.string() + ": " + e.what());
  }
}

EmbeddingTable EmbeddingTable::from_json(const json& j) {
  const json& table = (j.is_object() && j.contains("embeddings")) ? j.at("embeddings") : j;
  if (!table.is_object()) throw ParseError("embedding file must be a JSON object of phrase -> vector");
  EmbeddingTable out;
  for (const auto& [phrase, value] : table.items()) {
    out.vectors_.emplace(phrase, embedding_from_json(value, phrase));
  }
  return out;
}

EmbeddingTable EmbeddingTable::pseudo(std::uint64_t seed) {
  EmbeddingTable out;
  out.pseudo_seed_ = seed;
  return out;
}

bool EmbeddingTable::contains(std::string_view phrase) const {
  return pseudo_seed_.has_value() || vectors_.find(phrase) != vectors_.end();
}

EmbeddingVector EmbeddingTable::lookup(std::string_view phrase) const {
  if (pseudo_seed_) return pseudo_embedding(phrase, *pseudo_seed_);
  const auto it = vectors_.find(phrase);
  if (it == vectors_.end()) throw MissingEmbedding(std::string(phrase));
  return it->second;
}

EmbeddingVector EmbeddingTable::average(std::span<const std::string> phrases) const {
  std::vector<EmbeddingVector> vs;
  vs.reserve(phrases.size());
  for (const auto& p : phrases) vs.push_back(lookup(p));
  return average_embeddings(vs);
}

BuildResult build_dataset(std::span<const SongAnnotation> annotations, const EmbeddingTable& embeddings,
                          const std::filesystem::path& audio_root, const BuildOptions& options) {
  for (const auto& song : annotations) {
    for (const auto& phrase : song.phrases) {
      if (!embeddings.contains(phrase)) throw MissingEmbedding(phrase);
    }
    const auto path = resolve(audio_root, song.audio_path);
    if (song.audio_path.empty() || !std::filesystem::exists(path)) {
      throw IoError("missing audio for " + song.artist + " - " + song.title + ": " + path.string());
    }
  }

  BuildResult result;
  for (const auto& song : annotations) {
    try {
      const audio::AudioClip clip = audio::decode(resolve(audio_root, song.audio_path), options.decoders,
                                                  options.sample_rate);
      const Extraction ex = extract_pattern(clip, options.extract);
      DatasetRecord record;
      record.annotation = song;
      record.embedding = embeddings.average(song.phrases);
      record.target = consensus::to_vector(ex.pattern);
      result.records.push_back(std::move(record));
    } catch (const MissingEmbedding&) {
      throw;
    } catch (const Error& e) {
      result.skipped.push_back({song, e.what()});
    }
  }
  return result;
}

std::string format_skip(const SkipReport& skip) {
  return "SKIP " + skip.annotation.artist + " - " + skip.annotation.title + ": " + skip.reason;
}

json dataset_to_json(std::span<const DatasetRecord> records) {
  json items = json::array();
  for (const auto& r : records) {
    items.push_back({{"artist", r.annotation.artist},
                     {"title", r.annotation.title},
                     {"phrases", r.annotation.phrases},
                     {"audio_path", r.annotation.audio_path},
                     {"embedding", r.embedding.values},
                     {"target", r.target.values}});
  }
  return {{"schema_version", kDatasetSchemaVersion},
          {"embedding_dim", kEmbeddingDim},
          {"rhythm_dim", kRhythmDim},
          {"records", items}};
}

std::vector<DatasetRecord> dataset_from_json(const json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw ParseError("unsupported dataset schema_version " + std::to_string(version));
    }
    std::vector<DatasetRecord> out;
    for (const auto& item : j.at("records")) {
      DatasetRecord r;
      r.annotation.artist = item.at("artist").get<std::string>();
      r.annotation.title = item.at("title").get<std::string>();
      r.annotation.phrases = item.at("phrases").get<std::vector<std::string>>();
      r.annotation.audio_path = item.value("audio_path", "");
      r.embedding.values = fixed_array<kEmbeddingDim>(item.at("embedding"), "embedding");
      r.target.values = fixed_array<kRhythmDim>(item.at("target"), "target");
      out.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset: ") + e.what());
  }
}

void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path.string());
  out << dataset_to_json(records).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  try {
    return dataset_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("dataset " + path.string() + ": " + e.what());
  }
}

}  // namespace drumloop::corpus
