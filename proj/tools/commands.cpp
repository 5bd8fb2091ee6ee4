#include "commands.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "drumloop/audio_io.hpp"
#include "drumloop/corpus.hpp"
#include "drumloop/drum_model.hpp"
#include "drumloop/errors.hpp"
#include "drumloop/pattern_codec.hpp"
#include "drumloop/pipeline.hpp"

namespace drumloop::cli {
namespace {

using nlohmann::json;

struct GlobalFlags {
  std::uint64_t seed = clustering::kDefaultSeed;
  int sample_rate = audio::kPipelineRate;
  std::string hpss_kernel = "75x75";
  double tempo_scale = model::kDefaultTempoScale;
  bool literal_tempo = false;
  int sequence_id = codec::kDefaultSequenceId;
  std::vector<std::string> note_map;
};

struct ExtractFlags {
  std::string audio;
  std::string out;
  std::string clicks_out;
  std::string role_order;
};

struct CorpusFlags {
  std::string annotations;
  std::string audio_root = ".";
  std::string embeddings;
  std::optional<std::uint64_t> pseudo_seed;
  std::string out;
};

struct TrainFlags {
  std::string dataset;
  std::string out;
  int epochs = 500;
  int batch_size = 5;
  double learning_rate = 0.001;
  double huber_delta = 1.0;
  int patience = 50;
  int folds = 10;
  int repeats = 3;
  bool straight_through = false;
};

struct GenerateFlags {
  std::string model;
  std::vector<std::string> phrases;
  std::string embeddings;
  std::optional<std::uint64_t> pseudo_seed;
  std::string embedding_json;
  std::string json_out;
  bool echo_hash = false;
};

std::pair<int, int> parse_kernel(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw std::invalid_argument("--hpss-kernel expects TxF, e.g. 75x75");
  int t = 0;
  int f = 0;
  const auto r1 = std::from_chars(text.data(), text.data() + x, t);
  const auto r2 = std::from_chars(text.data() + x + 1, text.data() + text.size(), f);
  if (r1.ec != std::errc{} || r1.ptr != text.data() + x || r2.ec != std::errc{} ||
      r2.ptr != text.data() + text.size() || t < 1 || f < 1 || t % 2 == 0 || f % 2 == 0) {
    throw std::invalid_argument("--hpss-kernel expects two odd positive sizes TxF, got '" + text + "'");
  }
  return {t, f};
}

std::array<Role, kTracks> parse_role_order(const std::string& text) {
  std::array<Role, kTracks> order{};
  std::stringstream ss(text);
  std::string item;
  std::size_t n = 0;
  std::set<Role> seen;
  while (std::getline(ss, item, ',')) {
    const auto role = parse_role(item);
    if (!role || n >= kTracks || !seen.insert(*role).second) {
      throw std::invalid_argument("--role-order expects a permutation of snare,kick,other,hihat");
    }
    order[n++] = *role;
  }
  if (n != kTracks) throw std::invalid_argument("--role-order expects a permutation of snare,kick,other,hihat");
  return order;
}

codec::SequencerNoteMap note_map_from(const GlobalFlags& g) {
  codec::SequencerNoteMap map;
  map.sequence_id = g.sequence_id;
  for (const auto& entry : g.note_map) {
    const auto eq = entry.find('=');
    const auto role = eq == std::string::npos ? std::nullopt : parse_role(entry.substr(0, eq));
    if (!role || eq + 1 >= entry.size()) throw std::invalid_argument("--note-map expects role=NOTE, got '" + entry + "'");
    map.set(*role, entry.substr(eq + 1));
  }
  return map;
}

ExtractOptions extract_options(const GlobalFlags& g) {
  ExtractOptions opts;
  std::tie(opts.kernel_time, opts.kernel_freq) = parse_kernel(g.hpss_kernel);
  opts.clustering.kmeans.seed = g.seed;
  return opts;
}

model::TrainConfig train_config(const GlobalFlags& g, const TrainFlags& t) {
  model::TrainConfig cfg;
  cfg.seed = g.seed;
  cfg.tempo_scale = g.literal_tempo ? 1.0 : g.tempo_scale;
  cfg.max_epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.learning_rate = t.learning_rate;
  cfg.huber_delta = t.huber_delta;
  cfg.patience = t.patience;
  cfg.folds = t.folds;
  cfg.repeats = t.repeats;
  if (t.straight_through) cfg.mask_gradient = model::MaskGradient::StraightThrough;
  cfg.validate();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

int cmd_extract(const GlobalFlags& g, const ExtractFlags& f, std::ostream& out, std::ostream& err) {
  ExtractOptions opts = extract_options(g);
  if (!f.role_order.empty()) opts.role_order = parse_role_order(f.role_order);
  const audio::AudioClip song = audio::decode(f.audio, audio::DecoderRegistry::with_external_fallback(), g.sample_rate);
  const Extraction ex = extract_pattern(song, opts);

  if (ex.raw_tempo.fallback) err << "warning: no periodicity in the click track, tempo defaulted to 120\n";
  if (ex.clusters.degenerate) {
    err << "warning: only " << ex.clusters.k_used << " instrument clusters with enough onsets\n";
  }
  if (!f.clicks_out.empty()) audio::write_wave(f.clicks_out, ex.clicks);
  if (!f.out.empty()) write_text(f.out, consensus::to_json(ex.pattern).dump(2) + "\n");
  out << codec::render_text(ex.pattern);
  return kExitOk;
}

int cmd_build_corpus(const GlobalFlags& g, const CorpusFlags& f, std::ostream& out, std::ostream& err) {
  if (f.embeddings.empty() == !f.pseudo_seed.has_value()) {
    throw std::invalid_argument("build-corpus needs exactly one of --embeddings or --pseudo-embeddings");
  }
  const auto annotations = corpus::load_annotations(f.annotations);
  const auto table = f.pseudo_seed ? corpus::EmbeddingTable::pseudo(*f.pseudo_seed)
                                   : corpus::EmbeddingTable::load(f.embeddings);
  corpus::BuildOptions opts;
  opts.extract = extract_options(g);
  opts.sample_rate = g.sample_rate;
  const auto result = corpus::build_dataset(annotations, table, f.audio_root, opts);
  for (const auto& skip : result.skipped) err << corpus::format_skip(skip) << '\n';
  corpus::write_dataset(f.out, result.records);
  out << "wrote " << result.records.size() << " records to " << f.out << " (" << result.skipped.size()
      << " skipped)\n";
  return kExitOk;
}

int cmd_train(const GlobalFlags& g, const TrainFlags& f, std::ostream& out, std::ostream&) {
  const auto cfg = train_config(g, f);
  const auto records = corpus::read_dataset(f.dataset);
  const auto examples = model::examples_from(records);
  const auto result = model::train(examples, cfg);
  model::save_model(f.out, {result.params, cfg.seed, cfg.tempo_scale});
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", result.final_train_loss);
  out << "trained " << result.loss_history.size() << " epochs on " << examples.size()
      << " records, final loss " << buf << "\n";
  return kExitOk;
}

int cmd_cv(const GlobalFlags& g, const TrainFlags& f, std::ostream& out, std::ostream&) {
  const auto cfg = train_config(g, f);
  const auto records = corpus::read_dataset(f.dataset);
  const auto rows = model::cross_validate(model::examples_from(records), cfg);
  std::ofstream csv(f.out);
  if (!csv) throw IoError("cannot write " + f.out);
  model::write_cv_csv(csv, rows);
  if (!csv) throw IoError("write failed: " + f.out);
  out << "wrote " << rows.size() << " rows to " << f.out << "\n";
  return kExitOk;
}

EmbeddingVector parse_raw_embedding(const std::string& arg) {
  json j;
  try {
    if (!arg.empty() && arg.front() == '[') {
      j = json::parse(arg);
    } else {
      std::ifstream in(arg);
      if (!in) throw IoError("cannot open " + arg);
      j = json::parse(in);
    }
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("--embedding-json: ") + e.what());
  }
  if (!j.is_array() || j.size() != kEmbeddingDim) {
    throw ParseError("--embedding-json must hold exactly 768 numbers, got " +
                     std::to_string(j.is_array() ? j.size() : 0));
  }
  EmbeddingVector v;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    if (!j[i].is_number()) throw ParseError("--embedding-json entry " + std::to_string(i) + " is not a number");
    v.values[i] = j[i].get<double>();
  }
  return v;
}

int cmd_generate(const GlobalFlags& g, const GenerateFlags& f, std::ostream& out, std::ostream& err) {
  const int sources = (f.embeddings.empty() ? 0 : 1) + (f.pseudo_seed ? 1 : 0) + (f.embedding_json.empty() ? 0 : 1);
  if (sources != 1) {
    throw std::invalid_argument("generate needs exactly one of --embeddings, --pseudo-embeddings, --embedding-json");
  }
  if (f.embedding_json.empty() && f.phrases.empty()) throw std::invalid_argument("generate needs at least one phrase");
  const auto note_map = note_map_from(g);
  const model::ModelFile model_file = model::load_model(f.model);

  EmbeddingVector x;
  if (!f.embedding_json.empty()) {
    x = parse_raw_embedding(f.embedding_json);
  } else {
    const auto table = f.pseudo_seed ? corpus::EmbeddingTable::pseudo(*f.pseudo_seed)
                                     : corpus::EmbeddingTable::load(f.embeddings);
    x = table.average(f.phrases);
  }
  if (f.echo_hash) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(corpus::embedding_hash(x)));
    err << "input-hash: " << buf << '\n';
  }

  const RhythmVector y = model::predict(model_file.params, x, model_file.tempo_scale);
  const ConsensusPattern pattern = consensus::from_vector(y);
  if (pattern.tempo_bpm <= 0 || pattern.beat_count() == 0) {
    err << "warning: degenerate prediction (tempo " << pattern.tempo_bpm << ", " << pattern.beat_count()
        << " beats)\n";
  }
  out << codec::render_text(pattern) << '\n' << codec::render_sequencer(pattern, note_map) << '\n';
  if (!f.json_out.empty()) write_text(f.json_out, consensus::to_json(pattern).dump(2) + "\n");
  return kExitOk;
}

void add_train_options(CLI::App* cmd, TrainFlags& t, bool cv) {
  cmd->add_option("dataset", t.dataset, "Dataset JSON from build-corpus")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", t.out, cv ? "CSV table to write" : "Model file to write")->required();
  cmd->add_option("--epochs", t.epochs, "Maximum training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size");
  cmd->add_option("--learning-rate", t.learning_rate, "Adam learning rate");
  cmd->add_option("--huber-delta", t.huber_delta, "Huber loss crossover");
  cmd->add_flag("--straight-through", t.straight_through, "Pass gradient through masked outputs while training");
  if (cv) {
    cmd->add_option("--folds", t.folds, "Number of folds");
    cmd->add_option("--repeats", t.repeats, "Number of reshuffled repeats");
    cmd->add_option("--patience", t.patience, "Early-stop patience in epochs (0 disables)");
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drum loop extraction and phrase-conditioned drum pattern generation"};
  app.name("drumloop");
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--seed", g.seed, "Seed for clustering, initialization and shuffling");
  app.add_option("--sample-rate", g.sample_rate, "Analysis sample rate in Hz")->check(CLI::Range(8000, 192000));
  app.add_option("--hpss-kernel", g.hpss_kernel, "HPSS median kernel TIMExFREQ (odd sizes)");
  auto* scale = app.add_option("--tempo-scale", g.tempo_scale, "Multiplier on BPM during training")
                    ->check(CLI::PositiveNumber);
  app.add_flag("--literal-tempo", g.literal_tempo, "Train on raw BPM (tempo scale 1)")->excludes(scale);
  app.add_option("--sequence-id", g.sequence_id, "Online Sequencer sequence id");
  app.add_option("--note-map", g.note_map, "Override a sequencer note, e.g. kick=C3");

  ExtractFlags ef;
  auto* extract = app.add_subcommand("extract", "Extract the consensus drum loop of a song");
  extract->fallthrough();
  extract->add_option("audio", ef.audio, "Audio file")->required();
  extract->add_option("-o,--out", ef.out, "Pattern JSON to write");
  extract->add_option("--clicks-out", ef.clicks_out, "Write the strong-onset click track as wave");
  extract->add_option("--role-order", ef.role_order, "Roles by increasing loudness, comma separated");

  CorpusFlags cf;
  auto* build = app.add_subcommand("build-corpus", "Pair annotated songs with their extracted patterns");
  build->fallthrough();
  build->add_option("annotations", cf.annotations, "Annotation JSON Lines file")->required();
  build->add_option("--audio-root", cf.audio_root, "Directory relative audio paths resolve against");
  auto* emb = build->add_option("--embeddings", cf.embeddings, "Phrase embedding JSON file");
  build->add_option("--pseudo-embeddings", cf.pseudo_seed, "Use deterministic pseudo-embeddings with this seed")
      ->excludes(emb);
  build->add_option("-o,--out", cf.out, "Dataset JSON to write")->required();

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train the phrase-to-pattern network");
  train->fallthrough();
  add_train_options(train, tf, false);

  TrainFlags vf;
  auto* cv = app.add_subcommand("cv", "Repeated k-fold cross-validation");
  cv->fallthrough();
  add_train_options(cv, vf, true);

  GenerateFlags gf;
  auto* generate = app.add_subcommand("generate", "Generate a drum pattern for a phrase");
  generate->fallthrough();
  generate->add_option("model", gf.model, "Model file from train")->required();
  generate->add_option("phrases", gf.phrases, "Phrases; several are averaged");
  generate->add_option("--embeddings", gf.embeddings, "Phrase embedding JSON file");
  generate->add_option("--pseudo-embeddings", gf.pseudo_seed, "Use deterministic pseudo-embeddings with this seed");
  generate->add_option("--embedding-json", gf.embedding_json, "Raw 768-number JSON array, inline or a file");
  generate->add_option("--json-out", gf.json_out, "Also write the pattern JSON here");
  generate->add_flag("--echo-input-hash", gf.echo_hash, "Print a hash of the network input to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*extract) return cmd_extract(g, ef, out, err);
    if (*build) return cmd_build_corpus(g, cf, out, err);
    if (*train) return cmd_train(g, tf, out, err);
    if (*cv) return cmd_cv(g, vf, out, err);
    if (*generate) return cmd_generate(g, gf, out, err);
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace drumloop::cli
