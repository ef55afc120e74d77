#ifndef FDSE_DATASET_HPP
#define FDSE_DATASET_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "fdse/aligner.hpp"
#include "fdse/augment.hpp"
#include "fdse/codec.hpp"
#include "fdse/dialog.hpp"
#include "fdse/frame.hpp"
#include "fdse/frame_io.hpp"
#include "fdse/loss_mask.hpp"
#include "fdse/rng.hpp"
#include "fdse/wav.hpp"

namespace fdse {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a build. Seeds are not part of it; they come from the job.
struct BuildConfig {
  StreamConfig stream;
  LossWeights loss;
  AugmentSpec augment;
  InterruptionPolicy interruption;
  PackingPolicy packing;
  LayoutOptions layout;

  void check() const {
    stream.require_valid();
    loss.check();
    augment.check();
    interruption.check();
    if (packing.gap_min_frames > packing.gap_max_frames || layout.gap_min_frames > layout.gap_max_frames)
      throw ConfigError("gap_min_frames must not exceed gap_max_frames");
    if (packing.target_len == 0 || packing.target_len > stream.max_seq_len)
      throw ConfigError("packing target_len must lie in [1, max_seq_len]");
  }
};

namespace detail {

inline const char* rounding_name(DelayRounding r) {
  switch (r) {
    case DelayRounding::Floor: return "floor";
    case DelayRounding::Ceil: return "ceil";
    case DelayRounding::Nearest: break;
  }
  return "nearest";
}

inline DelayRounding parse_rounding(const std::string& s) {
  if (s == "nearest") return DelayRounding::Nearest;
  if (s == "floor") return DelayRounding::Floor;
  if (s == "ceil") return DelayRounding::Ceil;
  throw ConfigError("interruption.rounding must be nearest, floor or ceil, got '" + s + "'");
}

// Shortest round-tripping text for a double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  for (int prec = 1; prec <= 17; ++prec) {
    char t[32];
    std::snprintf(t, sizeof t, "%.*g", prec, v);
    if (std::strtod(t, nullptr) == v) return t;
  }
  return buf;
}

}  // namespace detail

/// Canonical INI text; also the input of the config hash.
inline std::string config_to_ini(const BuildConfig& c) {
  using detail::fmt_double;
  std::ostringstream os;
  const auto& s = c.stream;
  os << "[stream]\n"
     << "frame_rate_num = " << s.frame_rate_hz.num << "\n"
     << "frame_rate_den = " << s.frame_rate_hz.den << "\n"
     << "num_codebooks = " << s.num_codebooks << "\n"
     << "audio_vocab_size = " << s.audio_vocab_size << "\n"
     << "text_vocab_base = " << s.text_vocab_base << "\n"
     << "sample_rate_hz = " << s.sample_rate_hz << "\n"
     << "hop_samples = " << s.hop_samples << "\n"
     << "max_seq_len = " << s.max_seq_len << "\n"
     << "text_lead_steps = " << s.text_lead_steps << "\n"
     << "acoustic_delay_steps = " << s.acoustic_delay_steps << "\n\n";
  os << "[loss]\n"
     << "alpha1 = " << fmt_double(c.loss.alpha1) << "\n"
     << "alpha2 = " << fmt_double(c.loss.alpha2) << "\n"
     << "beta = " << fmt_double(c.loss.beta) << "\n"
     << "gamma = " << fmt_double(c.loss.gamma) << "\n\n";
  const auto& a = c.augment;
  os << "[augment]\n"
     << "p_gain = " << fmt_double(a.p_gain) << "\n"
     << "gain_db_lo = " << fmt_double(a.gain_db_range.lo) << "\n"
     << "gain_db_hi = " << fmt_double(a.gain_db_range.hi) << "\n"
     << "min_loudness_db = " << fmt_double(a.min_loudness_db) << "\n"
     << "noise_db_lo = " << fmt_double(a.noise_db_range.lo) << "\n"
     << "noise_db_hi = " << fmt_double(a.noise_db_range.hi) << "\n"
     << "p_noise_silence = " << fmt_double(a.p_noise_silence) << "\n"
     << "p_leakage = " << fmt_double(a.p_leakage) << "\n"
     << "leakage_gain_lo = " << fmt_double(a.leakage_gain_range.lo) << "\n"
     << "leakage_gain_hi = " << fmt_double(a.leakage_gain_range.hi) << "\n"
     << "leakage_delay_lo_s = " << fmt_double(a.leakage_delay_range_s.lo) << "\n"
     << "leakage_delay_hi_s = " << fmt_double(a.leakage_delay_range_s.hi) << "\n\n";
  os << "[interruption]\n"
     << "p_interrupt = " << fmt_double(c.interruption.p_interrupt) << "\n"
     << "reaction_delay_s = " << fmt_double(c.interruption.reaction_delay_s) << "\n"
     << "rounding = " << detail::rounding_name(c.interruption.rounding) << "\n\n";
  os << "[packing]\n"
     << "gap_min_frames = " << c.packing.gap_min_frames << "\n"
     << "gap_max_frames = " << c.packing.gap_max_frames << "\n"
     << "target_len = " << c.packing.target_len << "\n\n";
  os << "[layout]\n"
     << "gap_min_frames = " << c.layout.gap_min_frames << "\n"
     << "gap_max_frames = " << c.layout.gap_max_frames << "\n";
  return os.str();
}

/// Missing keys keep their defaults; unknown sections or keys are errors.
inline BuildConfig config_from_ini(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  BuildConfig c;
  std::map<std::string, std::set<std::string>> known;
  auto u32 = [&](const std::string& sec, const std::string& key, std::uint32_t& dst) {
    known[sec].insert(key);
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(sec + "." + key, '.'))) {
      try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(*v, &used);
        if (used != v->size() || x > 0xFFFFFFFFull || v->find('-') != std::string::npos) throw std::out_of_range(*v);
        dst = static_cast<std::uint32_t>(x);
      } catch (const std::exception&) {
        throw ConfigError("config: " + sec + "." + key + " must be an unsigned integer, got '" + *v + "'");
      }
    }
  };
  auto f64 = [&](const std::string& sec, const std::string& key, double& dst) {
    known[sec].insert(key);
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(sec + "." + key, '.'))) {
      try {
        std::size_t used = 0;
        dst = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(*v);
      } catch (const std::exception&) {
        throw ConfigError("config: " + sec + "." + key + " must be a number, got '" + *v + "'");
      }
    }
  };

  auto& s = c.stream;
  u32("stream", "frame_rate_num", s.frame_rate_hz.num);
  u32("stream", "frame_rate_den", s.frame_rate_hz.den);
  u32("stream", "num_codebooks", s.num_codebooks);
  u32("stream", "audio_vocab_size", s.audio_vocab_size);
  u32("stream", "text_vocab_base", s.text_vocab_base);
  u32("stream", "sample_rate_hz", s.sample_rate_hz);
  u32("stream", "hop_samples", s.hop_samples);
  u32("stream", "max_seq_len", s.max_seq_len);
  u32("stream", "text_lead_steps", s.text_lead_steps);
  u32("stream", "acoustic_delay_steps", s.acoustic_delay_steps);
  f64("loss", "alpha1", c.loss.alpha1);
  f64("loss", "alpha2", c.loss.alpha2);
  f64("loss", "beta", c.loss.beta);
  f64("loss", "gamma", c.loss.gamma);
  auto& a = c.augment;
  f64("augment", "p_gain", a.p_gain);
  f64("augment", "gain_db_lo", a.gain_db_range.lo);
  f64("augment", "gain_db_hi", a.gain_db_range.hi);
  f64("augment", "min_loudness_db", a.min_loudness_db);
  f64("augment", "noise_db_lo", a.noise_db_range.lo);
  f64("augment", "noise_db_hi", a.noise_db_range.hi);
  f64("augment", "p_noise_silence", a.p_noise_silence);
  f64("augment", "p_leakage", a.p_leakage);
  f64("augment", "leakage_gain_lo", a.leakage_gain_range.lo);
  f64("augment", "leakage_gain_hi", a.leakage_gain_range.hi);
  f64("augment", "leakage_delay_lo_s", a.leakage_delay_range_s.lo);
  f64("augment", "leakage_delay_hi_s", a.leakage_delay_range_s.hi);
  f64("interruption", "p_interrupt", c.interruption.p_interrupt);
  f64("interruption", "reaction_delay_s", c.interruption.reaction_delay_s);
  known["interruption"].insert("rounding");
  if (auto r = tree.get_optional<std::string>("interruption.rounding")) c.interruption.rounding = detail::parse_rounding(*r);
  u32("packing", "gap_min_frames", c.packing.gap_min_frames);
  u32("packing", "gap_max_frames", c.packing.gap_max_frames);
  u32("packing", "target_len", c.packing.target_len);
  u32("layout", "gap_min_frames", c.layout.gap_min_frames);
  u32("layout", "gap_max_frames", c.layout.gap_max_frames);

  for (const auto& [sec, body] : tree) {
    auto it = known.find(sec);
    if (it == known.end()) throw ConfigError("config: unknown section [" + sec + "]");
    for (const auto& kv : body)
      if (!it->second.count(kv.first)) throw ConfigError("config: unknown key " + sec + "." + kv.first);
  }
  c.check();
  return c;
}

inline BuildConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return config_from_ini(in);
}

inline std::uint64_t config_hash(const BuildConfig& c) { return fnv1a64(config_to_ini(c)); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------- manifests

enum class Stage { Post1Tts, Post1Asr, Sft1, Sft2, Sft2Duplex };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Post1Tts: return "post1-tts";
    case Stage::Post1Asr: return "post1-asr";
    case Stage::Sft1: return "sft1";
    case Stage::Sft2: return "sft2";
    case Stage::Sft2Duplex: return "sft2-duplex";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::Post1Tts, Stage::Post1Asr, Stage::Sft1, Stage::Sft2, Stage::Sft2Duplex})
    if (s == to_string(st)) return st;
  throw std::invalid_argument("unknown stage '" + s + "'");
}

inline bool is_pair_stage(Stage s) { return s == Stage::Post1Tts || s == Stage::Post1Asr; }

/// Training-stage name and stream format each stage produces.
struct StageInfo {
  const char* training_stage;
  const char* data_format;
};

inline StageInfo stage_info(Stage s) {
  switch (s) {
    case Stage::Post1Tts: return {"post-training", "TTS+ASR (TTS half)"};
    case Stage::Post1Asr: return {"post-training", "TTS+ASR (ASR half)"};
    case Stage::Sft1: return {"fine-tuning-1", "ASR-Response-TTS"};
    case Stage::Sft2: return {"fine-tuning-2", "Response-TTS"};
    case Stage::Sft2Duplex: return {"fine-tuning-2", "Response-TTS with free user inputs"};
  }
  return {"?", "?"};
}

struct ManifestTurn {
  Speaker speaker = Speaker::User;
  std::string wav_path;
  std::vector<TokenId> transcript;
  std::optional<std::uint64_t> onset_hint;
};

/// One manifest line: a sentence pair (post-training) or a dialog (SFT).
struct ManifestRecord {
  std::size_t line = 0;  // 1-based
  std::string id;
  std::string lang;
  std::string wav_path;  // pairs
  std::vector<TokenId> transcript;  // pairs
  std::vector<ManifestTurn> turns;  // dialogs
};

namespace detail {

inline std::vector<TokenId> transcript_of(const nlohmann::json& j, const StreamConfig& cfg, bool required) {
  if (j.contains("transcript_token_ids")) {
    std::vector<TokenId> out;
    for (const auto& v : j.at("transcript_token_ids")) {
      if (!v.is_number_unsigned()) throw ManifestError("transcript_token_ids must hold unsigned integers");
      const auto id = v.get<std::uint64_t>();
      if (id >= cfg.text_vocab_base)
        throw ManifestError("transcript token " + std::to_string(id) + " outside the base vocabulary");
      out.push_back(static_cast<TokenId>(id));
    }
    return out;
  }
  if (j.contains("transcript_text")) {
    const std::string tok = j.value("tokenizer", std::string("byte"));
    if (tok != "byte") throw ManifestError("unsupported tokenizer '" + tok + "'");
    if (cfg.text_vocab_base < 256) throw ManifestError("byte tokenizer needs text_vocab_base >= 256");
    const auto text = j.at("transcript_text").get<std::string>();
    std::vector<TokenId> out;
    for (unsigned char ch : text) out.push_back(ch);
    return out;
  }
  if (required) throw ManifestError("record needs transcript_token_ids or transcript_text");
  return {};
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path q(p);
  return (q.is_absolute() ? q : base / q).lexically_normal().string();
}

}  // namespace detail

struct ManifestLineError {
  std::size_t line = 0;
  std::string id;
  std::string message;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::vector<ManifestLineError> errors;
  std::size_t total() const { return records.size() + errors.size(); }
};

/// Parses JSON-lines; malformed lines become per-record errors. Blank lines
/// are skipped. WAV paths are resolved against the manifest's directory.
inline Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, bool dialogs,
                               const StreamConfig& cfg) {
  Manifest m;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestRecord r;
    r.line = line;
    try {
      const auto j = nlohmann::json::parse(text);
      if (!j.is_object()) throw ManifestError("line is not a JSON object");
      r.lang = j.value("lang", std::string());
      if (!dialogs) {
        r.id = j.at("source_id").get<std::string>();
        r.wav_path = detail::resolve(base_dir, j.at("wav_path").get<std::string>());
        r.transcript = detail::transcript_of(j, cfg, true);
      } else {
        r.id = j.at("dialog_id").get<std::string>();
        for (const auto& t : j.at("turns")) {
          ManifestTurn mt;
          const auto who = t.at("speaker").get<std::string>();
          if (who == "user") mt.speaker = Speaker::User;
          else if (who == "model") mt.speaker = Speaker::Model;
          else throw ManifestError("speaker must be user or model, got '" + who + "'");
          mt.wav_path = detail::resolve(base_dir, t.at("wav_path").get<std::string>());
          mt.transcript = detail::transcript_of(t, cfg, mt.speaker == Speaker::Model);
          if (t.contains("onset_hint_frames")) mt.onset_hint = t.at("onset_hint_frames").get<std::uint64_t>();
          r.turns.push_back(std::move(mt));
        }
      }
      m.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      m.errors.push_back({line, r.id, e.what()});
    }
  }
  return m;
}

inline Manifest load_manifest(const std::string& path, bool dialogs, const StreamConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path);
  return parse_manifest(in, std::filesystem::path(path).parent_path(), dialogs, cfg);
}

/// Noise pool: JSON-lines of {"wav_path", "category"?}; order is kept.
inline std::vector<Waveform> load_noise_pool(const std::string& path, std::uint32_t sample_rate) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open noise manifest " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<Waveform> pool;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      if (j.contains("category")) {
        const auto cat = j.at("category").get<std::string>();
        if (cat != "environmental" && cat != "speech") throw ManifestError("unknown noise category '" + cat + "'");
      }
      pool.push_back(read_wav(detail::resolve(base, j.at("wav_path").get<std::string>()), sample_rate));
    } catch (const std::exception& e) {
      throw ManifestError("noise manifest line " + std::to_string(line) + ": " + e.what());
    }
  }
  if (pool.empty()) throw ManifestError("noise manifest " + path + " lists no clips");
  return pool;
}

// -------------------------------------------------------------------- build

struct BuildJob {
  Stage stage = Stage::Post1Tts;
  std::string manifest;
  std::string out_dir;
  BuildConfig config;
  std::uint64_t seed = 0;
  bool force = false;
  std::optional<std::string> noise_manifest;  // SFT stages only
};

struct BuildSummary {
  Stage stage = Stage::Post1Tts;
  std::size_t records = 0;
  std::size_t failed_records = 0;
  std::size_t sequences = 0;
  std::uint64_t total_frames = 0;
  std::array<std::uint64_t, kNumSupervisionClasses> class_counts{};
  double total_weight = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::size_t gain_applied = 0;
  std::size_t leakage_applied = 0;
  std::size_t cutoffs = 0;
  std::vector<std::string> files;

  /// At most 1% of records may fail.
  bool ok() const { return failed_records * 100 <= records; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    const auto info = stage_info(stage);
    j["stage"] = to_string(stage);
    j["training_stage"] = info.training_stage;
    j["data_format"] = info.data_format;
    j["records"] = records;
    j["failed_records"] = failed_records;
    j["ok"] = ok();
    j["sequences"] = sequences;
    j["total_frames"] = total_frames;
    nlohmann::json counts;
    for (std::size_t i = 0; i < kNumSupervisionClasses; ++i)
      counts[to_string(static_cast<SupervisionClass>(i))] = class_counts[i];
    j["class_counts"] = counts;
    j["total_weight"] = total_weight;
    j["seed"] = seed;
    j["config_hash"] = hex64(config_hash);
    j["augmentation"] = {{"user_gain_applied", gain_applied}, {"leakage_applied", leakage_applied}};
    j["cutoffs"] = cutoffs;
    j["files"] = files;
    return j;
  }
};

class BuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool is_artifact(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  const auto name = p.filename().string();
  return ext == ".fdse" || ext == ".wts" || name == "summary.json" || name == "errors.jsonl";
}

inline void prepare_out_dir(const std::string& dir, bool force) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> present;
  for (const auto& e : fs::directory_iterator(dir)) present.push_back(e.path());
  if (present.empty()) return;
  if (!force) throw BuildError("output directory " + dir + " is not empty (use --force)");
  for (const auto& p : present)
    if (!is_artifact(p)) throw BuildError("refusing to overwrite " + p.string() + ": not a dataset artifact");
  for (const auto& p : present) fs::remove(p);
}

inline std::string seq_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%05zu", prefix, i);
  return buf;
}

/// Decodes both audio channels, mixes speak into listen and re-encodes only
/// the listen hops that changed.
inline bool apply_leakage(FrameSequence& seq, const CodecInterface& codec, const AugmentSpec& spec, Rng& rng) {
  const StreamConfig& cfg = seq.config;
  std::vector<Codes> listen, speak;
  for (const Frame& f : seq.frames) {
    listen.push_back(f.listen);
    speak.push_back(f.speak);
  }
  const Waveform lw = codec.decode(listen);
  const Waveform sw = codec.decode(speak);
  auto res = speech_leakage(lw, sw, spec, rng);
  if (!res.trace.applied) return false;
  const std::size_t hop = cfg.hop_samples;
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    std::span<const float> before(lw.samples.data() + t * hop, hop);
    std::span<const float> after(res.audio.samples.data() + t * hop, hop);
    if (!std::equal(before.begin(), before.end(), after.begin())) seq.frames[t].listen = codec.encode_hop(after);
  }
  seq.relabel();
  return true;
}

}  // namespace detail

/// Runs one stage end to end. Records are processed in manifest order by a
/// single thread so outputs are byte-identical for a given (manifest, config,
/// seed). Writes <name>.fdse + <name>.wts per sequence, summary.json and
/// errors.jsonl.
inline BuildSummary build_dataset(const BuildJob& job) {
  namespace fs = std::filesystem;
  BuildConfig cfg = job.config;
  cfg.check();
  cfg.packing.seed = job.seed;
  cfg.layout.seed = job.seed;
  cfg.interruption.seed = job.seed;
  cfg.augment.seed = job.seed;
  const StreamConfig& sc = cfg.stream;

  const bool dialogs = !is_pair_stage(job.stage);
  Manifest manifest = load_manifest(job.manifest, dialogs, sc);
  std::optional<std::vector<Waveform>> noise;
  if (job.noise_manifest) {
    if (!dialogs) throw BuildError("noise augmentation applies to SFT stages only");
    noise = load_noise_pool(*job.noise_manifest, sc.sample_rate_hz);
  }
  detail::prepare_out_dir(job.out_dir, job.force);

  const PseudoCodec codec(sc);
  BuildSummary sum;
  sum.stage = job.stage;
  sum.records = manifest.total();
  sum.seed = job.seed;
  sum.config_hash = config_hash(job.config);
  std::vector<ManifestLineError> errors = manifest.errors;

  std::vector<FrameSequence> out;
  std::vector<FrameSequence> singles;
  for (const ManifestRecord& r : manifest.records) {
    try {
      if (!dialogs) {
        AlignedPair pair{r.transcript, codec.encode(read_wav(r.wav_path, sc.sample_rate_hz)), r.id};
        FrameSequence s = job.stage == Stage::Post1Tts ? align_tts(pair, sc) : align_asr(pair, sc);
        if (s.size() > cfg.packing.target_len) throw OversizeError(r.id, s.size(), cfg.packing.target_len);
        singles.push_back(std::move(s));
        continue;
      }
      DialogScript d;
      d.dialog_id = r.id;
      Rng aug_rng(derive_seed(job.seed, r.id, "augment"));
      for (const ManifestTurn& mt : r.turns) {
        Waveform w = read_wav(mt.wav_path, sc.sample_rate_hz);
        if (mt.speaker == Speaker::User && noise) {
          auto res = augment_user_audio(w, *noise, cfg.augment, aug_rng);
          sum.gain_applied += res.trace.gain_applied ? 1 : 0;
          w = std::move(res.audio);
        }
        d.turns.push_back(Turn{mt.speaker, mt.transcript, codec.encode(w), mt.onset_hint});
      }
      FrameSequence s;
      switch (job.stage) {
        case Stage::Sft1: s = build_asr_response_tts(d, sc, cfg.layout); break;
        case Stage::Sft2: s = build_response_tts(d, sc, cfg.layout); break;
        default:
          // Single-exchange dialogs have nothing to interrupt.
          s = d.exchanges() >= 2 ? inject_interruptions(d, cfg.interruption, sc, cfg.layout)
                                 : build_response_tts(d, sc, cfg.layout);
          Rng leak_rng(derive_seed(job.seed, r.id, "leakage"));
          if (detail::apply_leakage(s, codec, cfg.augment, leak_rng)) ++sum.leakage_applied;
          break;
      }
      if (s.size() > sc.max_seq_len) throw OversizeError(r.id, s.size(), sc.max_seq_len);
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      errors.push_back({r.line, r.id, e.what()});
    }
  }
  if (!dialogs) out = pack(singles, cfg.packing);

  std::sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) { return a.line < b.line; });
  sum.failed_records = errors.size();

  for (std::size_t i = 0; i < out.size(); ++i) {
    const FrameSequence& s = out[i];
    const std::string name = detail::seq_name(dialogs ? "dialog" : "pack", i);
    save_frames((fs::path(job.out_dir) / (name + ".fdse")).string(), s);
    const WeightMap wm = weight_map(s, cfg.loss);
    write_file_bytes((fs::path(job.out_dir) / (name + ".wts")).string(), serialize_weights(wm));
    const auto counts = count_classes(s);
    for (std::size_t c = 0; c < kNumSupervisionClasses; ++c) sum.class_counts[c] += counts[c];
    sum.total_weight += wm.total();
    sum.total_frames += s.size();
    for (const Marker& m : s.markers) sum.cutoffs += m.kind == MarkerKind::Cutoff ? 1 : 0;
    sum.files.push_back(name + ".fdse");
  }
  sum.sequences = out.size();

  std::ofstream ej(fs::path(job.out_dir) / "errors.jsonl", std::ios::trunc);
  for (const auto& e : errors)
    ej << nlohmann::json{{"line", e.line}, {"id", e.id}, {"error", e.message}}.dump() << '\n';
  std::ofstream sj(fs::path(job.out_dir) / "summary.json", std::ios::trunc);
  sj << sum.to_json().dump(2) << '\n';
  return sum;
}

// ----------------------------------------------------------------- validate

struct DatasetIssue {
  std::string file;
  std::optional<std::size_t> step;
  std::string rule;
  std::string detail;

  std::string describe() const {
    std::string s = file;
    if (step) s += " step " + std::to_string(*step);
    return s + ": [" + rule + "] " + detail;
  }
};

struct DatasetReport {
  std::size_t files = 0;
  std::uint64_t frames = 0;
  std::vector<DatasetIssue> issues;
  bool ok() const { return issues.empty(); }
};

/// Offset laws on the speak channel: acoustic codes trail the semantic code by
/// the acoustic delay (a cutoff may drop the trailing acoustic frame), and
/// each speech run starts `text_lead_steps` after the first token of a text run.
inline std::vector<DatasetIssue> check_offset_laws(const FrameSequence& seq, const std::string& file = {}) {
  std::vector<DatasetIssue> out;
  const StreamConfig& cfg = seq.config;
  const TokenId empty = cfg.empty_audio_id();
  const std::size_t K = cfg.num_codebooks, d = cfg.acoustic_delay_steps, lead = cfg.text_lead_steps;
  const std::size_t n = seq.size();
  std::set<std::size_t> cutoffs;
  for (const Marker& m : seq.markers)
    if (m.kind == MarkerKind::Cutoff) cutoffs.insert(static_cast<std::size_t>(m.step));

  auto semantic = [&](std::size_t t) { return seq.frames[t].speak[0] != empty; };
  auto acoustic_count = [&](std::size_t t) {
    std::size_t c = 0;
    for (std::size_t k = 1; k < K; ++k) c += seq.frames[t].speak[k] != empty ? 1 : 0;
    return c;
  };

  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t ac = acoustic_count(t);
    if (ac != 0 && ac != K - 1)
      out.push_back({file, t, "offset-acoustic", "acoustic codebooks partly empty"});
    if (ac != 0 && (t < d || !semantic(t - d)))
      out.push_back({file, t, "offset-acoustic", "acoustic codes without a semantic code " + std::to_string(d) +
                                                    " step(s) earlier"});
    if (semantic(t) && K > 1) {
      const std::size_t a = t + d;
      const bool cut = std::any_of(cutoffs.begin(), cutoffs.end(), [&](std::size_t c) { return c > t && c <= a; });
      if (!cut && (a >= n || acoustic_count(a) == 0))
        out.push_back({file, t, "offset-acoustic",
                       "semantic code without acoustic codes " + std::to_string(d) + " step(s) later"});
    }
    if (semantic(t) && (t == 0 || !semantic(t - 1))) {
      if (t < lead) {
        out.push_back({file, t, "offset-lead", "speech starts before the text lead"});
        continue;
      }
      const std::size_t s = t - lead;
      const bool first = cfg.is_ordinary_text(seq.frames[s].text) &&
                         (s == 0 || !cfg.is_ordinary_text(seq.frames[s - 1].text));
      if (!first)
        out.push_back({file, t, "offset-lead",
                       "speech run does not start " + std::to_string(lead) + " steps after its first text token"});
    }
  }
  return out;
}

/// Validates every *.fdse file in `dir` (sorted by name).
inline DatasetReport validate_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".fdse") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  DatasetReport rep;
  std::optional<StreamConfig> first_cfg;
  std::string first_name;
  for (const auto& p : files) {
    const std::string name = p.filename().string();
    ++rep.files;
    FrameSequence seq;
    try {
      seq = load_frames(p.string());
    } catch (const FormatError& e) {
      std::optional<std::size_t> step;
      if (e.frame()) step = static_cast<std::size_t>(*e.frame());
      rep.issues.push_back({name, step, "format", e.what()});
      continue;
    } catch (const std::exception& e) {
      rep.issues.push_back({name, std::nullopt, "unreadable", e.what()});
      continue;
    }
    rep.frames += seq.size();
    if (!first_cfg) {
      first_cfg = seq.config;
      first_name = name;
    } else if (!(seq.config == *first_cfg)) {
      rep.issues.push_back({name, std::nullopt, "config-mismatch", "stream config differs from " + first_name});
    }
    for (const Violation& v : validate(seq)) rep.issues.push_back({name, v.frame, "frame", v.describe()});
    for (auto& i : check_offset_laws(seq, name)) rep.issues.push_back(std::move(i));

    const fs::path wts = fs::path(p).replace_extension(".wts");
    if (fs::exists(wts)) {
      const auto bytes = read_file_bytes(wts.string());
      if (bytes.size() != seq.size() * seq.config.slots_per_frame() * 4)
        rep.issues.push_back({wts.filename().string(), std::nullopt, "weights",
                              "weight map size does not match " + name});
    }
  }
  return rep;
}

}  // namespace fdse

#endif  // FDSE_DATASET_HPP
