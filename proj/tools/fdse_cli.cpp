// fdse: dataset building, validation, augmentation, runtime simulation,
// serving and cost analysis.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fdse/fdse.hpp"

using namespace fdse;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

// Bad input from the command line or the files it names.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto log = spdlog::stderr_color_mt("fdse");
  spdlog::set_default_logger(log);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("FDSE_LOG_LEVEL")) {
    const auto l = spdlog::level::from_str(lvl);
    // from_str maps unknown names to off; only accept real ones
    if (l != spdlog::level::off || std::string(lvl) == "off") spdlog::set_level(l);
    else spdlog::warn("ignoring FDSE_LOG_LEVEL={}", lvl);
  }
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

BuildConfig config_or_default(const std::string& path) {
  if (path.empty()) return BuildConfig{};
  return load_config(path);
}

// ---------------------------------------------------------------- build
struct BuildArgs {
  std::string stage, format, manifest, out, config, noise;
  std::uint64_t seed = 0;
  bool force = false;
  std::optional<double> p_interrupt, reaction_delay_s;
};

Stage stage_from(const BuildArgs& a) {
  if (!a.stage.empty()) return parse_stage(a.stage);
  static const std::map<std::string, Stage> formats{{"tts", Stage::Post1Tts},
                                                    {"asr", Stage::Post1Asr},
                                                    {"asr-response-tts", Stage::Sft1},
                                                    {"response-tts", Stage::Sft2},
                                                    {"full-duplex", Stage::Sft2Duplex}};
  const auto it = formats.find(a.format);
  if (it == formats.end()) throw UsageError("unknown format '" + a.format + "'");
  return it->second;
}

int cmd_build(const BuildArgs& a) {
  BuildJob job;
  try {
    job.stage = stage_from(a);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  job.manifest = a.manifest;
  job.out_dir = a.out;
  job.config = config_or_default(a.config);
  if (a.p_interrupt) job.config.interruption.p_interrupt = *a.p_interrupt;
  if (a.reaction_delay_s) job.config.interruption.reaction_delay_s = *a.reaction_delay_s;
  job.config.check();
  job.seed = a.seed;
  job.force = a.force;
  if (!a.noise.empty()) job.noise_manifest = a.noise;

  spdlog::info("building {} from {} into {}", to_string(job.stage), job.manifest, job.out_dir);
  const auto sum = build_dataset(job);
  for (const auto& f : sum.files) spdlog::debug("wrote {}", f);
  if (sum.failed_records > 0)
    spdlog::warn("{} of {} records failed, see errors.jsonl", sum.failed_records, sum.records);
  print_json(sum.to_json());
  if (!sum.ok()) {
    spdlog::error("error budget exceeded");
    return kFailed;
  }
  return kOk;
}

// ---------------------------------------------------------------- validate
int cmd_validate(const std::string& dir, bool as_json) {
  if (!std::filesystem::is_directory(dir)) throw UsageError("not a directory: " + dir);
  const auto rep = validate_dataset(dir);
  if (as_json) {
    json issues = json::array();
    for (const auto& i : rep.issues) {
      json j{{"file", i.file}, {"rule", i.rule}, {"detail", i.detail}};
      if (i.step) j["step"] = *i.step;
      issues.push_back(j);
    }
    print_json({{"files", rep.files}, {"frames", rep.frames}, {"ok", rep.ok()}, {"issues", issues}});
  } else {
    for (const auto& i : rep.issues) std::cout << i.describe() << "\n";
    std::cout << rep.files << " files, " << rep.frames << " frames, " << rep.issues.size() << " issues\n";
  }
  return rep.ok() ? kOk : kFailed;
}

// ---------------------------------------------------------------- augment
AugmentSpec spec_from_json(const std::string& path) {
  AugmentSpec s;
  if (path.empty()) return s;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  auto range = [&](const char* key, DbRange& r) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw UsageError(std::string(key) + " must be [low, high]");
    r = {v[0].get<double>(), v[1].get<double>()};
  };
  static const std::set<std::string> known{"p_gain", "gain_db_range", "min_loudness_db", "noise_db_range",
                                           "p_noise_silence", "p_leakage", "leakage_gain_range",
                                           "leakage_delay_range_s", "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw UsageError("unknown augment field '" + k + "'");
  s.p_gain = j.value("p_gain", s.p_gain);
  s.min_loudness_db = j.value("min_loudness_db", s.min_loudness_db);
  s.p_noise_silence = j.value("p_noise_silence", s.p_noise_silence);
  s.p_leakage = j.value("p_leakage", s.p_leakage);
  s.seed = j.value("seed", s.seed);
  range("gain_db_range", s.gain_db_range);
  range("noise_db_range", s.noise_db_range);
  range("leakage_gain_range", s.leakage_gain_range);
  range("leakage_delay_range_s", s.leakage_delay_range_s);
  s.check();
  return s;
}

struct AugmentArgs {
  std::string in, out, noise, speak, spec;
  std::uint64_t seed = 0;
};

int cmd_augment(const AugmentArgs& a) {
  const AugmentSpec spec = spec_from_json(a.spec);
  const Waveform user = read_wav(a.in);
  std::vector<Waveform> pool;
  if (!a.noise.empty()) pool = load_noise_pool(a.noise, user.sample_rate_hz);
  const std::string id = std::filesystem::path(a.in).filename().string();
  Rng rng(derive_seed(a.seed, id, "augment"));
  auto res = augment_user_audio(user, pool, spec, rng);
  json trace{{"gain_applied", res.trace.gain_applied},
             {"gain_db", res.trace.gain_db},
             {"floored", res.trace.floored},
             {"final_user_db", res.trace.final_user_db}};
  json clips = json::array();
  for (const auto& c : res.trace.clips)
    clips.push_back({{"pool_index", c.pool_index},
                     {"offset", c.offset},
                     {"length", c.length},
                     {"target_db", c.target_db},
                     {"scaled_db", c.scaled_db},
                     {"silenced", c.silenced}});
  trace["noise_clips"] = clips;
  Waveform out = std::move(res.audio);
  if (!a.speak.empty()) {
    Rng lr(derive_seed(a.seed, id, "leakage"));
    auto leak = speech_leakage(out, read_wav(a.speak, user.sample_rate_hz), spec, lr);
    trace["leakage"] = {{"applied", leak.trace.applied},
                        {"gain", leak.trace.gain},
                        {"delay_s", leak.trace.delay_s},
                        {"delay_samples", leak.trace.delay_samples}};
    out = std::move(leak.audio);
  }
  write_wav(a.out, out);
  trace["output_db"] = rms_db(out);
  print_json(trace);
  return kOk;
}

// ---------------------------------------------------------------- simulate
struct SimArgs {
  std::string model = "echo", script, listen, wav, out;
  bool realtime = false, fast = false, pass_through = false;
  std::uint64_t reaction = 6;
};

int cmd_simulate(const SimArgs& a) {
  if (a.model == "scripted" && a.script.empty()) throw UsageError("--model scripted needs --script");
  std::optional<FrameSequence> script;
  if (!a.script.empty()) script = load_frames(a.script);
  const StreamConfig cfg = script ? script->config : StreamConfig{};

  std::optional<FrameSequence> listen_seq;
  std::optional<Waveform> wav;
  std::optional<PseudoCodec> codec;
  std::unique_ptr<ListenSource> src;
  if (!a.wav.empty()) {
    wav = read_wav(a.wav, cfg.sample_rate_hz);
    codec.emplace(cfg);
    src = std::make_unique<WaveformListenSource>(*wav, *codec);
  } else {
    if (!a.listen.empty()) listen_seq = load_frames(a.listen);
    else if (script) listen_seq = *script;
    else throw UsageError("need --listen, --wav or --script for listen input");
    if (!(listen_seq->config == cfg)) throw UsageError("listen input and script use different stream configs");
    src = std::make_unique<SequenceListenSource>(*listen_seq);
  }

  std::unique_ptr<DuplexModel> model;
  if (a.model == "echo") model = std::make_unique<EchoModel>(cfg);
  else model = std::make_unique<ScriptedModel>(*script);

  RuntimePolicy pol;
  pol.realtime = a.realtime;
  pol.reaction_delay_frames = a.reaction;
  pol.gating = a.pass_through ? Gating::PassThrough : Gating::TurnTaking;
  if (script && a.wav.empty()) {
    std::vector<std::uint64_t> onsets;
    for (const auto& m : script->markers)
      if (m.kind == MarkerKind::UserOnset) onsets.push_back(m.step);
    if (!onsets.empty()) pol.onset_markers = onsets;
  }

  spdlog::info("simulating {} model, {} mode", a.model, a.realtime ? "realtime" : "fast");
  const auto r = run(*model, *src, cfg, pol, [](std::uint64_t k, const Frame& f, const StepEvents& ev) {
    if (ev.cutoff) spdlog::debug("step {}: cutoff", k);
    if (ev.user_onset) spdlog::debug("step {}: user onset", k);
    spdlog::trace("step {}: text {}", k, f.text);
  });
  if (!a.out.empty()) save_frames(a.out, r.output);

  json j{{"steps", r.output.size()}, {"mean_step_period_ms", r.latency.mean_step_period_ms}};
  j["first_speech_latency_steps"] =
      r.latency.first_speech_latency_steps ? json(*r.latency.first_speech_latency_steps) : json(nullptr);
  j["cutoff_latency_steps"] = r.latency.cutoff_latency_steps;
  std::size_t cuts = 0;
  for (const auto& m : r.output.markers) cuts += m.kind == MarkerKind::Cutoff;
  j["cutoffs"] = cuts;
  if (script && a.listen.empty() && a.wav.empty())
    j["matches_script"] = r.output.frames == script->frames;
  print_json(j);
  return kOk;
}

// ---------------------------------------------------------------- serve
struct ServeArgs {
  std::string listen = "127.0.0.1:7000", model = "echo", script;
  bool once = false, pass_through = false;
  int stall_ms = 1000;
};

int cmd_serve(const ServeArgs& a) {
  Endpoint ep;
  try {
    ep = Endpoint::parse(a.listen);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::optional<FrameSequence> script;
  if (a.model == "scripted") {
    if (a.script.empty()) throw UsageError("--model scripted needs --script");
    script = load_frames(a.script);
  }
  const StreamConfig cfg = script ? script->config : StreamConfig{};
  ModelFactory factory = [&]() -> std::unique_ptr<DuplexModel> {
    if (script) return std::make_unique<ScriptedModel>(*script);
    return std::make_unique<EchoModel>(cfg);
  };
  RuntimePolicy pol;
  pol.gating = a.pass_through ? Gating::PassThrough : Gating::TurnTaking;
  DuplexServer server(cfg, factory, pol, std::chrono::milliseconds(a.stall_ms));
  const auto port = server.bind(ep);
  spdlog::info("listening on {}:{}", ep.host, port);
  auto report = [](const SessionStats& s) {
    if (s.error) spdlog::warn("session ended with error: {}", s.error_text);
    spdlog::info("session: {} frames in, {} out", s.frames_in, s.frames_out);
  };
  if (a.once) {
    if (auto s = server.serve_one()) report(*s);
    return kOk;
  }
  server.serve(report);
  return kOk;
}

// ---------------------------------------------------------------- analyze
struct AnalyzeArgs {
  double duration_s = 60.0;
  std::uint64_t budget = 8192;
  std::uint32_t channels = 17;
  std::string csv, frames;
  double csv_step = 1.0;
  bool as_json = false;
};

json text_stats_json(const TextChannelStats& s) {
  return {{"length", s.length},       {"ordinary_tokens", s.ordinary_tokens}, {"longest_run", s.longest_run},
          {"runs", s.runs},           {"wait_count", s.wait_count},           {"pad_count", s.pad_count},
          {"wait_fraction", s.wait_fraction}, {"pad_fraction", s.pad_fraction}};
}

int cmd_analyze(const AnalyzeArgs& a) {
  const StreamConfig cfg;
  CostReport r;
  try {
    r = context_growth(a.duration_s, cfg, a.channels, a.budget);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  json j{{"duration_s", r.duration_s},
         {"channels", r.channels},
         {"native_ctx_len", r.native_ctx_len},
         {"tdm_ctx_len", r.tdm_ctx_len},
         {"ctx_ratio", r.native_ctx_len ? double(r.tdm_ctx_len) / double(r.native_ctx_len) : 0.0},
         {"attention_ops_native", r.attention_ops_native},
         {"attention_ops_tdm", r.attention_ops_tdm},
         {"budget_tokens", r.budget_tokens},
         {"max_audio_s_native", r.max_audio_s_native},
         {"max_audio_s_tdm", r.max_audio_s_tdm}};
  if (!a.frames.empty()) j["text_channel"] = text_stats_json(text_channel_stats(load_frames(a.frames)));
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw UsageError("cannot write " + a.csv);
    out << context_csv(a.duration_s, a.csv_step, cfg, a.channels);
  }
  if (a.as_json) {
    print_json(j);
  } else {
    std::printf("%.3f s: native %llu steps, tdm %llu positions (x%u)\n", r.duration_s,
                static_cast<unsigned long long>(r.native_ctx_len), static_cast<unsigned long long>(r.tdm_ctx_len),
                r.channels);
    std::printf("budget %llu tokens: native %.2f s, tdm %.2f s\n", static_cast<unsigned long long>(r.budget_tokens),
                r.max_audio_s_native, r.max_audio_s_tdm);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Full-duplex speech dataset and runtime tools"};
  app.require_subcommand(1);

  BuildArgs ba;
  auto* build = app.add_subcommand("build", "Lay out a manifest into frame files");
  auto* stage_opt = build->add_option("--stage", ba.stage, "post1-tts|post1-asr|sft1|sft2|sft2-duplex");
  auto* format_opt =
      build->add_option("--format", ba.format, "tts|asr|asr-response-tts|response-tts|full-duplex");
  stage_opt->excludes(format_opt);
  build->add_option("--manifest", ba.manifest, "JSON-lines manifest")->required();
  build->add_option("--out", ba.out, "Output directory")->required();
  build->add_option("--config", ba.config, "INI config file");
  build->add_option("--seed", ba.seed, "Master seed");
  build->add_option("--noise", ba.noise, "Noise pool manifest (dialog stages)");
  build->add_option("--p-interrupt", ba.p_interrupt, "Interruption probability");
  build->add_option("--reaction-delay-s", ba.reaction_delay_s, "Interruption reaction delay");
  build->add_flag("--force", ba.force, "Overwrite a previous build");

  std::string vdir;
  bool vjson = false;
  auto* validate = app.add_subcommand("validate", "Check every frame file in a build directory");
  validate->add_option("dir", vdir, "Build directory")->required();
  validate->add_flag("--json", vjson, "JSON report");

  AugmentArgs aa;
  auto* augment = app.add_subcommand("augment", "Apply gain, noise and optional leakage to one WAV");
  augment->add_option("--in", aa.in, "User utterance")->required()->check(CLI::ExistingFile);
  augment->add_option("--out", aa.out, "Output WAV")->required();
  augment->add_option("--noise", aa.noise, "Noise pool manifest")->check(CLI::ExistingFile);
  augment->add_option("--speak", aa.speak, "Model speech to leak into the input")->check(CLI::ExistingFile);
  augment->add_option("--spec", aa.spec, "Augmentation spec JSON")->check(CLI::ExistingFile);
  augment->add_option("--seed", aa.seed, "Seed");

  SimArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run the duplex runtime over recorded input");
  simulate->add_option("--model", sa.model, "scripted|echo")->check(CLI::IsMember({"scripted", "echo"}));
  simulate->add_option("--script", sa.script, "Frame file replayed by the scripted model")->check(CLI::ExistingFile);
  simulate->add_option("--listen", sa.listen, "Frame file whose listen channel is the input")
      ->check(CLI::ExistingFile);
  simulate->add_option("--wav", sa.wav, "Raw input audio")->check(CLI::ExistingFile);
  simulate->add_option("--out", sa.out, "Write the output frames here");
  simulate->add_option("--reaction-frames", sa.reaction, "Interruption reaction delay in frames");
  auto* rt = simulate->add_flag("--realtime", sa.realtime, "Pace steps at the frame rate");
  auto* fast = simulate->add_flag("--fast", sa.fast, "Run as fast as possible (default)");
  rt->excludes(fast);
  simulate->add_flag("--pass-through", sa.pass_through, "Forward model output without turn-taking");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve the duplex protocol over TCP");
  serve->add_option("--listen", sv.listen, "host:port");
  serve->add_option("--model", sv.model, "scripted|echo")->check(CLI::IsMember({"scripted", "echo"}));
  serve->add_option("--script", sv.script, "Frame file for the scripted model")->check(CLI::ExistingFile);
  serve->add_option("--stall-ms", sv.stall_ms, "Disconnect clients idle this long")->check(CLI::PositiveNumber);
  serve->add_flag("--once", sv.once, "Serve a single session and exit");
  serve->add_flag("--pass-through", sv.pass_through, "Forward model output without turn-taking");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Context length and attention cost of the two schedules");
  analyze->add_option("--duration-s", an.duration_s, "Audio duration")->check(CLI::NonNegativeNumber);
  analyze->add_option("--budget", an.budget, "Token budget");
  analyze->add_option("--channels", an.channels, "Token slots per frame")->check(CLI::PositiveNumber);
  analyze->add_option("--csv", an.csv, "Write ctx-vs-time rows here");
  analyze->add_option("--csv-step", an.csv_step, "CSV row spacing in seconds")->check(CLI::PositiveNumber);
  analyze->add_option("--frames", an.frames, "Also report text-channel statistics of a frame file")
      ->check(CLI::ExistingFile);
  analyze->add_flag("--json", an.as_json, "JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*build) {
      if (ba.stage.empty() && ba.format.empty()) throw UsageError("build needs --stage or --format");
      return cmd_build(ba);
    }
    if (*validate) return cmd_validate(vdir, vjson);
    if (*augment) return cmd_augment(aa);
    if (*simulate) return cmd_simulate(sa);
    if (*serve) return cmd_serve(sv);
    if (*analyze) return cmd_analyze(an);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kUsage;
  } catch (const ManifestError& e) {
    spdlog::error("manifest: {}", e.what());
    return kUsage;
  } catch (const BuildError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailed;
  }
  return kUsage;
}
