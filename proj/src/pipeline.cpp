#include "mbssl/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <string>
#include <unordered_set>

#include "json.hpp"

#include "mbssl/error.hpp"
#include "mbssl/io.hpp"
#include "mbssl/parallel.hpp"
#include "mbssl/random.hpp"

namespace mbssl {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(PipelineMode mode) noexcept {
  return mode == PipelineMode::channel_aware ? "channel_aware" : "pooled_baseline";
}

// --- config -----------------------------------------------------------------------

void validate(const PipelineConfig& config) {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
  if (config.mode == PipelineMode::channel_aware) {
    if (config.k_wide == 0 || config.k_narrow == 0) fail("channel_aware needs k_wide, k_narrow > 0");
    if (config.offset && *config.offset < config.k_wide) {
      throw Error(Errc::OffsetTooSmall, "offset " + std::to_string(*config.offset) +
                                            " is below k_wide " + std::to_string(config.k_wide));
    }
  } else if (config.k_pooled == 0) {
    fail("pooled_baseline needs k_pooled > 0");
  }
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(config.beta >= 0.0 && config.beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (config.mask.span_length == 0) fail("mask span_length must be >= 1");
  if (!(config.mask.start_prob > 0.0 && config.mask.start_prob < 1.0)) {
    fail("mask start_prob must lie in (0, 1)");
  }
  validate(config.features, kWideRateHz);
}

std::string config_to_json(const PipelineConfig& c) {
  ordered_json j;
  j["mode"] = to_string(c.mode);
  j["k_wide"] = c.k_wide;
  j["k_narrow"] = c.k_narrow;
  j["k_pooled"] = c.k_pooled;
  j["offset"] = c.offset ? ordered_json(*c.offset) : ordered_json("auto");
  j["features"] = {{"n_mels", c.features.n_mels},       {"fft_size", c.features.fft_size},
                   {"f_min_hz", c.features.f_min_hz},   {"f_max_hz", c.features.f_max_hz},
                   {"window_ms", c.features.window_ms}, {"hop_ms", c.features.hop_ms}};
  j["mask"] = {{"span_length", c.mask.span_length}, {"start_prob", c.mask.start_prob}};
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["seed"] = c.seed;
  j["max_iters"] = c.max_iters;
  j["standardize"] = c.standardize;
  j["wrap_targets"] = c.wrap_targets;
  j["threads"] = c.threads;
  return j.dump(1) + "\n";
}

namespace {

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const ordered_json& j, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(Errc::InvalidConfig, "unknown config key '" + where + key + "'");
    }
  }
}

}  // namespace

PipelineConfig config_from_json(std::string_view text, PipelineConfig c) {
  try {
    const ordered_json j = ordered_json::parse(text);
    if (!j.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
    reject_unknown(j,
                   {"mode", "k_wide", "k_narrow", "k_pooled", "offset", "features", "mask", "alpha",
                    "beta", "seed", "max_iters", "standardize", "wrap_targets", "threads"},
                   "");
    if (j.contains("mode")) {
      const auto mode = j.at("mode").get<std::string>();
      if (mode == "channel_aware") {
        c.mode = PipelineMode::channel_aware;
      } else if (mode == "pooled_baseline") {
        c.mode = PipelineMode::pooled_baseline;
      } else {
        throw Error(Errc::InvalidConfig, "unknown mode '" + mode + "'");
      }
    }
    read_field(j, "k_wide", c.k_wide);
    read_field(j, "k_narrow", c.k_narrow);
    read_field(j, "k_pooled", c.k_pooled);
    if (j.contains("offset")) {
      const auto& o = j.at("offset");
      if (o.is_string() && o.get<std::string>() == "auto") {
        c.offset.reset();
      } else {
        c.offset = o.get<ClusterId>();
      }
    }
    if (j.contains("features")) {
      const auto& f = j.at("features");
      reject_unknown(f, {"n_mels", "fft_size", "f_min_hz", "f_max_hz", "window_ms", "hop_ms"},
                     "features.");
      read_field(f, "n_mels", c.features.n_mels);
      read_field(f, "fft_size", c.features.fft_size);
      read_field(f, "f_min_hz", c.features.f_min_hz);
      read_field(f, "f_max_hz", c.features.f_max_hz);
      read_field(f, "window_ms", c.features.window_ms);
      read_field(f, "hop_ms", c.features.hop_ms);
    }
    if (j.contains("mask")) {
      const auto& m = j.at("mask");
      reject_unknown(m, {"span_length", "start_prob"}, "mask.");
      read_field(m, "span_length", c.mask.span_length);
      read_field(m, "start_prob", c.mask.start_prob);
    }
    read_field(j, "alpha", c.alpha);
    read_field(j, "beta", c.beta);
    read_field(j, "seed", c.seed);
    read_field(j, "max_iters", c.max_iters);
    read_field(j, "standardize", c.standardize);
    read_field(j, "wrap_targets", c.wrap_targets);
    read_field(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("config JSON: ") + e.what());
  }
  return c;
}

// --- manifest ---------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cells;
  while (true) {
    const auto tab = line.find('\t');
    cells.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line.remove_prefix(tab + 1);
  }
  return cells;
}

}  // namespace

std::vector<UtteranceRecord> parse_manifest(std::string_view text,
                                            const std::filesystem::path& base_dir) {
  const auto lines = split_lines(text);
  if (lines.empty() || split_tabs(lines.front()) !=
                           std::vector<std::string_view>{"utt_id", "path", "channel", "num_frames"}) {
    throw Error(Errc::MalformedFile, "manifest must start with header utt_id\\tpath\\tchannel\\tnum_frames");
  }
  std::vector<UtteranceRecord> records;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_tabs(lines[i]);
    const std::string where = "manifest line " + std::to_string(i + 1);
    if (cells.size() != 4) throw Error(Errc::MalformedFile, where + ": expected 4 columns");
    UtteranceRecord rec;
    rec.utt_id = std::string(cells[0]);
    if (rec.utt_id.empty()) throw Error(Errc::MalformedFile, where + ": empty utt_id");
    if (!seen.insert(rec.utt_id).second) {
      throw Error(Errc::MalformedFile, where + ": duplicate utt_id '" + rec.utt_id + "'");
    }
    rec.path = std::filesystem::path(std::string(cells[1]));
    if (rec.path.is_relative() && !base_dir.empty()) rec.path = base_dir / rec.path;
    const auto channel = parse_channel(cells[2]);
    if (!channel) {
      throw Error(Errc::MalformedFile, where + ": channel must be wide or narrow");
    }
    rec.channel = *channel;
    const std::string_view frames = cells[3];
    if (!frames.empty() && frames != "-" && frames != "0") {
      std::size_t n = 0;
      auto [end, ec] = std::from_chars(frames.data(), frames.data() + frames.size(), n);
      if (ec != std::errc{} || end != frames.data() + frames.size()) {
        throw Error(Errc::MalformedFile, where + ": bad num_frames");
      }
      rec.num_frames = n;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

std::string format_manifest(std::span<const UtteranceRecord> records) {
  std::string out = "utt_id\tpath\tchannel\tnum_frames\n";
  for (const auto& r : records) {
    out += r.utt_id + '\t' + r.path.generic_string() + '\t' + std::string(to_string(r.channel)) +
           '\t' + (r.num_frames ? std::to_string(*r.num_frames) : std::string("-")) + '\n';
  }
  return out;
}

// --- features -----------------------------------------------------------------------

namespace {

FeatureMatrix decode_features(const UtteranceRecord& record, const MelFilterbankConfig& cfg) {
  if (record.path.extension() == ".fmx") {
    FeatureMatrix f;
    f.values = read_fmx_file(record.path);
    f.frame_hop_ms = cfg.hop_ms;
    f.frame_window_ms = cfg.window_ms;
    f.source_utt_id = record.utt_id;
    return f;
  }
  AudioBuffer audio = read_wav_file(record.path);
  if (audio.sample_rate_hz != native_rate(record.channel)) {
    throw Error(Errc::ChannelMismatch,
                "declared " + std::string(to_string(record.channel)) + " but file is " +
                    std::to_string(audio.sample_rate_hz) + " Hz");
  }
  // Both channels are featurized at 16 kHz so frame rate and dimension agree.
  if (audio.sample_rate_hz != kWideRateHz) audio = resample(audio, kWideRateHz);
  return logmel(audio, cfg, record.utt_id);
}

}  // namespace

FeatureMatrix load_utterance_features(const UtteranceRecord& record,
                                      const MelFilterbankConfig& cfg) {
  try {
    FeatureMatrix f = decode_features(record, cfg);
    if (record.num_frames && *record.num_frames != f.num_frames()) {
      throw Error(Errc::MalformedFile, "manifest says " + std::to_string(*record.num_frames) +
                                           " frames, features have " +
                                           std::to_string(f.num_frames()));
    }
    return f;
  } catch (const Error& e) {
    throw Error(e.code(), "utterance '" + record.utt_id + "': " + e.what());
  }
}

std::vector<FeatureMatrix> load_all_features(std::span<const UtteranceRecord> records,
                                             const MelFilterbankConfig& cfg, unsigned threads) {
  std::vector<FeatureMatrix> out(records.size());
  parallel_for(records.size(), threads,
               [&](std::size_t i) { out[i] = load_utterance_features(records[i], cfg); });
  if (!out.empty()) {
    const std::size_t dim = out.front().dim();
    for (const auto& f : out) {
      if (f.dim() != dim) {
        throw Error(Errc::DimensionMismatch, "utterance '" + f.source_utt_id +
                                                 "' has feature dimension " +
                                                 std::to_string(f.dim()) + ", expected " +
                                                 std::to_string(dim));
      }
    }
  }
  return out;
}

FeatureStats compute_feature_stats(std::span<const FeatureMatrix> features) {
  FeatureStats stats;
  std::size_t n = 0;
  for (const auto& f : features) {
    if (stats.mean.empty()) {
      stats.mean.assign(f.dim(), 0.0);
      stats.stddev.assign(f.dim(), 0.0);
    }
    for (std::size_t r = 0; r < f.num_frames(); ++r) {
      const auto row = f.values.row(r);
      for (std::size_t d = 0; d < row.size(); ++d) stats.mean[d] += row[d];
    }
    n += f.num_frames();
  }
  if (n == 0) throw Error(Errc::EmptyInput, "no frames to compute statistics from");
  for (double& m : stats.mean) m /= static_cast<double>(n);
  for (const auto& f : features) {
    for (std::size_t r = 0; r < f.num_frames(); ++r) {
      const auto row = f.values.row(r);
      for (std::size_t d = 0; d < row.size(); ++d) {
        const double diff = row[d] - stats.mean[d];
        stats.stddev[d] += diff * diff;
      }
    }
  }
  // Constant dimensions keep unit scale instead of dividing by zero.
  for (double& s : stats.stddev) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 0.0)) s = 1.0;
  }
  return stats;
}

void standardize_in_place(std::span<FeatureMatrix> features, const FeatureStats& stats) {
  for (auto& f : features) {
    if (f.dim() != stats.mean.size()) {
      throw Error(Errc::DimensionMismatch, "feature statistics do not match feature dimension");
    }
    for (std::size_t r = 0; r < f.num_frames(); ++r) {
      auto row = f.values.row(r);
      for (std::size_t d = 0; d < row.size(); ++d) {
        row[d] = (row[d] - stats.mean[d]) / stats.stddev[d];
      }
    }
  }
}

std::string feature_stats_to_json(const FeatureStats& stats) {
  ordered_json j;
  j["mean"] = stats.mean;
  j["stddev"] = stats.stddev;
  return j.dump(1) + "\n";
}

FeatureStats feature_stats_from_json(std::string_view text) {
  try {
    const auto j = ordered_json::parse(text);
    FeatureStats s{j.at("mean").get<std::vector<double>>(),
                   j.at("stddev").get<std::vector<double>>()};
    if (s.mean.size() != s.stddev.size()) {
      throw Error(Errc::MalformedFile, "mean and stddev lengths differ");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("feature stats JSON: ") + e.what());
  }
}

// --- labeling -------------------------------------------------------------------------

LabelSummary summarize_labels(std::span<const FrameLabelSequence> labels) {
  LabelSummary s;
  s.mutual_information_bits = channel_mutual_information(labels);
  s.channel_entropy_bits = channel_entropy(labels);
  std::set<ClusterId> wide;
  std::set<ClusterId> narrow;
  for (const auto& seq : labels) {
    (seq.channel == Channel::wide ? wide : narrow).insert(seq.labels.begin(), seq.labels.end());
  }
  s.wide_ids = wide.size();
  s.narrow_ids = narrow.size();
  for (ClusterId id : wide) s.shared_ids += narrow.count(id);
  return s;
}

std::string summary_to_json(const LabelSummary& s, PipelineMode mode, std::size_t vocab_size) {
  ordered_json j;
  j["mode"] = to_string(mode);
  j["vocab_size"] = vocab_size;
  j["mutual_information_bits"] = s.mutual_information_bits;
  j["channel_entropy_bits"] = s.channel_entropy_bits;
  j["wide_ids"] = s.wide_ids;
  j["narrow_ids"] = s.narrow_ids;
  j["shared_ids"] = s.shared_ids;
  return j.dump();
}

MaskPlan utterance_mask(std::size_t index, std::size_t num_frames, const MaskConfig& cfg,
                        std::uint64_t seed) {
  return span_mask(num_frames, cfg.span_length, cfg.start_prob, mix_seed(seed, index));
}

namespace {

std::vector<FeatureMatrix> select_channel(std::span<const FeatureMatrix> features,
                                          std::span<const UtteranceRecord> manifest,
                                          Channel channel) {
  std::vector<FeatureMatrix> out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].channel == channel) out.push_back(features[i]);
  }
  if (out.empty()) {
    throw Error(Errc::EmptyInput,
                "manifest has no " + std::string(to_string(channel)) + " utterances");
  }
  return out;
}

}  // namespace

PipelineArtifacts run_label_pipeline(const PipelineConfig& config,
                                     std::span<const UtteranceRecord> manifest) {
  validate(config);
  if (manifest.empty()) throw Error(Errc::EmptyInput, "manifest lists no utterances");

  PipelineArtifacts out;
  out.manifest.assign(manifest.begin(), manifest.end());
  std::vector<FeatureMatrix> features =
      load_all_features(manifest, config.features, config.threads);
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.manifest[i].num_frames = features[i].num_frames();
  }
  if (config.standardize) {
    out.stats = compute_feature_stats(features);
    standardize_in_place(features, *out.stats);
  }

  KMeansOptions opts;
  opts.threads = config.threads;
  if (config.mode == PipelineMode::pooled_baseline) {
    const Matrix all = stack_rows(features);
    Codebook fitted = kmeans_fit(all, config.k_pooled, config.max_iters, config.seed, opts);
    out.pooled_baseline = codebook_from_json(codebook_to_json(fitted));
    out.vocab_size = out.pooled_baseline->k();
    for (std::size_t i = 0; i < features.size(); ++i) {
      out.labels.push_back(assign(*out.pooled_baseline, features[i], manifest[i].channel));
    }
  } else {
    const auto wide = select_channel(features, manifest, Channel::wide);
    const auto narrow = select_channel(features, manifest, Channel::narrow);
    opts.channel = Channel::wide;
    Codebook wide_book =
        kmeans_fit(stack_rows(wide), config.k_wide, config.max_iters, config.seed, opts);
    opts.channel = Channel::narrow;
    Codebook narrow_book = kmeans_fit(stack_rows(narrow), config.k_narrow, config.max_iters,
                                      mix_seed(config.seed, 1), opts);
    const PooledCodebook pooled =
        pool_codebooks(std::move(wide_book), std::move(narrow_book), config.offset);
    out.channel_aware = pooled_codebook_from_json(pooled_codebook_to_json(pooled));
    out.vocab_size = out.channel_aware->vocab_size();
    for (std::size_t i = 0; i < features.size(); ++i) {
      out.labels.push_back(
          assign_channel_aware(*out.channel_aware, features[i], manifest[i].channel));
    }
  }

  const Vocabulary vocab{out.vocab_size};
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    TargetSequence target = collapse_repeats(out.labels[i]);
    out.targets.push_back(config.wrap_targets ? wrap_with_boundaries(target, vocab) : target);
    MaskPlan mask = utterance_mask(i, out.labels[i].labels.size(), config.mask, config.seed);
    mask.utt_id = out.labels[i].utt_id;
    out.masks.push_back(std::move(mask));
  }
  out.summary = summarize_labels(out.labels);
  return out;
}

std::vector<std::filesystem::path> write_artifacts(const PipelineArtifacts& a,
                                                   const PipelineConfig& config,
                                                   const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  auto emit = [&](const char* name, std::string_view text) {
    written.push_back(out_dir / name);
    write_text_file(written.back(), text);
  };

  emit("config.json", config_to_json(config));
  emit("manifest.tsv", format_manifest(a.manifest));
  if (a.pooled_baseline) emit("codebook.json", codebook_to_json(*a.pooled_baseline));
  if (a.channel_aware) {
    emit("codebook_wide.json", codebook_to_json(a.channel_aware->wide));
    emit("codebook_narrow.json", codebook_to_json(a.channel_aware->narrow));
    emit("codebook.json", pooled_codebook_to_json(*a.channel_aware));
  }
  if (a.stats) emit("feature_stats.json", feature_stats_to_json(*a.stats));

  std::vector<IdRecord> labels;
  std::vector<IdRecord> targets;
  std::vector<MaskRecord> masks;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    labels.push_back({a.labels[i].utt_id, a.labels[i].labels});
    targets.push_back({a.targets[i].utt_id, a.targets[i].tokens});
    masks.push_back({a.masks[i].utt_id, a.masks[i].masked});
  }
  emit("labels.txt", format_id_records(labels));
  emit("targets.txt", format_id_records(targets));
  emit("masks.txt", format_mask_records(masks));
  emit("mi.json", summary_to_json(a.summary, config.mode, a.vocab_size) + "\n");
  return written;
}

// --- synthetic corpus ----------------------------------------------------------------

namespace {

constexpr double kSegmentS = 0.1;
constexpr double kToneSet[] = {300.0, 500.0, 800.0, 1200.0, 1800.0, 2500.0, 3200.0};

AudioBuffer synthetic_utterance(int rate, double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer buf;
  buf.sample_rate_hz = rate;
  const auto segments = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     std::llround(duration_s / kSegmentS)));
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = static_cast<std::size_t>(std::llround(kSegmentS * rate));
    // Every utterance opens with silence; later segments are silent 25% of the time.
    if (s == 0 || rng.uniform() < 0.25) {
      buf.samples.insert(buf.samples.end(), n, 0.0);
      continue;
    }
    const double freq = kToneSet[rng.below(std::size(kToneSet))];
    const SignalKind kind = rng.uniform() < 0.7 ? SignalKind::sine : SignalKind::chirp;
    const double gain = 0.4 + 0.6 * rng.uniform();
    AudioBuffer seg = synthesize(kind, freq, kSegmentS, rate, 0);
    for (double v : seg.samples) buf.samples.push_back(gain * v);
  }
  return buf;
}

}  // namespace

std::vector<UtteranceRecord> write_synthetic_corpus(const std::filesystem::path& dir,
                                                    const CorpusSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
  if (!(spec.utterance_s >= 0.05)) throw Error(Errc::InvalidConfig, "utterances must be >= 50 ms");

  std::vector<UtteranceRecord> records;
  std::vector<UtteranceRecord> relative;
  const std::size_t total = spec.n_wide + spec.n_narrow;
  for (std::size_t i = 0; i < total; ++i) {
    const Channel channel = i < spec.n_wide ? Channel::wide : Channel::narrow;
    const std::size_t index = i < spec.n_wide ? i : i - spec.n_wide;
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu", std::string(to_string(channel)).c_str(), index);
    const std::string file = std::string(name) + ".wav";
    write_wav_file(dir / file,
                   synthetic_utterance(native_rate(channel), spec.utterance_s, mix_seed(spec.seed, i)));
    records.push_back({name, dir / file, channel, std::nullopt});
    relative.push_back({name, file, channel, std::nullopt});
  }
  write_text_file(dir / "manifest.tsv", format_manifest(relative));
  return records;
}

}  // namespace mbssl
