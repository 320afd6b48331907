// mbssl: channel-aware pseudo-label pipeline and loss kernels.
//
// Exit codes: 0 success, 1 invariant failure, 2 input error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mbssl/audio.hpp"
#include "mbssl/clustering.hpp"
#include "mbssl/dsp.hpp"
#include "mbssl/error.hpp"
#include "mbssl/io.hpp"
#include "mbssl/labeling.hpp"
#include "mbssl/losses.hpp"
#include "mbssl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mbssl;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitInvariant = 1;
constexpr int kExitInput = 2;

struct FeatureFlags {
  std::optional<int> n_mels;
  std::optional<int> fft_size;
  std::optional<double> f_min_hz;
  std::optional<double> f_max_hz;
  std::optional<double> window_ms;
  std::optional<double> hop_ms;

  void attach(CLI::App* cmd) {
    cmd->add_option("--n-mels", n_mels, "Mel bands (default 40)");
    cmd->add_option("--fft-size", fft_size, "FFT size (default 512)");
    cmd->add_option("--f-min", f_min_hz, "Lowest mel edge in Hz (default 20)");
    cmd->add_option("--f-max", f_max_hz, "Highest mel edge in Hz (default 7600)");
    cmd->add_option("--window-ms", window_ms, "Frame window (default 25)");
    cmd->add_option("--hop-ms", hop_ms, "Frame hop (default 10)");
  }

  MelFilterbankConfig apply(MelFilterbankConfig cfg) const {
    if (n_mels) cfg.n_mels = *n_mels;
    if (fft_size) cfg.fft_size = *fft_size;
    if (f_min_hz) cfg.f_min_hz = *f_min_hz;
    if (f_max_hz) cfg.f_max_hz = *f_max_hz;
    if (window_ms) cfg.window_ms = *window_ms;
    if (hop_ms) cfg.hop_ms = *hop_ms;
    return cfg;
  }
};

std::optional<ClusterId> parse_offset(const std::string& text) {
  if (text == "auto") return std::nullopt;
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || used == 0 || v > UINT32_MAX) {
    throw Error(Errc::InvalidConfig, "offset must be 'auto' or a non-negative integer");
  }
  return static_cast<ClusterId>(v);
}

Channel require_channel(const std::string& text) {
  const auto c = parse_channel(text);
  if (!c) throw Error(Errc::InvalidConfig, "channel must be wide or narrow, got '" + text + "'");
  return *c;
}

void print_line(const std::string& json) { std::cout << json << '\n'; }

// Loads a WAV and brings it to 16 kHz for feature extraction.
AudioBuffer load_for_features(const fs::path& path) {
  AudioBuffer audio = read_wav_file(path);
  if (audio.sample_rate_hz != kWideRateHz) audio = resample(audio, kWideRateHz);
  return audio;
}

const IdRecord& pick_record(const std::vector<IdRecord>& records, const std::optional<std::string>& utt,
                            const fs::path& path) {
  if (records.empty()) throw Error(Errc::EmptyInput, path.string() + " has no records");
  if (!utt) return records.front();
  for (const auto& r : records) {
    if (r.utt_id == *utt) return r;
  }
  throw Error(Errc::MalformedFile, path.string() + " has no record for '" + *utt + "'");
}

const MaskRecord& pick_mask(const std::vector<MaskRecord>& records, const std::string& utt,
                            const fs::path& path) {
  for (const auto& r : records) {
    if (r.utt_id == utt) return r;
  }
  throw Error(Errc::MalformedFile, path.string() + " has no mask for '" + utt + "'");
}

std::vector<FrameLabelSequence> labels_with_channels(const std::vector<IdRecord>& records,
                                                     const std::vector<UtteranceRecord>& manifest) {
  std::vector<FrameLabelSequence> out;
  for (const auto& rec : records) {
    auto it = std::find_if(manifest.begin(), manifest.end(),
                           [&](const UtteranceRecord& m) { return m.utt_id == rec.utt_id; });
    if (it == manifest.end()) {
      throw Error(Errc::MalformedFile, "utterance '" + rec.utt_id + "' is not in the manifest");
    }
    out.push_back({rec.utt_id, rec.ids, it->channel});
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-aware pseudo-labeling pipeline and loss kernels for mixed-bandwidth speech"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a test signal or a two-channel corpus");
  std::string synth_kind = "sine";
  double synth_freq = 1000.0;
  double synth_duration = 1.0;
  int synth_rate = kWideRateHz;
  std::uint64_t synth_seed = 0;
  fs::path synth_out;
  fs::path corpus_dir;
  CorpusSpec corpus;
  synth->add_option("--kind", synth_kind, "sine | chirp | white_noise");
  synth->add_option("--freq", synth_freq, "Tone frequency in Hz (chirp end frequency)");
  synth->add_option("--duration", synth_duration, "Seconds");
  synth->add_option("--rate", synth_rate, "Sample rate in Hz");
  synth->add_option("--seed", synth_seed, "Noise seed");
  synth->add_option("--out", synth_out, "Output WAV");
  synth->add_option("--corpus-dir", corpus_dir, "Write a synthetic corpus and manifest here instead");
  synth->add_option("--n-wide", corpus.n_wide, "Corpus: wide-band utterances");
  synth->add_option("--n-narrow", corpus.n_narrow, "Corpus: narrow-band utterances");
  synth->add_option("--utterance-s", corpus.utterance_s, "Corpus: utterance length in seconds");

  // resample
  auto* resample_cmd = app.add_subcommand("resample", "Convert between 8 kHz and 16 kHz");
  fs::path rs_in;
  fs::path rs_out;
  int rs_rate = 0;
  resample_cmd->add_option("--in", rs_in)->required();
  resample_cmd->add_option("--out", rs_out)->required();
  resample_cmd->add_option("--rate", rs_rate, "Target rate")->required();

  // features
  auto* features_cmd = app.add_subcommand("features", "Log-mel features of a WAV (FMX1 or CSV)");
  fs::path ft_in;
  fs::path ft_out;
  FeatureFlags ft_flags;
  features_cmd->add_option("--in", ft_in)->required();
  features_cmd->add_option("--out", ft_out, "Output; .csv selects CSV, anything else FMX1")->required();
  ft_flags.attach(features_cmd);

  // spectrum
  auto* spectrum_cmd = app.add_subcommand("spectrum", "Band-energy report and optional spectrogram");
  fs::path sp_in;
  double sp_cutoff = 4000.0;
  fs::path sp_grid;
  spectrum_cmd->add_option("--in", sp_in)->required();
  spectrum_cmd->add_option("--cutoff", sp_cutoff, "Band split in Hz");
  spectrum_cmd->add_option("--spectrogram", sp_grid, "Write a dB grid; .pgm or .csv");

  // kmeans
  auto* kmeans_cmd = app.add_subcommand("kmeans", "Fit a codebook on manifest features");
  fs::path km_manifest;
  std::string km_channel = "all";
  std::size_t km_k = 0;
  std::size_t km_iters = 100;
  std::uint64_t km_seed = 0;
  unsigned km_threads = 1;
  fs::path km_out;
  fs::path km_binary;
  FeatureFlags km_flags;
  kmeans_cmd->add_option("--manifest", km_manifest)->required();
  kmeans_cmd->add_option("--channel", km_channel, "wide | narrow | all");
  kmeans_cmd->add_option("--k", km_k)->required();
  kmeans_cmd->add_option("--max-iters", km_iters);
  kmeans_cmd->add_option("--seed", km_seed);
  kmeans_cmd->add_option("--threads", km_threads);
  kmeans_cmd->add_option("--out", km_out, "Codebook JSON")->required();
  kmeans_cmd->add_option("--binary", km_binary, "Also write centroids as FMX1");
  km_flags.attach(kmeans_cmd);

  // pool-codebooks
  auto* pool_cmd = app.add_subcommand("pool-codebooks", "Merge per-channel codebooks with an ID offset");
  fs::path pool_wide;
  fs::path pool_narrow;
  std::string pool_offset = "auto";
  fs::path pool_out;
  pool_cmd->add_option("--wide", pool_wide)->required();
  pool_cmd->add_option("--narrow", pool_narrow)->required();
  pool_cmd->add_option("--offset", pool_offset, "auto or an integer >= wide k");
  pool_cmd->add_option("--out", pool_out)->required();

  // label
  auto* label_cmd = app.add_subcommand("label", "Assign frame labels with a codebook");
  fs::path lb_codebook;
  fs::path lb_manifest;
  fs::path lb_stats;
  fs::path lb_out;
  FeatureFlags lb_flags;
  label_cmd->add_option("--codebook", lb_codebook, "Plain or pooled codebook JSON")->required();
  label_cmd->add_option("--manifest", lb_manifest)->required();
  label_cmd->add_option("--stats", lb_stats, "feature_stats.json for standardized codebooks");
  label_cmd->add_option("--out", lb_out)->required();
  lb_flags.attach(label_cmd);

  // collapse
  auto* collapse_cmd = app.add_subcommand("collapse", "Run-length collapse label files into targets");
  fs::path cl_in;
  fs::path cl_out;
  std::optional<std::size_t> cl_wrap_base;
  collapse_cmd->add_option("--labels", cl_in)->required();
  collapse_cmd->add_option("--out", cl_out)->required();
  collapse_cmd->add_option("--wrap-base-size", cl_wrap_base,
                           "Wrap with sos/eos after a cluster vocabulary of this size");

  // mask
  auto* mask_cmd = app.add_subcommand("mask", "Span-mask plans for every utterance of a label file");
  fs::path mk_labels;
  fs::path mk_out;
  MaskConfig mk_cfg;
  std::uint64_t mk_seed = 0;
  mask_cmd->add_option("--labels", mk_labels, "Frame counts are taken from this file")->required();
  mask_cmd->add_option("--out", mk_out)->required();
  mask_cmd->add_option("--span", mk_cfg.span_length);
  mask_cmd->add_option("--prob", mk_cfg.start_prob);
  mask_cmd->add_option("--seed", mk_seed);

  // loss
  auto* loss_cmd = app.add_subcommand("loss", "Evaluate the pretraining or finetuning loss");
  std::string ls_mode;
  std::optional<std::string> ls_utt;
  fs::path ls_enc_logits, ls_labels, ls_mask, ls_dec_logits, ls_targets;
  fs::path ls_ctc, ls_ctc_target, ls_att_logits, ls_att_target;
  double ls_alpha = kDefaultAlpha;
  double ls_beta = kDefaultBeta;
  double ls_smoothing = 0.0;
  ClusterId ls_blank = 0;
  bool ls_normalize = false;
  loss_cmd->add_option("--mode", ls_mode, "pretrain | finetune")
      ->required()
      ->check(CLI::IsMember({"pretrain", "finetune"}));
  loss_cmd->add_option("--utt", ls_utt, "Record to use from the text inputs (default: first)");
  loss_cmd->add_option("--enc-logits", ls_enc_logits, "pretrain: encoder logits (FMX1)");
  loss_cmd->add_option("--labels", ls_labels, "pretrain: frame label file");
  loss_cmd->add_option("--mask", ls_mask, "pretrain: mask file");
  loss_cmd->add_option("--dec-logits", ls_dec_logits, "pretrain: decoder logits (FMX1)");
  loss_cmd->add_option("--targets", ls_targets, "pretrain: decoder target file");
  loss_cmd->add_option("--alpha", ls_alpha);
  loss_cmd->add_option("--ctc-log-probs", ls_ctc, "finetune: CTC log-probabilities (FMX1)");
  loss_cmd->add_option("--ctc-target", ls_ctc_target, "finetune: CTC target file");
  loss_cmd->add_option("--att-logits", ls_att_logits, "finetune: attention decoder logits (FMX1)");
  loss_cmd->add_option("--att-target", ls_att_target, "finetune: attention target file");
  loss_cmd->add_option("--beta", ls_beta);
  loss_cmd->add_option("--blank", ls_blank);
  loss_cmd->add_flag("--normalize", ls_normalize, "Apply log-softmax to the CTC input first");
  loss_cmd->add_option("--label-smoothing", ls_smoothing);

  // diag-mi
  auto* mi_cmd = app.add_subcommand("diag-mi", "Mutual information between cluster ID and channel");
  fs::path mi_labels;
  fs::path mi_manifest;
  mi_cmd->add_option("--labels", mi_labels)->required();
  mi_cmd->add_option("--manifest", mi_manifest, "Supplies each utterance's channel")->required();

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "Features -> codebooks -> labels/targets/masks/MI");
  fs::path pp_config;
  fs::path pp_manifest;
  fs::path pp_out;
  std::optional<std::string> pp_mode, pp_offset;
  std::optional<std::size_t> pp_k_wide, pp_k_narrow, pp_k_pooled, pp_iters, pp_span;
  std::optional<std::uint64_t> pp_seed;
  std::optional<unsigned> pp_threads;
  std::optional<double> pp_prob, pp_alpha, pp_beta;
  bool pp_standardize = false;
  bool pp_wrap = false;
  FeatureFlags pp_flags;
  pipe_cmd->add_option("--config", pp_config, "JSON config; flags override its fields");
  pipe_cmd->add_option("--manifest", pp_manifest)->required();
  pipe_cmd->add_option("--out-dir", pp_out)->required();
  pipe_cmd->add_option("--mode", pp_mode, "channel_aware | pooled_baseline");
  pipe_cmd->add_option("--k-wide", pp_k_wide);
  pipe_cmd->add_option("--k-narrow", pp_k_narrow);
  pipe_cmd->add_option("--k-pooled", pp_k_pooled);
  pipe_cmd->add_option("--offset", pp_offset, "auto or an integer");
  pipe_cmd->add_option("--seed", pp_seed);
  pipe_cmd->add_option("--max-iters", pp_iters);
  pipe_cmd->add_option("--threads", pp_threads);
  pipe_cmd->add_option("--span", pp_span);
  pipe_cmd->add_option("--prob", pp_prob);
  pipe_cmd->add_option("--alpha", pp_alpha);
  pipe_cmd->add_option("--beta", pp_beta);
  pipe_cmd->add_flag("--standardize", pp_standardize, "z-score features with training statistics");
  pipe_cmd->add_flag("--wrap-targets", pp_wrap, "Emit sos/eos around targets");
  pp_flags.attach(pipe_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*synth) {
      if (!corpus_dir.empty()) {
        corpus.seed = synth_seed;
        const auto records = write_synthetic_corpus(corpus_dir, corpus);
        print_line(ordered_json{{"corpus_dir", corpus_dir.string()},
                                {"utterances", records.size()},
                                {"manifest", (corpus_dir / "manifest.tsv").string()}}
                       .dump());
        return 0;
      }
      if (synth_out.empty()) throw Error(Errc::InvalidConfig, "synth needs --out or --corpus-dir");
      const auto kind = parse_signal_kind(synth_kind);
      if (!kind) throw Error(Errc::InvalidConfig, "unknown signal kind '" + synth_kind + "'");
      const AudioBuffer buf = synthesize(*kind, synth_freq, synth_duration, synth_rate, synth_seed);
      write_wav_file(synth_out, buf);
      print_line(ordered_json{{"out", synth_out.string()},
                              {"samples", buf.samples.size()},
                              {"sample_rate_hz", buf.sample_rate_hz}}
                     .dump());
    } else if (*resample_cmd) {
      const AudioBuffer out = resample(read_wav_file(rs_in), rs_rate);
      const std::size_t clipped = write_wav_file(rs_out, out);
      print_line(ordered_json{{"out", rs_out.string()},
                              {"samples", out.samples.size()},
                              {"sample_rate_hz", out.sample_rate_hz},
                              {"clipped", clipped}}
                     .dump());
    } else if (*features_cmd) {
      const FeatureMatrix f = logmel(load_for_features(ft_in), ft_flags.apply({}), ft_in.stem().string());
      if (ft_out.extension() == ".csv") {
        write_text_file(ft_out, matrix_to_csv(f.values));
      } else {
        write_fmx_file(ft_out, f.values);
      }
      print_line(ordered_json{{"out", ft_out.string()}, {"frames", f.num_frames()}, {"dim", f.dim()}}
                     .dump());
    } else if (*spectrum_cmd) {
      const AudioBuffer audio = read_wav_file(sp_in);
      const BandEnergyReport r = band_energy_ratio(audio, sp_cutoff);
      ordered_json j{{"in", sp_in.string()},
                     {"sample_rate_hz", audio.sample_rate_hz},
                     {"cutoff_hz", r.cutoff_hz},
                     {"low_band_energy", r.low_band_energy},
                     {"high_band_energy", r.high_band_energy},
                     {"high_fraction", r.high_fraction}};
      if (!sp_grid.empty()) {
        MelFilterbankConfig cfg;
        cfg.fft_size = 1;
        while (static_cast<std::size_t>(cfg.fft_size) < ms_to_samples(cfg.window_ms, audio.sample_rate_hz)) {
          cfg.fft_size <<= 1;
        }
        cfg.f_max_hz = std::min(cfg.f_max_hz, 0.475 * audio.sample_rate_hz);
        const auto format =
            sp_grid.extension() == ".csv" ? SpectrogramFormat::csv : SpectrogramFormat::pgm;
        write_binary_file(sp_grid, export_spectrogram(audio, cfg, format));
        j["spectrogram"] = sp_grid.string();
      }
      print_line(j.dump());
    } else if (*kmeans_cmd) {
      std::vector<UtteranceRecord> manifest = read_manifest(km_manifest);
      KMeansOptions opts;
      opts.threads = km_threads;
      if (km_channel != "all") {
        const Channel c = require_channel(km_channel);
        std::erase_if(manifest, [c](const UtteranceRecord& r) { return r.channel != c; });
        opts.channel = c;
      }
      if (manifest.empty()) throw Error(Errc::EmptyInput, "no utterances selected from the manifest");
      const auto features = load_all_features(manifest, km_flags.apply({}), km_threads);
      const Codebook book = kmeans_fit(stack_rows(features), km_k, km_iters, km_seed, opts);
      write_text_file(km_out, codebook_to_json(book));
      if (!km_binary.empty()) write_fmx_file(km_binary, book.centroids);
      print_line(ordered_json{{"out", km_out.string()},
                              {"k", book.k()},
                              {"iterations", book.inertia_history.size() - 1},
                              {"inertia", book.inertia_history.back()},
                              {"empty_cluster_reseeds", book.empty_cluster_reseeds}}
                     .dump());
    } else if (*pool_cmd) {
      const PooledCodebook pooled = pool_codebooks(codebook_from_json(read_text_file(pool_wide)),
                                                   codebook_from_json(read_text_file(pool_narrow)),
                                                   parse_offset(pool_offset));
      write_text_file(pool_out, pooled_codebook_to_json(pooled));
      print_line(ordered_json{{"out", pool_out.string()},
                              {"offset", pooled.offset},
                              {"vocab_size", pooled.vocab_size()},
                              {"wide_ids", {0, pooled.wide.k()}},
                              {"narrow_ids", {pooled.offset, pooled.vocab_size()}}}
                     .dump());
    } else if (*label_cmd) {
      const std::string text = read_text_file(lb_codebook);
      const std::vector<UtteranceRecord> manifest = read_manifest(lb_manifest);
      if (manifest.empty()) throw Error(Errc::EmptyInput, "manifest lists no utterances");
      std::vector<FeatureMatrix> features = load_all_features(manifest, lb_flags.apply({}), 1);
      if (!lb_stats.empty()) {
        standardize_in_place(features, feature_stats_from_json(read_text_file(lb_stats)));
      }
      std::vector<IdRecord> records;
      if (is_pooled_codebook_json(text)) {
        const PooledCodebook pooled = pooled_codebook_from_json(text);
        for (std::size_t i = 0; i < manifest.size(); ++i) {
          records.push_back({manifest[i].utt_id,
                             assign_channel_aware(pooled, features[i], manifest[i].channel).labels});
        }
      } else {
        const Codebook book = codebook_from_json(text);
        for (std::size_t i = 0; i < manifest.size(); ++i) {
          records.push_back({manifest[i].utt_id, assign(book, features[i], manifest[i].channel).labels});
        }
      }
      write_text_file(lb_out, format_id_records(records));
      print_line(ordered_json{{"out", lb_out.string()}, {"utterances", records.size()}}.dump());
    } else if (*collapse_cmd) {
      std::vector<IdRecord> records = parse_id_records(read_text_file(cl_in));
      for (auto& rec : records) {
        TargetSequence t{rec.utt_id, collapse_repeats(rec.ids), false};
        if (cl_wrap_base) t = wrap_with_boundaries(t, Vocabulary{*cl_wrap_base});
        rec.ids = std::move(t.tokens);
      }
      write_text_file(cl_out, format_id_records(records));
      print_line(ordered_json{{"out", cl_out.string()}, {"utterances", records.size()}}.dump());
    } else if (*mask_cmd) {
      const std::vector<IdRecord> records = parse_id_records(read_text_file(mk_labels));
      std::vector<MaskRecord> masks;
      std::size_t masked = 0;
      std::size_t frames = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const MaskPlan plan = utterance_mask(i, records[i].ids.size(), mk_cfg, mk_seed);
        masked += plan.masked_count();
        frames += plan.masked.size();
        masks.push_back({records[i].utt_id, plan.masked});
      }
      write_text_file(mk_out, format_mask_records(masks));
      print_line(ordered_json{{"out", mk_out.string()},
                              {"utterances", masks.size()},
                              {"masked_fraction", frames ? double(masked) / double(frames) : 0.0}}
                     .dump());
    } else if (*loss_cmd) {
      LossBreakdown breakdown;
      if (ls_mode == "pretrain") {
        for (const auto* p : {&ls_enc_logits, &ls_labels, &ls_mask, &ls_dec_logits, &ls_targets}) {
          if (p->empty()) {
            throw Error(Errc::InvalidConfig,
                        "pretrain needs --enc-logits --labels --mask --dec-logits --targets");
          }
        }
        const auto labels = parse_id_records(read_text_file(ls_labels));
        const IdRecord& label = pick_record(labels, ls_utt, ls_labels);
        const auto masks = parse_mask_records(read_text_file(ls_mask));
        const MaskRecord& mask = pick_mask(masks, label.utt_id, ls_mask);
        const auto targets = parse_id_records(read_text_file(ls_targets));
        const IdRecord& target = pick_record(targets, label.utt_id, ls_targets);
        const double l_m = masked_prediction_loss(read_fmx_file(ls_enc_logits), label.ids, mask.masked);
        const double l_s = sequence_loss(read_fmx_file(ls_dec_logits), target.ids, ls_smoothing);
        breakdown.pretrain = make_pretrain_terms(l_m, l_s, ls_alpha);
      } else {
        for (const auto* p : {&ls_ctc, &ls_ctc_target, &ls_att_logits, &ls_att_target}) {
          if (p->empty()) {
            throw Error(Errc::InvalidConfig,
                        "finetune needs --ctc-log-probs --ctc-target --att-logits --att-target");
          }
        }
        Matrix log_probs = read_fmx_file(ls_ctc);
        if (ls_normalize) log_probs = log_softmax(log_probs);
        const auto ctc_targets = parse_id_records(read_text_file(ls_ctc_target));
        const IdRecord& ctc_target = pick_record(ctc_targets, ls_utt, ls_ctc_target);
        const auto att_targets = parse_id_records(read_text_file(ls_att_target));
        const IdRecord& att_target = pick_record(att_targets, ls_utt, ls_att_target);
        const double ctc = ctc_loss(log_probs, ctc_target.ids, ls_blank).loss;
        const double att = sequence_loss(read_fmx_file(ls_att_logits), att_target.ids, ls_smoothing);
        breakdown.finetune = make_finetune_terms(ctc, att, ls_beta);
      }
      print_line(to_json(breakdown));
    } else if (*mi_cmd) {
      const auto records = parse_id_records(read_text_file(mi_labels));
      const auto manifest = read_manifest(mi_manifest);
      const auto labels = labels_with_channels(records, manifest);
      if (labels.empty()) throw Error(Errc::EmptyInput, "no labels");
      const LabelSummary s = summarize_labels(labels);
      print_line(ordered_json{{"mutual_information_bits", s.mutual_information_bits},
                              {"channel_entropy_bits", s.channel_entropy_bits},
                              {"wide_ids", s.wide_ids},
                              {"narrow_ids", s.narrow_ids},
                              {"shared_ids", s.shared_ids}}
                     .dump());
    } else if (*pipe_cmd) {
      PipelineConfig cfg;
      if (!pp_config.empty()) cfg = config_from_json(read_text_file(pp_config));
      if (pp_mode) {
        cfg = config_from_json(ordered_json{{"mode", *pp_mode}}.dump(), cfg);
      }
      if (pp_k_wide) cfg.k_wide = *pp_k_wide;
      if (pp_k_narrow) cfg.k_narrow = *pp_k_narrow;
      if (pp_k_pooled) cfg.k_pooled = *pp_k_pooled;
      if (pp_offset) cfg.offset = parse_offset(*pp_offset);
      if (pp_seed) cfg.seed = *pp_seed;
      if (pp_iters) cfg.max_iters = *pp_iters;
      if (pp_threads) cfg.threads = *pp_threads;
      if (pp_span) cfg.mask.span_length = *pp_span;
      if (pp_prob) cfg.mask.start_prob = *pp_prob;
      if (pp_alpha) cfg.alpha = *pp_alpha;
      if (pp_beta) cfg.beta = *pp_beta;
      if (pp_standardize) cfg.standardize = true;
      if (pp_wrap) cfg.wrap_targets = true;
      cfg.features = pp_flags.apply(cfg.features);

      const auto manifest = read_manifest(pp_manifest);
      const PipelineArtifacts artifacts = run_label_pipeline(cfg, manifest);
      const auto written = write_artifacts(artifacts, cfg, pp_out);
      for (const auto& path : written) {
        print_line(ordered_json{{"artifact", path.string()}}.dump());
      }
      print_line(summary_to_json(artifacts.summary, cfg.mode, artifacts.vocab_size));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::InvariantViolation ? kExitInvariant : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return 0;
}
