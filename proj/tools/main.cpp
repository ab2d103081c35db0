#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "streamadapt/checkpoint.hpp"
#include "streamadapt/config.hpp"
#include "streamadapt/dapmask.hpp"
#include "streamadapt/dscmix.hpp"
#include "streamadapt/engine.hpp"
#include "streamadapt/frame_io.hpp"
#include "streamadapt/synthstream.hpp"

namespace fs = std::filesystem;
using namespace streamadapt;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool print_config = false;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig::make_default(0) : load_config(g.config_path);
  if (g.seed) cfg.apply_seed(*g.seed);
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Globals& g, const RunConfig& cfg) {
  const fs::path dir(g.out_dir);
  fs::create_directories(dir);
  save_config(cfg, dir / "config.json");
  return dir;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Checkpoint load_or_pretrain(const std::string& path, const RunConfig& cfg, const fs::path& out) {
  if (!path.empty()) return load_checkpoint(path);
  const fs::path fallback = out / "pretrained.rdsc";
  if (fs::exists(fallback)) return load_checkpoint(fallback);
  std::cerr << "no checkpoint given; pretraining into " << fallback.string() << '\n';
  PretrainResult pr = pretrain(cfg, &std::cerr);
  save_checkpoint(pr.checkpoint, fallback);
  return pr.checkpoint;
}

int cmd_pretrain(const Globals& g) {
  const RunConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g, cfg);
  const PretrainResult pr = pretrain(cfg, &std::cerr);
  save_checkpoint(pr.checkpoint, out / "pretrained.rdsc");
  std::cout << "epochs " << pr.epochs << " val_miou " << fmt("%.4f", pr.val_miou) << " -> "
            << (out / "pretrained.rdsc").string() << '\n';
  return 0;
}

int cmd_buffer_build(const Globals& g, std::optional<double> temperature, std::optional<int> capacity) {
  RunConfig cfg = resolve_config(g);
  if (temperature) cfg.buffer.temperature = *temperature;
  if (capacity) cfg.buffer.build.capacity = *capacity;
  cfg.validate();
  const fs::path out = prepare_out(g, cfg);
  const ReplayBuffer buf = build_source_buffer(cfg);
  save_buffer(buf, out / "buffer.rdsb");
  for (const std::string& w : buf.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "class,probability,cutouts\n";
  for (int c = 0; c < buf.class_count(); ++c)
    std::cout << c << ',' << fmt("%.6g", buf.dist.probabilities[c]) << ',' << buf.stores[c].size() << '\n';
  std::cout << "total " << buf.total_cutouts() << " cutouts, " << buf.stored_pixels() << " px -> "
            << (out / "buffer.rdsb").string() << '\n';
  return 0;
}

int cmd_gen_stream(const Globals& g, int limit) {
  const RunConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g, cfg);
  const fs::path dir = out / "stream";
  fs::create_directories(dir);
  const int total = cfg.profile.total_frames();
  const int n = limit > 0 ? std::min(limit, total) : total;
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "frame,segment,condition,intensity,frame_file,label_file\n";
  char name[32];
  for (int t = 0; t < n; ++t) {
    const StreamSample s = next(cfg.profile, cfg.scene, t);
    std::snprintf(name, sizeof name, "%05d", t);
    const std::string ff = std::string(name) + ".rdsf", lf = std::string(name) + ".rdsl";
    save_frame(s.frame, dir / ff);
    save_labels(s.labels, dir / lf);
    manifest << t << ',' << s.tag.segment << ',' << to_string(s.tag.condition) << ','
             << fmt("%.17g", s.tag.intensity) << ',' << ff << ',' << lf << '\n';
  }
  std::cout << n << " frames -> " << dir.string() << '\n';
  return 0;
}

struct RunFlags {
  std::string checkpoint;
  std::string buffer;
  std::string ablation = "none";
  std::string mask_strategy = "ambiguity";
  bool burst = false;
  bool literal = false;
  bool no_replay = false;
};

int cmd_run(const Globals& g, const RunFlags& f) {
  RunConfig cfg = resolve_config(g);
  cfg.adapt.ablation = ablation_from_string(f.ablation);
  cfg.adapt.mask_strategy = mask_strategy_from_string(f.mask_strategy);
  if (f.burst) cfg.adapt.burst = true;
  if (f.literal) cfg.adapt.literal_blend = true;
  if (f.no_replay) cfg.adapt.replay = false;
  cfg.validate();
  const fs::path out = prepare_out(g, cfg);
  const Checkpoint ckpt = load_or_pretrain(f.checkpoint, cfg, out);
  std::optional<ReplayBuffer> buffer;
  if (cfg.adapt.replay) buffer = f.buffer.empty() ? build_source_buffer(cfg) : load_buffer(f.buffer);
  const RunResult r = run_stream(cfg, ckpt, buffer ? &*buffer : nullptr, &std::cerr);
  write_run_outputs(out, r, cfg.model.class_count);
  const RunReport& rep = r.report;
  std::cout << "ablation " << rep.ablation << " frames " << rep.frames << " shifts " << rep.shifts
            << " adapt_iterations " << rep.adapt_iterations << '\n'
            << "h_miou F " << fmt("%.4f", rep.h_forward) << " B " << fmt("%.4f", rep.h_backward) << " total "
            << fmt("%.4f", rep.h_total) << '\n'
            << "hardest segment " << rep.hardest_segment << " miou " << fmt("%.4f", rep.hardest_miou) << '\n'
            << "clear miou " << fmt("%.4f", rep.initial_clear_miou) << " -> " << fmt("%.4f", rep.final_clear_miou)
            << '\n'
            << "fps " << fmt("%.2f", rep.fps) << '\n'
            << "outputs -> " << out.string() << '\n';
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& which) {
  const RunConfig cfg = resolve_config(g);
  const fs::path out = prepare_out(g, cfg);
  const Checkpoint ckpt = load_or_pretrain(checkpoint, cfg, out);
  const ModelParams& params = which == "teacher" ? ckpt.teacher : ckpt.student;
  std::cout << "segment,condition,intensity,miou\n";
  for (int s = 0; s < static_cast<int>(cfg.profile.segments.size()); ++s) {
    const Segment& seg = cfg.profile.segments[s];
    std::cout << s << ',' << to_string(seg.condition) << ',' << fmt("%.2f", seg.intensity) << ','
              << fmt("%.4f", evaluate_segment(params, cfg, s).miou) << '\n';
  }
  return 0;
}

struct HfeaFlags {
  std::string frame;
  std::string condition = "rain";
  double intensity = 0.8;
  std::uint64_t frame_seed = 0;
  double alpha_mask = 0.5;
};

int cmd_hfea(const Globals& g, const HfeaFlags& f) {
  const RunConfig cfg = resolve_config(g);
  Frame frame;
  if (!f.frame.empty()) {
    frame = load_frame(f.frame);
  } else {
    const Scene s = gen_scene(cfg.scene, f.frame_seed);
    frame = apply_condition(s.frame, condition_from_string(f.condition), f.intensity, f.frame_seed);
  }
  const EnergyMap em = energy_map(frame, cfg.adapt.frequency);
  const MaskGrid mask = build_mask(em, f.alpha_mask);
  std::cout << "grid " << em.grid.rows << "x" << em.grid.cols << " patch " << em.grid.patch_size
            << " degenerate " << em.degenerate_patches << "\n";
  for (int r = 0; r < em.grid.rows; ++r) {
    for (int c = 0; c < em.grid.cols; ++c) {
      const int i = r * em.grid.cols + c;
      std::cout << (c ? " " : "") << fmt("%8.5f", em.ratios[i]) << (mask.keep[i] ? ' ' : '*');
    }
    std::cout << '\n';
  }
  std::cout << "dropped " << mask.dropped() << " of " << em.grid.count() << " (marked *)\n";

  const fs::path out = prepare_out(g, cfg);
  std::ofstream csv(out / "energy.csv");
  csv << "row,col,R,keep\n";
  for (int r = 0; r < em.grid.rows; ++r)
    for (int c = 0; c < em.grid.cols; ++c) {
      const int i = r * em.grid.cols + c;
      csv << r << ',' << c << ',' << fmt("%.17g", em.ratios[i]) << ',' << int{mask.keep[i]} << '\n';
    }
  save_frame(apply_mask(frame, mask), out / "masked.rdsf");
  std::cout << "energy.csv, masked.rdsf -> " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamadapt: online domain adaptation on synthetic weather streams"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run config (see --print-config)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed; overrides the config");
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_flag("--print-config", g.print_config, "print the effective config and exit");

  auto* pre = app.add_subcommand("pretrain", "train the source model on clear scenes");
  auto* buf = app.add_subcommand("buffer-build", "build the class-level replay buffer");
  std::optional<double> temperature;
  std::optional<int> capacity;
  buf->add_option("--temperature", temperature, "rarity sampling temperature")->check(CLI::PositiveNumber);
  buf->add_option("--capacity", capacity, "cutouts per class")->check(CLI::PositiveNumber);
  auto* gen = app.add_subcommand("gen-stream", "write the stream frames and labels");
  int limit = 0;
  gen->add_option("--limit", limit, "write only the first N frames");

  auto* run = app.add_subcommand("run", "stream the profile with adaptation");
  RunFlags rf;
  run->add_option("--checkpoint", rf.checkpoint, "source checkpoint (default <out-dir>/pretrained.rdsc)");
  run->add_option("--buffer", rf.buffer, "replay buffer file (default: built from the config)");
  run->add_option("--ablation", rf.ablation)
      ->check(CLI::IsMember({"none", "mask-only", "mix-only", "no-adapt"}))
      ->capture_default_str();
  run->add_option("--mask-strategy", rf.mask_strategy)
      ->check(CLI::IsMember({"ambiguity", "random"}))
      ->capture_default_str();
  run->add_flag("--burst", rf.burst, "run all iterations of an order on the triggering frame");
  run->add_flag("--literal-blend", rf.literal, "alpha-weighted blend of pasted source pixels");
  run->add_flag("--no-replay", rf.no_replay, "disable the replay buffer");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on every profile segment");
  std::string eval_ckpt, eval_which = "student";
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint (default <out-dir>/pretrained.rdsc)");
  ev->add_option("--network", eval_which)->check(CLI::IsMember({"student", "teacher"}))->capture_default_str();

  auto* hf = app.add_subcommand("hfea", "print the high-frequency energy map and mask of one frame");
  HfeaFlags hff;
  hf->add_option("--frame", hff.frame, "RDSF frame file (default: generate one)");
  hf->add_option("--condition", hff.condition)->check(CLI::IsMember({"clear", "rain", "fog"}))->capture_default_str();
  hf->add_option("--intensity", hff.intensity)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  hf->add_option("--frame-seed", hff.frame_seed)->capture_default_str();
  hf->add_option("--alpha-mask", hff.alpha_mask)->check(CLI::Range(0.0, 1.0))->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (g.print_config) {
      std::cout << config_to_json(resolve_config(g)) << '\n';
      return 0;
    }
    if (pre->parsed()) return cmd_pretrain(g);
    if (buf->parsed()) return cmd_buffer_build(g, temperature, capacity);
    if (gen->parsed()) return cmd_gen_stream(g, limit);
    if (run->parsed()) return cmd_run(g, rf);
    if (ev->parsed()) return cmd_eval(g, eval_ckpt, eval_which);
    if (hf->parsed()) return cmd_hfea(g, hff);
    std::cout << app.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
