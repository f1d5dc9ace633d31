// omgsr: one-step latent super-resolution toolbox.
//
// Subcommands wire the library modules for batch use: dataset synthesis and
// degradation, mid-timestep selection, gap probing, chunk planning, the two
// training stages, restoration (plain and tiled), and evaluation.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "omgsr/checkpoint.hpp"
#include "omgsr/chunking.hpp"
#include "omgsr/config.hpp"
#include "omgsr/dataset.hpp"
#include "omgsr/degrade.hpp"
#include "omgsr/image_io.hpp"
#include "omgsr/infer.hpp"
#include "omgsr/metrics.hpp"
#include "omgsr/midstep.hpp"
#include "omgsr/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using Scalar = float;  // runtime scalar; tests exercise double separately

namespace {

omgsr::ModelConfig<Scalar> model_from_config(const omgsr::Config& c) {
  omgsr::ModelConfig<Scalar> m;
  m.latent_channels = (int)c.get_int("model.latent_channels", m.latent_channels);
  m.vae_channels = (int)c.get_int("model.vae_channels", m.vae_channels);
  m.denoiser_channels = (int)c.get_int("model.denoiser_channels", m.denoiser_channels);
  m.denoiser_blocks = (int)c.get_int("model.denoiser_blocks", m.denoiser_blocks);
  m.t_embed_dim = (int)c.get_int("model.t_embed_dim", m.t_embed_dim);
  m.conditioning_dim = (int)c.get_int("model.conditioning_dim", m.conditioning_dim);
  m.disc_channels = (int)c.get_int("model.disc_channels", m.disc_channels);
  m.disc_native_input = (int)c.get_int("model.disc_native_input", m.disc_native_input);
  m.embedder_channels = (int)c.get_int("model.embedder_channels", m.embedder_channels);
  m.embedder_seed = (std::uint64_t)c.get_int("model.embedder_seed",
                                             (long)m.embedder_seed);
  return m;
}

omgsr::DegradationConfig<Scalar> degradation_from_config(const omgsr::Config& c) {
  omgsr::DegradationConfig<Scalar> d;
  d.blur_sigma_range = {(Scalar)c.get_real("degrade.blur_lo", d.blur_sigma_range.first),
                        (Scalar)c.get_real("degrade.blur_hi", d.blur_sigma_range.second)};
  d.downscale_factor = (int)c.get_int("degrade.factor", d.downscale_factor);
  d.noise_sigma_range = {(Scalar)c.get_real("degrade.noise_lo", d.noise_sigma_range.first),
                         (Scalar)c.get_real("degrade.noise_hi", d.noise_sigma_range.second)};
  d.compression_quality_range = {
      (int)c.get_int("degrade.quality_lo", d.compression_quality_range.first),
      (int)c.get_int("degrade.quality_hi", d.compression_quality_range.second)};
  d.second_order = c.get_bool("degrade.second_order", d.second_order);
  return d;
}

omgsr::TrainConfig<Scalar> train_from_config(const omgsr::Config& c) {
  omgsr::TrainConfig<Scalar> t;
  t.lr = (Scalar)c.get_real("train.lr", t.lr);
  t.grad_accum = (int)c.get_int("train.grad_accum", t.grad_accum);
  t.vae_lora_rank = (int)c.get_int("train.vae_lora_rank", t.vae_lora_rank);
  t.denoiser_lora_rank = (int)c.get_int("train.denoiser_lora_rank", t.denoiser_lora_rank);
  t.lora_scale = (Scalar)c.get_real("train.lora_scale", t.lora_scale);
  t.weights.lambda1 = (Scalar)c.get_real("train.lambda1", t.weights.lambda1);
  t.weights.lambda2 = (Scalar)c.get_real("train.lambda2", t.weights.lambda2);
  t.weights.lambda3 = (Scalar)c.get_real("train.lambda3", t.weights.lambda3);
  t.weights.lambda4 = (Scalar)c.get_real("train.lambda4", t.weights.lambda4);
  t.oc_overlap = (int)c.get_int("train.oc_overlap", t.oc_overlap);
  t.crop = (int)c.get_int("train.crop", t.crop);
  return t;
}

omgsr::PairDataset<Scalar> dataset_from_config(const omgsr::Config& c,
                                               omgsr::Rng& master,
                                               bool validation) {
  const int count = (int)c.get_int(validation ? "data.val_count" : "data.count",
                                   validation ? 50 : 200);
  const int hq_size = (int)c.get_int("data.hq_size", 256);
  return omgsr::make_dataset<Scalar>(count, hq_size, degradation_from_config(c),
                                     master.fork(validation ? 0x0a1 : 0x7a1).raw());
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << body;
}

json layout_to_json(const omgsr::ChunkLayout& l) {
  return json{{"height", l.height},   {"width", l.width},
              {"patch", l.patch},     {"min_overlap", l.min_overlap},
              {"starts_y", l.starts_y}, {"starts_x", l.starts_x},
              {"count", l.count()}};
}

// Latent pairs for the mid-timestep search: frozen-encode HQ and the
// bicubic-upscaled LQ of each dataset pair.
std::vector<std::pair<omgsr::Tensor<Scalar>, omgsr::Tensor<Scalar>>>
latent_pairs(omgsr::CheckpointBundle<Scalar>& bundle,
             const omgsr::PairDataset<Scalar>& ds, int limit) {
  std::vector<std::pair<omgsr::Tensor<Scalar>, omgsr::Tensor<Scalar>>> pairs;
  const int n = std::min(limit, ds.size());
  for (int i = 0; i < n; ++i) {
    auto up = omgsr::bicubic_upscale(ds.lq[i], bundle.scale_factor);
    pairs.emplace_back(bundle.vae.encode(up, false),
                       bundle.vae.encode(ds.hq[i], false));
  }
  return pairs;
}

int select_t_star(omgsr::CheckpointBundle<Scalar>& bundle,
                  const omgsr::PairDataset<Scalar>& ds, omgsr::Rng& master,
                  int pair_limit, int grid_stride,
                  omgsr::MidTimestepReport<Scalar>* report_out = nullptr) {
  auto pairs = latent_pairs(bundle, ds, pair_limit);
  omgsr::Rng eps = master.fork(0xe95);
  auto grid = omgsr::default_candidate_grid(bundle.sched_cfg.num_steps, grid_stride);
  auto report = omgsr::precompute_mid_timestep(pairs,
                                               omgsr::NoiseSchedule<Scalar>(bundle.sched_cfg),
                                               eps, grid);
  if (report_out) *report_out = report;
  return report.t_star;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omgsr: one-step latent super-resolution toolbox"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<long> seed_override;
  app.add_option("--config", config_path, "structured config file (key = value)");
  app.add_option("--seed", seed_override, "master seed override");

  // ---- subcommand declarations -------------------------------------------
  std::string out_path, csv_path, json_path, in_path, ckpt_path, log_path, data_dir;

  auto* sc_synth = app.add_subcommand("synth-data", "generate a procedural LQ/HQ corpus");
  int synth_count = 8, synth_size = 256;
  sc_synth->add_option("--out", data_dir, "output directory")->required();
  sc_synth->add_option("--count", synth_count, "number of pairs");
  sc_synth->add_option("--size", synth_size, "HQ image size");

  auto* sc_degrade = app.add_subcommand("degrade", "degrade one PNG to its LQ counterpart");
  sc_degrade->add_option("--in", in_path, "HQ input PNG")->required();
  sc_degrade->add_option("--out", out_path, "LQ output PNG")->required();

  auto* sc_chunk = app.add_subcommand("chunk-plan", "print an overlap-chunk layout");
  int ch_h = 512, ch_w = 512, ch_patch = 224, ch_overlap = 32;
  sc_chunk->add_option("--height", ch_h, "image height");
  sc_chunk->add_option("--width", ch_w, "image width");
  sc_chunk->add_option("--patch", ch_patch, "patch size");
  sc_chunk->add_option("--overlap", ch_overlap, "minimum overlap");
  sc_chunk->add_option("--out", out_path, "write JSON here instead of stdout");

  auto* sc_pre = app.add_subcommand("pretrain", "pretrain the toy VAE and denoiser");
  sc_pre->add_option("--out", ckpt_path, "checkpoint directory")->required();

  auto* sc_tstar = app.add_subcommand("precompute-t", "data-driven mid-timestep selection");
  sc_tstar->add_option("--checkpoint", ckpt_path, "pretrained checkpoint")->required();
  sc_tstar->add_option("--out", out_path, "JSON report")->required();
  sc_tstar->add_option("--csv", csv_path, "optional CSV report");
  bool full_grid = false;
  sc_tstar->add_flag("--full-grid", full_grid, "search every timestep");

  auto* sc_gap = app.add_subcommand("probe-gap", "trajectory-gap probe with optional noise injection");
  int gap_steps = 20;
  std::optional<int> gap_inj_step;
  double gap_inj_level = 0.0;
  sc_gap->add_option("--checkpoint", ckpt_path, "pretrained checkpoint")->required();
  sc_gap->add_option("--steps", gap_steps, "rollout steps");
  sc_gap->add_option("--injection-step", gap_inj_step, "rollout step to perturb");
  sc_gap->add_option("--injection-level", gap_inj_level, "noise level");
  sc_gap->add_option("--out", out_path, "JSON report")->required();
  sc_gap->add_option("--csv", csv_path, "optional CSV report");

  auto* sc_fine = app.add_subcommand("finetune", "one-mid-timestep fine-tuning");
  int fine_steps = 3000;
  sc_fine->add_option("--checkpoint", ckpt_path, "pretrained checkpoint")->required();
  sc_fine->add_option("--out", out_path, "output checkpoint directory")->required();
  sc_fine->add_option("--steps", fine_steps, "fine-tune steps");
  sc_fine->add_option("--log", log_path, "loss-log CSV");

  auto* sc_restore = app.add_subcommand("restore", "one-step restoration of a PNG");
  sc_restore->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  sc_restore->add_option("--in", in_path, "LQ input PNG")->required();
  sc_restore->add_option("--out", out_path, "restored output PNG")->required();

  auto* sc_tile = app.add_subcommand("tile-restore", "two-stage tiled restoration");
  int tile = 64, tile_overlap = 16;
  sc_tile->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  sc_tile->add_option("--in", in_path, "LQ input PNG")->required();
  sc_tile->add_option("--out", out_path, "restored output PNG")->required();
  sc_tile->add_option("--tile", tile, "stage-2 tile size");
  sc_tile->add_option("--overlap", tile_overlap, "stage-2 tile overlap");

  auto* sc_eval = app.add_subcommand("evaluate", "metrics over the validation corpus");
  sc_eval->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  sc_eval->add_option("--out", csv_path, "per-image CSV")->required();
  sc_eval->add_option("--json", json_path, "optional JSON summary");

  if (argc <= 1) {
    std::cout << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    omgsr::Config cfg;
    if (!config_path.empty()) cfg = omgsr::Config::load(config_path);
    const std::uint64_t master_seed =
        seed_override ? (std::uint64_t)*seed_override
                      : (std::uint64_t)cfg.get_int("run.seed", 0);
    omgsr::Rng master(master_seed);
    auto sched_cfg = omgsr::schedule_from_config<Scalar>(cfg);
    auto model_cfg = model_from_config(cfg);

    if (*sc_synth) {
      fs::create_directories(data_dir);
      auto deg = degradation_from_config(cfg);
      omgsr::Rng gen = master.fork(0xda7a);
      for (int i = 0; i < synth_count; ++i) {
        const auto tex_seed = gen.raw();
        const auto deg_seed = gen.raw();
        auto hq = omgsr::procedural_texture<Scalar>(tex_seed, synth_size);
        auto lq = omgsr::degrade(hq, deg, deg_seed);
        char name[32];
        std::snprintf(name, sizeof name, "%04d", i);
        omgsr::write_png((fs::path(data_dir) / (std::string("hq_") + name + ".png")).string(), hq);
        omgsr::write_png((fs::path(data_dir) / (std::string("lq_") + name + ".png")).string(), lq);
      }
      return 0;
    }

    if (*sc_degrade) {
      auto hq = omgsr::read_png<Scalar>(in_path);
      omgsr::DegradationSample<Scalar> sample;
      auto lq = omgsr::degrade(hq, degradation_from_config(cfg),
                               master.fork(0xde9).raw(), &sample);
      omgsr::write_png(out_path, lq);
      json side{{"blur_sigma", sample.blur_sigma},
                {"noise_sigma", sample.noise_sigma},
                {"quality", sample.quality},
                {"blur_sigma2", sample.blur_sigma2},
                {"noise_sigma2", sample.noise_sigma2},
                {"quality2", sample.quality2}};
      write_text(out_path + ".json", side.dump(2) + "\n");
      return 0;
    }

    if (*sc_chunk) {
      auto layout = omgsr::plan_chunks(ch_h, ch_w, ch_patch, ch_overlap);
      const std::string body = layout_to_json(layout).dump(2) + "\n";
      if (out_path.empty())
        std::cout << body;
      else
        write_text(out_path, body);
      return 0;
    }

    if (*sc_pre) {
      omgsr::Rng init = master.fork(0x1417);
      omgsr::CheckpointBundle<Scalar> bundle(model_cfg, sched_cfg, init);
      bundle.scale_factor = (int)cfg.get_int("degrade.factor", 4);
      auto ds = dataset_from_config(cfg, master, false);
      auto log = omgsr::pretrain(
          bundle, ds, (int)cfg.get_int("train.pretrain_vae_steps", 2000),
          (int)cfg.get_int("train.pretrain_denoiser_steps", 2000),
          (Scalar)cfg.get_real("train.pretrain_lr", 1e-3),
          master.fork(0x93e).raw(), (int)cfg.get_int("train.crop", 0));
      omgsr::save_checkpoint(bundle, ckpt_path, true);
      std::cout << "pretrain: vae " << log.vae_loss.front() << " -> "
                << log.vae_loss.back() << ", denoiser "
                << log.denoiser_loss.front() << " -> "
                << log.denoiser_loss.back() << "\n";
      return 0;
    }

    if (*sc_tstar) {
      auto bundle = omgsr::load_checkpoint<Scalar>(ckpt_path);
      auto ds = dataset_from_config(cfg, master, false);
      omgsr::MidTimestepReport<Scalar> report;
      select_t_star(bundle, ds, master,
                    (int)cfg.get_int("train.t_pairs", 16),
                    full_grid ? 1 : (int)cfg.get_int("train.t_grid_stride", 5),
                    &report);
      json j{{"t_star", report.t_star},
             {"dataset_size", report.dataset_size},
             {"per_t_mse", json::object()}};
      for (const auto& [t, mse] : report.per_t_mse)
        j["per_t_mse"][std::to_string(t)] = mse;
      write_text(out_path, j.dump(2) + "\n");
      if (!csv_path.empty()) {
        std::ostringstream os;
        report.write_csv(os);
        write_text(csv_path, os.str());
      }
      return 0;
    }

    if (*sc_gap) {
      auto bundle = omgsr::load_checkpoint<Scalar>(ckpt_path);
      omgsr::NoiseSchedule<Scalar> sched(bundle.sched_cfg);
      auto report = omgsr::gap_probe(bundle.denoiser, bundle.vae, sched,
                                     gap_steps, gap_inj_step,
                                     (Scalar)gap_inj_level,
                                     master.fork(0x9a9).raw(),
                                     (int)cfg.get_int("probe.latent_h", 16),
                                     (int)cfg.get_int("probe.latent_w", 16));
      json j{{"injection_level", report.injection_level},
             {"step_mse", json::array()}};
      if (report.injection_step) j["injection_step"] = *report.injection_step;
      for (const auto& [k, mse] : report.step_mse)
        j["step_mse"].push_back({{"step", k}, {"mse", mse}});
      write_text(out_path, j.dump(2) + "\n");
      if (!csv_path.empty()) {
        std::ostringstream os;
        report.write_csv(os);
        write_text(csv_path, os.str());
      }
      return 0;
    }

    if (*sc_fine) {
      auto bundle = omgsr::load_checkpoint<Scalar>(ckpt_path);
      auto ds = dataset_from_config(cfg, master, false);
      auto tc = train_from_config(cfg);
      const long t_cfg = cfg.get_int("train.t_star", -1);
      bundle.t_star = t_cfg >= 0
                          ? (int)t_cfg
                          : select_t_star(bundle, ds, master,
                                          (int)cfg.get_int("train.t_pairs", 16),
                                          (int)cfg.get_int("train.t_grid_stride", 5));
      omgsr::FinetuneState<Scalar> state(bundle, tc, master.fork(0xf17e).raw());
      omgsr::Rng pick = master.fork(0x91c4);
      for (int s = 0; s < fine_steps; ++s) {
        const int i = pick.uniform_int(0, ds.size() - 1);
        std::pair<omgsr::Tensor<Scalar>, omgsr::Tensor<Scalar>> sample{ds.lq[i], ds.hq[i]};
        if (tc.crop > 0)
          sample = omgsr::random_crop_pair(ds.lq[i], ds.hq[i], tc.crop, pick);
        omgsr::finetune_step(state, {sample});
      }
      omgsr::save_checkpoint(bundle, out_path, true);
      if (!log_path.empty()) {
        std::ostringstream os;
        omgsr::write_loss_log(state.log, os);
        write_text(log_path, os.str());
      }
      return 0;
    }

    if (*sc_restore) {
      auto bundle = omgsr::load_checkpoint<Scalar>(ckpt_path);
      omgsr::write_png(out_path, omgsr::restore(bundle, omgsr::read_png<Scalar>(in_path)));
      return 0;
    }

    if (*sc_tile) {
      auto bundle = omgsr::load_checkpoint<Scalar>(ckpt_path);
      omgsr::write_png(out_path,
                       omgsr::tiled_restore(bundle, omgsr::read_png<Scalar>(in_path),
                                            tile, tile_overlap));
      return 0;
    }

    if (*sc_eval) {
      auto bundle = omgsr::load_checkpoint<Scalar>(ckpt_path);
      auto ds = dataset_from_config(cfg, master, true);
      std::vector<std::tuple<std::string, omgsr::Tensor<Scalar>, omgsr::Tensor<Scalar>>> pairs;
      for (int i = 0; i < ds.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "val_%04d", i);
        pairs.emplace_back(name, ds.lq[i], ds.hq[i]);
      }
      omgsr::PerceptualEmbedder<Scalar> emb(bundle.model_cfg);
      auto rep = omgsr::evaluate<Scalar>(
          [&](const omgsr::Tensor<Scalar>& lq) { return omgsr::restore(bundle, lq); },
          pairs, emb);
      std::ostringstream os;
      rep.write_csv(os);
      write_text(csv_path, os.str());
      if (!json_path.empty()) {
        json j{{"count", rep.rows.size()},
               {"mean_psnr", rep.mean_psnr},
               {"mean_ssim", rep.mean_ssim},
               {"mean_pdist", rep.mean_pdist}};
        write_text(json_path, j.dump(2) + "\n");
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
