#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "omgsr/models.hpp"
#include "omgsr/rng.hpp"
#include "omgsr/schedule.hpp"

namespace omgsr {

// Everything needed to resume training or run inference: configs, the
// selected mid-timestep, and the three networks.
template <typename S>
struct CheckpointBundle {
  ModelConfig<S> model_cfg;
  ScheduleConfig<S> sched_cfg;
  int t_star = -1;      // -1 until the data-driven selection has run
  int scale_factor = 4;  // stage-1 upscale
  long step = 0;
  int vae_lora_rank = 0;
  int denoiser_lora_rank = 0;
  S lora_scale = S(1);
  long gen_opt_steps = 0;   // AdamW bias-correction counters; saved so a
  long disc_opt_steps = 0;  // resumed run replays the exact update rule

  VaeModel<S> vae;
  DenoiserModel<S> denoiser;
  Discriminator<S> disc;

  CheckpointBundle(const ModelConfig<S>& mc, const ScheduleConfig<S>& sc, Rng& rng)
      : model_cfg(mc),
        sched_cfg(sc),
        vae(mc, rng),
        denoiser(mc, rng),
        disc(mc, rng) {
    denoiser.set_max_step(sc.num_steps);
  }

  // LoRA on the VAE encoder and on every denoiser conv; base weights freeze.
  void inject_adapters(int vae_rank, int den_rank, S scale, Rng& rng) {
    if (vae_rank > 0)
      inject_lora<S>(vae, {"enc1", "enc2", "enc3"}, vae_rank, scale, rng);
    if (den_rank > 0) inject_lora_all<S>(denoiser, den_rank, scale, rng);
    vae_lora_rank = vae_rank;
    denoiser_lora_rank = den_rank;
    lora_scale = scale;
  }

  std::vector<nn::ParamRef<S>> all_params() {
    std::vector<nn::ParamRef<S>> out = vae.params("vae");
    for (auto& r : denoiser.params("denoiser")) out.push_back(r);
    for (auto& r : disc.params("disc")) out.push_back(r);
    return out;
  }
};

namespace detail {

inline void write_f32_blob(const std::filesystem::path& path,
                           const Eigen::Array<double, Eigen::Dynamic, 1>& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const float f = static_cast<float>(v[i]);
    os.write(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

inline void write_f32_blob(const std::filesystem::path& path,
                           const Eigen::Array<float, Eigen::Dynamic, 1>& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

template <typename S>
void read_f32_blob(const std::filesystem::path& path,
                   Eigen::Array<S, Eigen::Dynamic, 1>& v) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::vector<float> buf(static_cast<std::size_t>(v.size()));
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    throw std::runtime_error("checkpoint: short read on " + path.string());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(buf[i]);
}

}  // namespace detail

// Checkpoint directory layout: manifest.json plus one little-endian f32 blob
// per parameter, named by the parameter's dotted path ("vae.enc1.weight.bin").
// Adam moments are saved alongside as .m.bin/.s.bin when requested.
template <typename S>
void save_checkpoint(CheckpointBundle<S>& bundle, const std::string& dir,
                     bool save_optimizer = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json m;
  m["format"] = 1;
  m["scalar"] = "f32";
  m["step"] = bundle.step;
  m["t_star"] = bundle.t_star;
  m["scale_factor"] = bundle.scale_factor;
  m["schedule"] = {
      {"kind", bundle.sched_cfg.kind == SchedulerKind::Ddpm ? "ddpm" : "fm"},
      {"num_steps", bundle.sched_cfg.num_steps},
      {"beta_start", static_cast<double>(bundle.sched_cfg.beta_start)},
      {"beta_end", static_cast<double>(bundle.sched_cfg.beta_end)},
      {"shift", static_cast<double>(bundle.sched_cfg.shift)}};
  const auto& mc = bundle.model_cfg;
  m["model"] = {{"latent_channels", mc.latent_channels},
                {"downsample_factor", mc.downsample_factor},
                {"vae_channels", mc.vae_channels},
                {"denoiser_channels", mc.denoiser_channels},
                {"denoiser_blocks", mc.denoiser_blocks},
                {"t_embed_dim", mc.t_embed_dim},
                {"conditioning_dim", mc.conditioning_dim},
                {"disc_channels", mc.disc_channels},
                {"disc_native_input", mc.disc_native_input},
                {"embedder_channels", mc.embedder_channels},
                {"embedder_seed", mc.embedder_seed}};
  m["lora"] = {{"vae_rank", bundle.vae_lora_rank},
               {"denoiser_rank", bundle.denoiser_lora_rank},
               {"scale", static_cast<double>(bundle.lora_scale)}};
  m["latent_scale"] = static_cast<double>(bundle.vae.latent_scale());
  m["optimizer_state"] = save_optimizer;
  m["gen_opt_steps"] = bundle.gen_opt_steps;
  m["disc_opt_steps"] = bundle.disc_opt_steps;

  auto refs = bundle.all_params();
  nlohmann::json plist = nlohmann::json::array();
  for (auto& r : refs) {
    plist.push_back({{"name", r.name}, {"size", r.p->v.size()}});
    detail::write_f32_blob(fs::path(dir) / (r.name + ".bin"), r.p->v);
    if (save_optimizer) {
      // moments are lazily sized by the optimizer; materialize zeros so the
      // blobs always match the parameter size
      if (r.p->m.size() != r.p->v.size()) {
        r.p->m = nn::Vec<S>::Zero(r.p->v.size());
        r.p->s = nn::Vec<S>::Zero(r.p->v.size());
      }
      detail::write_f32_blob(fs::path(dir) / (r.name + ".m.bin"), r.p->m);
      detail::write_f32_blob(fs::path(dir) / (r.name + ".s.bin"), r.p->s);
    }
  }
  m["params"] = plist;

  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
  os << m.dump(2) << '\n';
}

template <typename S>
CheckpointBundle<S> load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw std::runtime_error("checkpoint: cannot open manifest in " + dir);
  nlohmann::json m = nlohmann::json::parse(is);

  ModelConfig<S> mc;
  const auto& jm = m.at("model");
  mc.latent_channels = jm.at("latent_channels");
  mc.downsample_factor = jm.at("downsample_factor");
  mc.vae_channels = jm.at("vae_channels");
  mc.denoiser_channels = jm.at("denoiser_channels");
  mc.denoiser_blocks = jm.at("denoiser_blocks");
  mc.t_embed_dim = jm.at("t_embed_dim");
  mc.conditioning_dim = jm.at("conditioning_dim");
  mc.disc_channels = jm.at("disc_channels");
  mc.disc_native_input = jm.at("disc_native_input");
  mc.embedder_channels = jm.at("embedder_channels");
  mc.embedder_seed = jm.at("embedder_seed");

  ScheduleConfig<S> sc;
  const auto& js = m.at("schedule");
  sc.kind = js.at("kind") == "fm" ? SchedulerKind::Fm : SchedulerKind::Ddpm;
  sc.num_steps = js.at("num_steps");
  sc.beta_start = static_cast<S>(js.at("beta_start").template get<double>());
  sc.beta_end = static_cast<S>(js.at("beta_end").template get<double>());
  sc.shift = static_cast<S>(js.at("shift").template get<double>());

  Rng scratch(0);  // every value is overwritten from the blobs below
  CheckpointBundle<S> bundle(mc, sc, scratch);
  bundle.t_star = m.at("t_star");
  bundle.scale_factor = m.at("scale_factor");
  bundle.step = m.at("step");
  bundle.gen_opt_steps = m.value("gen_opt_steps", 0l);
  bundle.disc_opt_steps = m.value("disc_opt_steps", 0l);
  bundle.vae.set_latent_scale(static_cast<S>(m.value("latent_scale", 1.0)));
  const auto& jl = m.at("lora");
  if (jl.at("vae_rank").template get<int>() > 0 ||
      jl.at("denoiser_rank").template get<int>() > 0)
    bundle.inject_adapters(jl.at("vae_rank"), jl.at("denoiser_rank"),
                           static_cast<S>(jl.at("scale").template get<double>()),
                           scratch);

  const bool opt = m.at("optimizer_state");
  auto refs = bundle.all_params();
  std::map<std::string, nn::Param<S>*> by_name;
  for (auto& r : refs) by_name[r.name] = r.p;
  for (const auto& jp : m.at("params")) {
    const std::string name = jp.at("name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unknown parameter " + name);
    if (it->second->v.size() != jp.at("size").template get<Eigen::Index>())
      throw std::runtime_error("checkpoint: size mismatch for " + name);
    detail::read_f32_blob(fs::path(dir) / (name + ".bin"), it->second->v);
    if (opt) {
      it->second->m = nn::Vec<S>::Zero(it->second->v.size());
      it->second->s = nn::Vec<S>::Zero(it->second->v.size());
      detail::read_f32_blob(fs::path(dir) / (name + ".m.bin"), it->second->m);
      detail::read_f32_blob(fs::path(dir) / (name + ".s.bin"), it->second->s);
    }
  }
  return bundle;
}

}  // namespace omgsr
