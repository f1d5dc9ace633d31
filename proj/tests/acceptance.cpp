// Acceptance suite: ten criteria, one PASS/FAIL line each, nonzero exit if
// any fail. An optional argv lists criterion numbers to run (default: all).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "omgsr/checkpoint.hpp"
#include "omgsr/chunking.hpp"
#include "omgsr/dataset.hpp"
#include "omgsr/degrade.hpp"
#include "omgsr/infer.hpp"
#include "omgsr/losses.hpp"
#include "omgsr/metrics.hpp"
#include "omgsr/midstep.hpp"
#include "omgsr/predict.hpp"
#include "omgsr/trainer.hpp"

using namespace omgsr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Harness {
  int failures = 0;
  void report(int k, bool pass, const std::string& detail) {
    std::printf("CRITERION %d: %s%s%s\n", k, pass ? "PASS" : "FAIL",
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

// ---- shared toy-experiment scale ------------------------------------------

ModelConfig<float> experiment_model() {
  ModelConfig<float> m;  // library defaults; restated here so the experiment
  m.vae_channels = 16;   // scale is pinned in one place
  m.denoiser_channels = 24;
  m.denoiser_blocks = 2;
  m.disc_channels = 16;
  m.disc_native_input = 224;
  m.embedder_channels = 8;
  return m;
}

// Flow-matching schedule: its interpolation weights sum to 1, so the
// data-driven mid-timestep search lands at an interior step once the LQ/HQ
// latent distributions separate (the DDPM weights satisfy w0^2 + we^2 = 1,
// which at unit latent scale pins the paired-MSE argmin to t = 0).
ScheduleConfig<float> experiment_schedule() {
  ScheduleConfig<float> s;
  s.kind = SchedulerKind::Fm;
  return s;
}

DegradationConfig<float> experiment_degradation() {
  DegradationConfig<float> d;
  d.blur_sigma_range = {1.5f, 3.0f};
  d.noise_sigma_range = {0.10f, 0.20f};
  d.compression_quality_range = {40, 80};
  return d;
}

constexpr int kTrainImages = 200;
constexpr int kValImages = 50;
constexpr int kHqSize = 256;
constexpr int kCrop = 64;  // HQ-pixel training crop
constexpr int kPretrainVae = 2500;
constexpr int kPretrainDen = 1500;
constexpr float kPretrainLr = 1e-3f;
constexpr int kFinetuneSteps = 3000;
constexpr float kFinetuneLr = 2e-4f;

const PairDataset<float>& train_set() {
  static PairDataset<float> ds =
      make_dataset<float>(kTrainImages, kHqSize, experiment_degradation(), 0xACC0);
  return ds;
}

const PairDataset<float>& val_set() {
  static PairDataset<float> ds =
      make_dataset<float>(kValImages, kHqSize, experiment_degradation(), 0xACC1);
  return ds;
}

// One pretrained checkpoint shared by criteria 7 and 8; cached on disk so a
// partial rerun of the suite does not retrain.
const std::string kFixtureDir = "acceptance_fixture";

CheckpointBundle<float> pretrained_bundle() {
  if (fs::exists(fs::path(kFixtureDir) / "manifest.json"))
    return load_checkpoint<float>(kFixtureDir);
  Rng rng(0xACC2);
  CheckpointBundle<float> bundle(experiment_model(), experiment_schedule(), rng);
  pretrain(bundle, train_set(), kPretrainVae, kPretrainDen, kPretrainLr, 0xACC3,
           kCrop);
  save_checkpoint(bundle, kFixtureDir, true);
  return bundle;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

// ---- criterion bodies -----------------------------------------------------

// 1: schedule identities against independent oracles, full grid, both kinds.
bool criterion1(std::string& detail) {
  const auto t0 = Clock::now();
  ScheduleConfig<double> dc;
  NoiseSchedule<double> dd(dc);
  double prod = 1.0;
  for (int t = 0; t <= 999; ++t) {
    if (t > 0) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 998.0);
    if (std::abs(dd.alpha_bar(t) - prod) > 1e-12) return false;
    const auto [w0, we] = dd.mix_weights(t);
    if (std::abs(w0 * w0 + we * we - 1.0) > 1e-12) return false;  // DDPM identity
  }
  if (dd.alpha_bar(0) != 1.0) return false;
  if (dd.alpha_bar(999) >= 1e-3) return false;  // endpoint: data weight gone

  ScheduleConfig<double> fc;
  fc.kind = SchedulerKind::Fm;
  NoiseSchedule<double> fm(fc);
  for (int t = 0; t <= 999; ++t) {
    const double u = t / 999.0;
    const double sig = 3.0 * u / (1.0 + 2.0 * u);
    if (std::abs(fm.sigma(t) - sig) > 1e-12) return false;
    const auto [w0, we] = fm.mix_weights(t);
    if (std::abs(w0 + we - 1.0) > 1e-12) return false;  // FM linearity
    if (t > 0 && fm.sigma(t) <= fm.sigma(t - 1)) return false;
  }
  if (fm.sigma(0) != 0.0 || std::abs(fm.sigma(999) - 1.0) > 1e-12) return false;

  // linearity of the interpolation in both arguments
  Rng rng(1);
  auto a = rng.normal_tensor<double>(2, 4, 4), b = rng.normal_tensor<double>(2, 4, 4);
  for (int t : {0, 195, 500, 999}) {
    auto mixed = dd.add_noise(a, b, t);
    const auto [w0, we] = dd.mix_weights(t);
    Tensor<double> direct = a.like_zeros();
    direct.data = w0 * a.data + we * b.data;
    if ((mixed.data - direct.data).abs().maxCoeff() > 1e-12) return false;
  }
  const double dt = seconds_since(t0);
  detail = "both schedules match oracles on the full grid, " +
           std::to_string(dt) + " s";
  return dt < 1.0;
}

// 2: predict_one_step inverts the forward interpolation, 1000 triples/branch.
bool criterion2(std::string& detail) {
  const auto t0 = Clock::now();
  double worst = 0;
  for (auto kind : {SchedulerKind::Ddpm, SchedulerKind::Fm}) {
    ScheduleConfig<double> c;
    c.kind = kind;
    NoiseSchedule<double> s(c);
    Rng rng(kind == SchedulerKind::Ddpm ? 20 : 21);
    for (int i = 0; i < 1000; ++i) {
      const int t = rng.uniform_int(0, 999);
      auto z_H = rng.normal_tensor<double>(4, 8, 8);
      auto eps = rng.normal_tensor<double>(4, 8, 8);
      auto z_t = s.add_noise(z_H, eps, t);
      // the model target that exactly explains z_t
      Tensor<double> pred = eps.like_zeros();
      pred.data = kind == SchedulerKind::Ddpm ? eps.data : eps.data - z_H.data;
      auto rec = predict_one_step(s, z_t, pred, t);
      worst = std::max(worst,
                       (double)(rec.data - z_H.data).abs().maxCoeff());
    }
  }
  const double dt = seconds_since(t0);
  detail = "max abs reconstruction error " + std::to_string(worst) + ", " +
           std::to_string(dt) + " s";
  return worst <= 1e-5 && dt < 5.0;
}

// 3: mid-timestep argmin vs brute force on 100 randomized instances.
bool criterion3(std::string& detail) {
  const auto t0 = Clock::now();
  Rng rng(30);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ScheduleConfig<double> c;
    c.kind = trial % 2 == 0 ? SchedulerKind::Ddpm : SchedulerKind::Fm;
    c.num_steps = 100 + 10 * (trial % 5);
    NoiseSchedule<double> s(c);
    const int n = rng.uniform_int(1, 32);
    const int side = rng.uniform_int(2, 16);
    const bool tie_case = trial % 10 == 9;  // degenerate all-tied instances

    std::vector<std::pair<Tensor<double>, Tensor<double>>> pairs;
    std::vector<Tensor<double>> eps;
    for (int i = 0; i < n; ++i) {
      if (tie_case) {
        // all-zero instance: the gap is exactly zero at every candidate, so
        // the argmin is decided purely by the tie-break
        pairs.emplace_back(Tensor<double>::zeros(2, side, side),
                           Tensor<double>::zeros(2, side, side));
        eps.push_back(Tensor<double>::zeros(2, side, side));
      } else {
        pairs.emplace_back(rng.normal_tensor<double>(2, side, side),
                           rng.normal_tensor<double>(2, side, side));
        eps.push_back(rng.normal_tensor<double>(2, side, side));
      }
    }
    auto grid = default_candidate_grid(c.num_steps, 5);
    if (tie_case) std::reverse(grid.begin(), grid.end());  // order-free tie-break

    auto rep = precompute_mid_timestep(pairs, s, eps, grid);
    // independent exhaustive recomputation
    int best_t = -1;
    double best = 0;
    for (int t : grid) {
      const auto [w0, we] = s.mix_weights(t);
      double acc = 0;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        for (Eigen::Index j = 0; j < pairs[i].first.size(); ++j) {
          const double d = pairs[i].first.data[j] -
                           (w0 * pairs[i].second.data[j] + we * eps[i].data[j]);
          acc += d * d;
        }
      if (best_t < 0 || acc < best || (acc == best && t < best_t)) {
        best = acc;
        best_t = t;
      }
    }
    if (rep.t_star == best_t) ++agree;
  }
  const double dt = seconds_since(t0);
  detail = std::to_string(agree) + "/100 agree, " + std::to_string(dt) + " s";
  return agree == 100 && dt < 30.0;
}

// 4: chunk-geometry sweep plus the two pinned layouts.
bool criterion4(std::string& detail) {
  Rng rng(40);
  int combos = 0;
  for (int size = 224; size <= 1024; size += 50)
    for (int patch : {224, 518}) {
      if (patch > size) continue;
      for (int overlap : {0, 8, 32}) {
        auto l = plan_chunks(size, size, patch, overlap);
        ++combos;
        // coverage and minimum overlap along each axis
        for (const auto& starts : {l.starts_y, l.starts_x}) {
          if (starts.front() != 0) return false;
          if (starts.back() + patch != size && starts.size() > 1) return false;
          if (starts.size() == 1 && patch < size) return false;
          for (std::size_t i = 1; i < starts.size(); ++i) {
            const int stride = starts[i] - starts[i - 1];
            if (stride <= 0 || patch - stride < overlap) return false;
          }
          // minimality: one fewer patch cannot cover with this overlap
          const int k = (int)starts.size();
          if (k > 1 && (k - 2) * (patch - overlap) + patch >= size) return false;
        }
        // extract -> feather blend identity
        auto img = rng.uniform_tensor<double>(1, size, size, -1.0, 1.0);
        auto back = blend_chunks(extract_chunks(img, l), l);
        if ((back.data - img.data).abs().maxCoeff() > 1e-9) return false;
      }
    }
  auto a = plan_chunks(512, 512, 224, 32);
  if (a.starts_y != std::vector<int>{0, 144, 288} || a.count() != 9) return false;
  auto b = plan_chunks(1024, 1024, 518, 8);
  if (b.starts_y != std::vector<int>{0, 506} || b.count() != 4) return false;
  detail = std::to_string(combos) + " sweep combinations plus pinned 3x3/2x2";
  return true;
}

// 5: loss oracles at 1e-12 and finite-difference gradients at h = 1e-3.
bool criterion5(std::string& detail) {
  Rng rng(50);
  ScheduleConfig<double> sc;
  NoiseSchedule<double> sched(sc);
  ModelConfig<double> mc;
  mc.embedder_channels = 4;
  mc.disc_channels = 4;
  PerceptualEmbedder<double> emb(mc);
  Discriminator<double> disc(mc, rng);
  auto layout = plan_chunks(8, 8, 8, 0);

  auto x = rng.uniform_tensor<double>(3, 8, 8, -1.0, 1.0);
  auto y = rng.uniform_tensor<double>(3, 8, 8, -1.0, 1.0);

  // scalar oracles
  double acc = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x.data[i] - y.data[i];
    acc += d * d;
  }
  if (std::abs(mse_loss(x, y) - acc / x.size()) > 1e-12) return false;

  auto z_H = rng.normal_tensor<double>(3, 8, 8);
  auto eps = rng.normal_tensor<double>(3, 8, 8);
  const auto [w0, we] = sched.mix_weights(195);
  acc = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x.data[i] - (w0 * z_H.data[i] + we * eps.data[i]);
    acc += d * d;
  }
  if (std::abs(lan_loss(x, z_H, eps, sched, 195) - acc / x.size()) > 1e-12)
    return false;

  // oc-lpips single-patch reduction equals the plain distance
  if (std::abs(oc_lpips(x, y, emb, layout) - lpips_distance(emb, x, y)) > 1e-12)
    return false;
  // gan scalar oracle via the captured probability
  {
    struct Probe {
      Discriminator<double>* d;
      mutable std::vector<double> seen;
      double forward(const Tensor<double>& p, bool c = false) const {
        const double v = d->forward(p, c);
        seen.push_back(v);
        return v;
      }
      Tensor<double> backward(double g, bool a, bool n) const {
        return d->backward(g, a, n);
      }
    } probe{&disc, {}};
    const double g_loss = oc_gan_g_loss(x, probe, layout);
    if (std::abs(g_loss + std::log(probe.seen[0])) > 1e-12) return false;
    probe.seen.clear();
    const double d_loss = oc_gan_d_loss(y, x, probe, layout);
    if (std::abs(d_loss + std::log(probe.seen[0]) +
                 std::log(1.0 - probe.seen[1])) > 1e-12)
      return false;
  }

  // finite-difference agreement at h = 1e-3, >= 99% of coordinates
  const auto fraction = [&](Tensor<double>& in, const Tensor<double>& grad,
                            const std::function<double()>& f) {
    Eigen::Index ok = 0;
    for (Eigen::Index i = 0; i < in.size(); ++i) {
      const double orig = in.data[i];
      in.data[i] = orig + 1e-3;
      const double fp = f();
      in.data[i] = orig - 1e-3;
      const double fm = f();
      in.data[i] = orig;
      const double fd = (fp - fm) / 2e-3;
      const double a = grad.data[i];
      const double denom = std::max({std::abs(fd), std::abs(a), 1e-8});
      if (std::abs(fd - a) <= 1e-3 * denom + 1e-8) ++ok;
    }
    return (double)ok / (double)in.size();
  };

  auto g = mse_loss_grad(x, y);
  if (fraction(x, g, [&] { return mse_loss(x, y); }) < 0.99) return false;
  g = lan_loss_grad(x, z_H, eps, sched, 195);
  if (fraction(x, g, [&] { return lan_loss(x, z_H, eps, sched, 195); }) < 0.99)
    return false;
  Tensor<double> gl;
  oc_lpips(x, y, emb, layout, &gl);
  if (fraction(x, gl, [&] { return oc_lpips(x, y, emb, layout); }) < 0.99)
    return false;
  Tensor<double> gg;
  oc_gan_g_loss(x, disc, layout, &gg);
  if (fraction(x, gg, [&] { return oc_gan_g_loss(x, disc, layout); }) < 0.99)
    return false;

  // breakdown identity with the default weights
  LossBreakdown<double> c{0.3, 0.7, 0.11, -0.2, 0.0, 0.0};
  LossWeights<double> w;
  const double expect = 5 * 0.3 + 2 * 0.7 + 5 * 0.11 + 0.5 * -0.2;
  if (std::abs(total_loss(c, w).total - expect) > 1e-12) return false;

  detail = "scalar oracles at 1e-12; all four gradients >= 99% at h = 1e-3";
  return true;
}

// 6: analytic GAN anchors at D = 0.5.
bool criterion6(std::string& detail) {
  struct Half {
    double forward(const Tensor<double>&, bool = false) const { return 0.5; }
    Tensor<double> backward(double, bool, bool) const {
      return Tensor<double>(3, 1, 1);
    }
  } half;
  auto layout = plan_chunks(32, 32, 16, 4);
  auto img = Tensor<double>::zeros(3, 32, 32);
  const double d = oc_gan_d_loss(img, img, half, layout);
  const double g = oc_gan_g_loss(img, half, layout);
  detail = "D loss " + std::to_string(d) + ", G loss " + std::to_string(g);
  return std::abs(d - 2 * std::log(2.0)) <= 1e-6 &&
         std::abs(g - std::log(2.0)) <= 1e-6;
}

// 7: gap-probe divergence ordering across injection levels on the pretrained
// toy model.
bool criterion7(std::string& detail) {
  const auto t0 = Clock::now();
  auto bundle = pretrained_bundle();
  NoiseSchedule<float> sched(bundle.sched_cfg);
  int ok_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::vector<double> finals;
    for (float level : {0.0f, 0.3f, 0.8f}) {
      // 32x32 probe latent: the per-element gap statistic averages over 4x
      // more sites, keeping its sampling noise below the injection effect
      auto rep = gap_probe(bundle.denoiser, bundle.vae, sched, 20,
                           std::optional<int>(10), level, seed, 32, 32);
      finals.push_back((double)rep.step_mse.back().second);
    }
    if (finals[0] <= finals[1] && finals[1] <= finals[2]) ++ok_seeds;
  }
  const double dt = seconds_since(t0);
  detail = std::to_string(ok_seeds) + "/10 seeds ordered, " +
           std::to_string(dt) + " s";
  return ok_seeds >= 9 && dt < 120.0;
}

// 8: end-to-end toy experiment, t* arm vs bicubic and vs the t = 999 arm.
bool criterion8(std::string& detail) {
  const auto t0 = Clock::now();
  const auto& val = val_set();

  std::vector<double> bicubic_psnr;
  for (int i = 0; i < val.size(); ++i)
    bicubic_psnr.push_back(psnr(bicubic_upscale(val.lq[i], 4), val.hq[i]));
  const double bicubic_mean = mean(bicubic_psnr);

  auto base = pretrained_bundle();
  // pre-trained VAE round-trip quality on held-out images
  double recon = 0;
  for (int i = 0; i < val.size(); ++i)
    recon += psnr(base.vae.decode(base.vae.encode(val.hq[i], false)), val.hq[i]);
  recon /= val.size();

  // data-selected mid-timestep from frozen-encoder latents
  std::vector<std::pair<Tensor<float>, Tensor<float>>> latents;
  const auto& tr = train_set();
  for (int i = 0; i < 16; ++i)
    latents.emplace_back(
        base.vae.encode(bicubic_upscale(tr.lq[i], 4), false),
        base.vae.encode(tr.hq[i], false));
  Rng eps_rng(0xACC4);
  auto report = precompute_mid_timestep(latents, NoiseSchedule<float>(base.sched_cfg),
                                        eps_rng, default_candidate_grid(999, 5));
  const int t_star = report.t_star;

  const auto run_arm = [&](int t_m, std::uint64_t seed) {
    auto bundle = load_checkpoint<float>(kFixtureDir);
    bundle.t_star = t_m;
    TrainConfig<float> tc;
    tc.lr = kFinetuneLr;
    tc.grad_accum = 4;
    tc.vae_lora_rank = 4;  // ranks bounded by the 4-channel latent convs
    tc.denoiser_lora_rank = 4;
    tc.crop = kCrop;
    FinetuneState<float> state(bundle, tc, seed);
    Rng pick(Rng::mix(seed, 0xB41C));
    for (int s = 0; s < kFinetuneSteps; ++s) {
      const int i = pick.uniform_int(0, tr.size() - 1);
      auto sample = random_crop_pair(tr.lq[i], tr.hq[i], kCrop, pick);
      finetune_step(state, {sample});
    }
    std::vector<double> ps;
    for (int i = 0; i < val.size(); ++i)
      ps.push_back(psnr(restore(bundle, val.lq[i]), val.hq[i]));
    return mean(ps);
  };

  int star_wins = 0;
  std::vector<double> star_means;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double star = run_arm(t_star, seed);
    const double endpoint = run_arm(999, seed);
    star_means.push_back(star);
    if (star > endpoint) ++star_wins;
  }
  const double star_mean = mean(star_means);
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << "t*=" << t_star << ", vae recon " << recon << " dB, restore "
     << star_mean << " dB vs bicubic " << bicubic_mean << " dB, t* beats t=999 on "
     << star_wins << "/5 seeds, " << dt << " s";
  detail = os.str();
  return recon >= 25.0 && star_mean >= bicubic_mean + 0.5 && star_wins >= 4 &&
         dt <= 1800.0;
}

// 9: feathered tiling beats hard seams on every validation image; single
// tile matches the plain two-stage restore.
bool criterion9(std::string& detail) {
  auto bundle = pretrained_bundle();
  bundle.t_star = 195;
  const auto& val = val_set();

  // single-tile equivalence: a tile covering the whole 256x256 stage-1
  // output must reproduce the plain two-stage restore
  auto plain1 = restore(bundle, val.lq[0]);
  auto plain2 = detail::restore_scaled(bundle, plain1, 2);
  auto tiled1 = tiled_restore(bundle, val.lq[0], plain1.height, 0);
  if (!tiled1.same_shape(plain2) ||
      (tiled1.data - plain2.data).abs().maxCoeff() > 1e-6f) {
    detail = "single-tile equivalence failed";
    return false;
  }

  int ok = 0;
  for (int i = 0; i < val.size(); ++i) {
    auto feather = tiled_restore(bundle, val.lq[i], 64, 16, 2, BlendMode::Feather);
    auto hard = tiled_restore(bundle, val.lq[i], 64, 16, 2, BlendMode::None);
    auto layout = plan_chunks(256, 256, 64, 16).scaled(2);
    if (seam_statistic(feather, layout) < seam_statistic(hard, layout)) ++ok;
  }
  detail = std::to_string(ok) + "/" + std::to_string(val.size()) +
           " images with strictly lower seam statistic";
  return ok == val.size();
}

// 10: byte-identical artifacts from repeated seeded CLI runs.
bool criterion10(std::string& detail) {
#ifndef ACCEPTANCE_CLI_PATH
  detail = "CLI path not configured";
  return false;
#else
  const std::string cli = ACCEPTANCE_CLI_PATH;
  const fs::path dir = fs::path("acceptance_cli");
  fs::remove_all(dir);
  fs::create_directories(dir);

  // tiny config so every subcommand runs in seconds
  const fs::path cfgp = dir / "toy.cfg";
  {
    std::ofstream os(cfgp);
    os << "model.vae_channels = 4\nmodel.denoiser_channels = 6\n"
          "model.denoiser_blocks = 1\nmodel.disc_channels = 4\n"
          "model.embedder_channels = 4\nscheduler.num_steps = 200\n"
          "data.count = 4\ndata.val_count = 2\ndata.hq_size = 32\n"
          "train.pretrain_vae_steps = 30\ntrain.pretrain_denoiser_steps = 30\n"
          "train.vae_lora_rank = 2\ntrain.denoiser_lora_rank = 2\n"
          "train.lr = 1e-3\ntrain.grad_accum = 1\n";
  }
  const std::string base = cli + " --config " + cfgp.string() + " --seed 7 ";
  const auto sh = [&](const std::string& cmd) {
    return std::system((cmd + " >/dev/null 2>&1").c_str()) == 0;
  };
  const auto same = [&](const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
  };

  const std::string d = dir.string() + "/";
  struct Step {
    std::string cmd;           // with %R placeholder for the run tag
    std::vector<std::string> artifacts;
  };
  const std::vector<Step> steps = {
      {"synth-data --out " + d + "data%R --count 2 --size 32",
       {"data%R/hq_0000.png", "data%R/lq_0001.png"}},
      {"degrade --in " + d + "data%R/hq_0000.png --out " + d + "deg%R.png",
       {"deg%R.png", "deg%R.png.json"}},
      {"chunk-plan --height 512 --width 512 --patch 224 --overlap 32 --out " +
           d + "chunk%R.json",
       {"chunk%R.json"}},
      {"pretrain --out " + d + "ck%R", {"ck%R/manifest.json", "ck%R/vae.enc1.weight.bin"}},
      {"precompute-t --checkpoint " + d + "ck%R --out " + d + "t%R.json --csv " +
           d + "t%R.csv",
       {"t%R.json", "t%R.csv"}},
      {"probe-gap --checkpoint " + d + "ck%R --steps 6 --injection-step 2 "
       "--injection-level 0.3 --out " + d + "gap%R.json --csv " + d + "gap%R.csv",
       {"gap%R.json", "gap%R.csv"}},
      {"finetune --checkpoint " + d + "ck%R --out " + d + "ft%R --steps 4 --log " +
           d + "loss%R.csv",
       {"loss%R.csv", "ft%R/manifest.json", "ft%R/denoiser.conv_in.lora_a.bin"}},
      {"restore --checkpoint " + d + "ft%R --in " + d + "data%R/lq_0000.png --out " +
           d + "r%R.png",
       {"r%R.png"}},
      {"tile-restore --checkpoint " + d + "ft%R --in " + d +
           "data%R/lq_0000.png --out " + d + "tr%R.png --tile 16 --overlap 4",
       {"tr%R.png"}},
      {"evaluate --checkpoint " + d + "ft%R --out " + d + "ev%R.csv --json " + d +
           "ev%R.json",
       {"ev%R.csv", "ev%R.json"}},
  };
  const auto expand = [](std::string s, const std::string& tag) {
    for (std::size_t p; (p = s.find("%R")) != std::string::npos;)
      s.replace(p, 2, tag);
    return s;
  };
  for (const auto& step : steps)
    for (const std::string tag : {"A", "B"})
      if (!sh(base + expand(step.cmd, tag))) {
        detail = "command failed: " + expand(step.cmd, tag);
        return false;
      }
  int checked = 0;
  for (const auto& step : steps)
    for (const auto& art : step.artifacts) {
      if (!same(dir / expand(art, "A"), dir / expand(art, "B"))) {
        detail = "artifact differs: " + expand(art, "A");
        return false;
      }
      ++checked;
    }
  detail = "all 10 subcommands byte-identical across reruns (" +
           std::to_string(checked) + " artifacts)";
  return true;
#endif
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto want = [&](int k) { return only.empty() || only.count(k); };

  Harness h;
  const std::vector<std::pair<int, bool (*)(std::string&)>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8},
      {9, criterion9}, {10, criterion10}};
  for (const auto& [k, fn] : criteria) {
    if (!want(k)) continue;
    std::string detail;
    bool pass = false;
    try {
      pass = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    h.report(k, pass, detail);
  }
  return h.failures == 0 ? 0 : 1;
}
