#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "omgsr/checkpoint.hpp"
#include "omgsr/config.hpp"
#include "omgsr/rng.hpp"

using namespace omgsr;

namespace {

ModelConfig<float> toy_cfg() {
  ModelConfig<float> c;
  c.vae_channels = 4;
  c.denoiser_channels = 6;
  c.denoiser_blocks = 1;
  c.disc_channels = 4;
  c.embedder_channels = 4;
  return c;
}

std::filesystem::path temp_dir(const char* leaf) {
  auto p = std::filesystem::temp_directory_path() / "omgsr_test" / leaf;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config parses dotted keys with typed access") {
  std::istringstream is(
      "# comment\n"
      "\n"
      "scheduler.kind = fm   # trailing comment\n"
      "scheduler.num_steps=500\n"
      "train.lr = 2e-5\n"
      "train.second_order = true\n");
  auto cfg = Config::parse(is);
  CHECK(cfg.get_str("scheduler.kind", "ddpm") == "fm");
  CHECK(cfg.get_int("scheduler.num_steps", 999) == 500);
  CHECK(cfg.get_real("train.lr", 0.0) == doctest::Approx(2e-5));
  CHECK(cfg.get_bool("train.second_order", false));
  CHECK(cfg.get_int("missing.key", 42) == 42);
  CHECK(!cfg.has("missing.key"));

  auto sched = schedule_from_config<double>(cfg);
  CHECK(sched.kind == SchedulerKind::Fm);
  CHECK(sched.num_steps == 500);

  std::istringstream bad("no equals sign here\n");
  CHECK_THROWS_AS(Config::parse(bad), std::invalid_argument);
  std::istringstream badint("a.b = 12x\n");
  CHECK_THROWS_AS(Config::parse(badint).get_int("a.b", 0), std::invalid_argument);
  std::istringstream badkind("scheduler.kind = euler\n");
  CHECK_THROWS_AS(schedule_from_config<double>(Config::parse(badkind)),
                  std::invalid_argument);
}

TEST_CASE("checkpoint roundtrip is f32-exact including adapters and moments") {
  auto dir = temp_dir("roundtrip");
  ScheduleConfig<float> sc;
  Rng rng(120);
  CheckpointBundle<float> a(toy_cfg(), sc, rng);
  a.t_star = 195;
  a.step = 77;
  Rng lora_rng(121);
  a.inject_adapters(2, 3, 1.0f, lora_rng);

  // dirty every parameter and fake some optimizer moments
  auto refs = a.all_params();
  Rng noise(122);
  for (auto& r : refs) {
    for (Eigen::Index i = 0; i < r.p->v.size(); ++i)
      r.p->v[i] = static_cast<float>(noise.normal());
    r.p->m = nn::Vec<float>::Constant(r.p->v.size(), 0.25f);
    r.p->s = nn::Vec<float>::Constant(r.p->v.size(), 0.5f);
  }
  save_checkpoint(a, dir.string(), /*save_optimizer=*/true);

  auto b = load_checkpoint<float>(dir.string());
  CHECK(b.t_star == 195);
  CHECK(b.step == 77);
  CHECK(b.vae_lora_rank == 2);
  CHECK(b.denoiser_lora_rank == 3);
  CHECK(b.model_cfg.vae_channels == 4);
  CHECK(b.sched_cfg.num_steps == sc.num_steps);

  auto refs_b = b.all_params();
  REQUIRE(refs_b.size() == refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    CHECK(refs_b[i].name == refs[i].name);
    CHECK((refs_b[i].p->v == refs[i].p->v).all());  // bitwise f32 roundtrip
    CHECK((refs_b[i].p->m == refs[i].p->m).all());
    CHECK((refs_b[i].p->s == refs[i].p->s).all());
  }

  // the restored bundle computes exactly what the original does
  Rng img_rng(123);
  auto img = img_rng.uniform_tensor<float>(3, 32, 32, -1.0f, 1.0f);
  CHECK((a.vae.encode(img, true).data == b.vae.encode(img, true).data).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint load failures are loud") {
  CHECK_THROWS_AS(load_checkpoint<float>("/nonexistent/omgsr"), std::runtime_error);

  auto dir = temp_dir("truncated");
  ScheduleConfig<float> sc;
  Rng rng(124);
  CheckpointBundle<float> a(toy_cfg(), sc, rng);
  a.t_star = 10;
  save_checkpoint(a, dir.string());
  // truncate one blob
  auto victim = dir / "vae.enc1.weight.bin";
  REQUIRE(std::filesystem::exists(victim));
  std::filesystem::resize_file(victim, 4);
  CHECK_THROWS_AS(load_checkpoint<float>(dir.string()), std::runtime_error);
  std::filesystem::remove_all(dir);
}
