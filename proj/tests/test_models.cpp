#include <doctest.h>

#include "gradcheck.hpp"
#include "omgsr/models.hpp"
#include "omgsr/rng.hpp"

using namespace omgsr;

namespace {

ModelConfig<double> toy_cfg() {
  ModelConfig<double> c;
  c.vae_channels = 4;
  c.denoiser_channels = 6;
  c.denoiser_blocks = 1;
  c.disc_channels = 4;
  c.embedder_channels = 4;
  return c;
}

}  // namespace

TEST_CASE("vae shape contracts and errors") {
  Rng rng(50);
  VaeModel<double> vae(toy_cfg(), rng);
  auto img = rng.uniform_tensor<double>(3, 64, 64, -1.0, 1.0);
  auto z = vae.encode(img, false);
  CHECK(z.channels == 4);
  CHECK(z.height == 16);
  CHECK(z.width == 16);
  auto back = vae.decode(z);
  CHECK(back.channels == 3);
  CHECK(back.height == 64);
  CHECK(back.width == 64);
  CHECK(back.data.abs().maxCoeff() <= 1.0);  // tanh range

  auto zero_latent = Tensor<double>::zeros(4, 8, 8);
  CHECK(vae.decode(zero_latent).all_finite());

  auto bad = rng.uniform_tensor<double>(3, 30, 30, -1.0, 1.0);
  CHECK_THROWS_AS(vae.encode(bad, false), std::invalid_argument);
  CHECK_THROWS_AS(vae.decode(rng.normal_tensor<double>(3, 8, 8)), std::invalid_argument);
}

TEST_CASE("zero-init lora leaves encode bitwise unchanged") {
  Rng rng(51);
  VaeModel<double> vae(toy_cfg(), rng);
  auto img = rng.uniform_tensor<double>(3, 32, 32, -1.0, 1.0);
  auto before = vae.encode(img, false);
  inject_lora<double>(vae, {"enc1", "enc2", "enc3"}, 2, 1.0, rng);
  auto with = vae.encode(img, true);
  auto without = vae.encode(img, false);
  CHECK((before.data == with.data).all());
  CHECK((before.data == without.data).all());
  CHECK_THROWS_AS((inject_lora<double>(vae, {"nope"}, 2, 1.0, rng)),
                  std::invalid_argument);
}

TEST_CASE("denoiser contracts") {
  Rng rng(52);
  DenoiserModel<double> den(toy_cfg(), rng);
  auto z = rng.normal_tensor<double>(4, 12, 12);
  auto out = den.forward(z, 195);
  CHECK(out.same_shape(z));
  CHECK(out.data.abs().maxCoeff() == 0.0);  // zero-init final conv
  CHECK_THROWS_AS(den.forward(z, 1000), std::out_of_range);
  CHECK_THROWS_AS(den.forward(z, -1), std::out_of_range);

  // determinism
  auto again = den.forward(z, 195);
  CHECK((out.data == again.data).all());
}

TEST_CASE("gradient flows to every trainable denoiser parameter") {
  Rng rng(53);
  DenoiserModel<double> den(toy_cfg(), rng);
  auto z = rng.normal_tensor<double>(4, 8, 8);
  auto probe = rng.normal_tensor<double>(4, 8, 8);

  auto refs = den.params("den");
  nn::AdamW<double>::zero_grad(refs);
  den.forward(z, 100, true);
  den.backward(probe);
  double grad_norm = 0;
  for (auto& r : refs) grad_norm += r.p->g.square().sum();
  CHECK(grad_norm > 0.0);

  // after perturbing conv_out away from zero, every parameter gets signal
  for (auto& r : refs)
    if (r.name == "den.conv_out.weight")
      for (Eigen::Index i = 0; i < r.p->v.size(); ++i) r.p->v[i] = rng.normal() * 0.1;
  nn::AdamW<double>::zero_grad(refs);
  den.forward(z, 100, true);
  den.backward(probe);
  for (auto& r : refs) {
    INFO(r.name);
    CHECK(r.p->g.square().sum() > 0.0);
  }
}

TEST_CASE("denoiser input gradient matches finite differences") {
  Rng rng(54);
  DenoiserModel<double> den(toy_cfg(), rng);
  auto refs = den.params("den");
  for (auto& r : refs)  // random weights everywhere, incl. conv_out
    if (r.name.ends_with(".weight"))
      for (Eigen::Index i = 0; i < r.p->v.size(); ++i)
        r.p->v[i] = rng.normal() * 0.2;
  auto z = rng.normal_tensor<double>(4, 6, 6);
  auto probe = rng.normal_tensor<double>(4, 6, 6);
  nn::AdamW<double>::zero_grad(refs);
  den.forward(z, 300, true);
  auto gz = den.backward(probe);
  auto loss = [&] { return (den.forward(z, 300).data * probe.data).sum(); };
  CHECK(gradcheck_fraction(z, gz, loss, 1e-5, 1e-5) == 1.0);
}

TEST_CASE("vae decode gradient matches finite differences") {
  Rng rng(55);
  VaeModel<double> vae(toy_cfg(), rng);
  auto z = rng.normal_tensor<double>(4, 4, 4);
  auto probe = rng.normal_tensor<double>(3, 16, 16);
  auto refs = vae.params("vae");
  nn::AdamW<double>::zero_grad(refs);
  vae.decode(z, true);
  auto gz = vae.decode_backward(probe);
  auto loss = [&] { return (vae.decode(z).data * probe.data).sum(); };
  CHECK(gradcheck_fraction(z, gz, loss, 1e-5, 1e-5) == 1.0);
}

TEST_CASE("discriminator output strictly inside (0,1)") {
  Rng rng(56);
  ModelConfig<double> cfg = toy_cfg();
  Discriminator<double> disc(cfg, rng);
  for (int i = 0; i < 5; ++i) {
    auto patch = rng.uniform_tensor<double>(3, 32, 32, -50.0, 50.0);
    const double p = disc.forward(patch);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("discriminator input gradient matches finite differences") {
  Rng rng(57);
  Discriminator<double> disc(toy_cfg(), rng);
  auto patch = rng.uniform_tensor<double>(3, 16, 16, -1.0, 1.0);
  disc.forward(patch, true);
  auto gx = disc.backward(1.0, false, true);
  auto loss = [&] { return disc.forward(patch); };
  CHECK(gradcheck_fraction(patch, gx, loss, 1e-5, 1e-4) >= 0.99);
}

TEST_CASE("embedder is deterministic for a fixed seed") {
  ModelConfig<double> cfg = toy_cfg();
  PerceptualEmbedder<double> a(cfg), b(cfg);
  Rng rng(58);
  auto img = rng.uniform_tensor<double>(3, 24, 24, -1.0, 1.0);
  auto fa = a.forward(img);
  auto fb = b.forward(img);
  REQUIRE(fa.size() == fb.size());
  REQUIRE(fa.size() >= 2);  // pyramid with >= 2 layers
  for (std::size_t i = 0; i < fa.size(); ++i)
    CHECK((fa[i].data == fb[i].data).all());
}
