#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "small_models.hpp"
#include "spdectl/binary_io.hpp"
#include "spdectl/optim.hpp"
#include "spdectl/surrogate.hpp"

using namespace spdectl;
using spdectl::testing::directional_gradcheck;
using spdectl::testing::random_tensor;
using spdectl::testing::small_config;
using spdectl::testing::small_ns;
using spdectl::testing::small_rd;

namespace {

void perturb(SurrogateModel& m, std::uint64_t seed) { spdectl::testing::perturb(m.params(), seed); }

struct Inputs {
  Tensor u, f, xi;
};

Inputs random_inputs(const Grid& g, std::size_t b, std::mt19937_64& gen) {
  const std::size_t fs = g.field_size();
  Inputs in{random_tensor({b, fs}, gen), random_tensor({b, fs}, gen), random_tensor({b, g.substeps(), fs}, gen, -3, 3)};
  return in;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("spdectl_test_" + name)).string();
}

}  // namespace

TEST_CASE("backbone names") {
  for (auto k : {BackboneKind::none, BackboneKind::conv, BackboneKind::spectral}) {
    CHECK(backbone_from_string(to_string(k)) == k);
  }
  CHECK(backbone_from_string("fno") == BackboneKind::spectral);
  CHECK_THROWS_AS(backbone_from_string("transformer"), std::invalid_argument);
  CHECK_THROWS_AS(SurrogateModel(small_rd(), small_config(BackboneKind::none, false)), std::invalid_argument);
}

TEST_CASE("fresh feature model predicts the linear term") {
  std::mt19937_64 gen(1);
  for (auto kind : {BackboneKind::conv, BackboneKind::spectral, BackboneKind::none}) {
    for (const Problem& p : {small_rd(), small_ns()}) {
      const SurrogateModel model(p, small_config(kind));
      const Grid& g = model.grid();
      const auto in = random_inputs(g, 3, gen);
      const Tensor s = model.model_inputs(in.u, in.f, in.xi);
      CHECK(s.shape() == Shape{3, model.input_channels(), g.field_size()});
      const std::size_t k[1] = {0};
      const StepOutput out = model.head(s, k);
      const std::size_t fs = g.field_size(), ch = model.input_channels();
      for (std::size_t b = 0; b < 3; ++b) {
        for (std::size_t i = 0; i < fs; ++i) {
          // theta starts at e_0, so the prediction is the propagated initial state
          CHECK(out.u_next.at(b * fs + i) == doctest::Approx(s.at(b * ch * fs + i)).epsilon(1e-14));
          CHECK(out.residual.at(b * fs + i) == 0.0);
          CHECK(out.u_rec.at(b * fs + i) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("zero inputs give zero features and zero linear part") {
  SurrogateModel model(small_rd(), small_config(BackboneKind::conv));
  perturb(model, 2);
  const Grid& g = model.grid();
  const std::size_t fs = g.field_size();
  const Tensor s = model.model_inputs(Tensor::zeros({2, fs}), Tensor::zeros({2, fs}), Tensor::zeros({2, g.substeps(), fs}));
  for (double v : s.values()) CHECK(v == 0.0);
  const std::size_t k[1] = {1};
  const StepOutput out = model.head(s, k);
  for (double v : out.linear.values()) CHECK(v == 0.0);
  // Dirichlet mask pins the boundary of every output
  for (std::size_t b = 0; b < 2; ++b) {
    CHECK(out.u_next.at(b * fs) == 0.0);
    CHECK(out.u_next.at(b * fs + fs - 1) == 0.0);
    CHECK(out.f_rec.at(b * fs + fs - 1) == 0.0);
  }
}

TEST_CASE("plain model inputs") {
  const SurrogateModel model(small_rd(), small_config(BackboneKind::conv, false));
  CHECK(model.input_channels() == 3);
  CHECK(model.features() == nullptr);
  std::mt19937_64 gen(3);
  const Grid& g = model.grid();
  const auto in = random_inputs(g, 2, gen);
  const Tensor x = model.model_inputs(in.u, in.f, in.xi);
  const std::size_t fs = g.field_size(), sub = g.substeps();
  for (std::size_t i = 0; i < fs; ++i) {
    double dw = 0.0;
    for (std::size_t k = 0; k < sub; ++k) dw += in.xi.at((sub + k) * fs + i);
    CHECK(x.at(3 * fs + i) == in.u.at(fs + i));
    CHECK(x.at(4 * fs + i) == in.f.at(fs + i));
    CHECK(x.at(5 * fs + i) == doctest::Approx(dw * g.fine_dt()));
  }
}

TEST_CASE("gradient of the next state with respect to the forcing") {
  std::mt19937_64 gen(4);
  for (auto kind : {BackboneKind::conv, BackboneKind::spectral}) {
    for (const Problem& p : {small_rd(), small_ns()}) {
      SurrogateModel model(p, small_config(kind));
      perturb(model, 5);
      const auto in = random_inputs(model.grid(), 2, gen);
      auto loss = [&](const std::vector<Tensor>& x) {
        return sum(square(model.step(in.u, x[0], in.xi, 1).u_next));
      };
      const auto r = directional_gradcheck(loss, {in.f}, gen, 8);
      CHECK(r.max_rel_error < 1e-6);
      CHECK(r.max_abs_directional > 0.0);
    }
  }
}

TEST_CASE("gradient of the training loss with respect to parameters") {
  const Problem p = small_rd();
  SurrogateModel model(p, small_config(BackboneKind::conv));
  perturb(model, 6);
  const Dataset data = generate_dataset(p, 3, 11, {}, "train", 1);
  const PairSet pairs = build_pairs(model, data, 1);
  CHECK(pairs.size() == 3 * (p.grid.frames - 1));
  fit_input_scale(model, pairs);
  const TrainConfig cfg;
  const std::vector<std::size_t> idx{0, 3, 5};

  // Evaluate the loss with parameters substituted from the direction vector.
  std::vector<Tensor> params = model.params().tensors();
  std::vector<std::vector<double>> base;
  for (const auto& t : params) base.push_back(t.to_vector());
  auto set_params = [&](const std::vector<Tensor>& x) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].mutable_values();
      auto src = x[i].values();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  };
  zero_grads(params);
  backward(pair_loss(model, pairs, idx, cfg));
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  double analytic = 0.0;
  std::vector<std::vector<double>> dir;
  for (const auto& t : params) {
    dir.emplace_back(t.numel());
    auto g = t.grad();
    for (std::size_t j = 0; j < dir.back().size(); ++j) {
      dir.back()[j] = d(gen);
      analytic += (g.empty() ? 0.0 : g[j]) * dir.back()[j];
    }
  }
  auto shifted = [&](double h) {
    std::vector<Tensor> moved;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = base[i];
      for (std::size_t j = 0; j < v.size(); ++j) v[j] += h * dir[i][j];
      moved.emplace_back(params[i].shape(), std::move(v));
    }
    set_params(moved);
    return pair_loss(model, pairs, idx, cfg).item();
  };
  const double h = 1e-6;
  const double numeric = (shifted(h) - shifted(-h)) / (2 * h);
  CHECK(std::abs(numeric - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
}

TEST_CASE("rollout matches repeated steps") {
  std::mt19937_64 gen(8);
  SurrogateModel model(small_rd(), small_config(BackboneKind::conv));
  perturb(model, 9);
  const Grid& g = model.grid();
  const std::size_t fs = g.field_size(), sub = g.substeps(), steps = g.frames - 1;
  const Tensor u0 = random_tensor({2, fs}, gen);
  const Tensor f = random_tensor({2, steps, fs}, gen);
  const Tensor xi = random_tensor({2, g.fine_steps, fs}, gen);
  const Tensor roll = model.rollout(u0, f, xi);
  CHECK(roll.shape() == Shape{2, steps + 1, fs});
  Tensor u = u0;
  for (std::size_t k = 0; k < steps; ++k) {
    u = model.step(u, reshape(slice(f, 1, k, 1), {2, fs}), slice(xi, 1, k * sub, sub), k).u_next;
    const Tensor frame = reshape(slice(roll, 1, k + 1, 1), {2, fs});
    for (std::size_t i = 0; i < u.numel(); ++i) CHECK(frame.at(i) == u.at(i));
  }
  CHECK_THROWS_AS(model.rollout(u0, slice(f, 1, 0, 1), xi), std::invalid_argument);
}

TEST_CASE("training is deterministic and descends") {
  const Problem p = small_rd();
  const Dataset data = generate_dataset(p, 8, 21, {}, "train", 1);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  cfg.seed = 3;
  auto run = [&](const TrainConfig& c) {
    auto model = std::make_unique<SurrogateModel>(p, small_config(BackboneKind::conv));
    auto result = train_surrogate(*model, data, c, 1);
    return std::make_pair(std::move(model), result);
  };
  const auto [m1, r1] = run(cfg);
  const auto [m2, r2] = run(cfg);
  REQUIRE(r1.curve.size() == cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e) CHECK(r1.curve[e].loss == r2.curve[e].loss);
  for (std::size_t i = 0; i < m1->params().list().size(); ++i) {
    const auto a = m1->params().list()[i].value.values(), b = m2->params().list()[i].value.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  CHECK(r1.curve.back().loss < 0.5 * r1.curve.front().loss);
  CHECK(r1.augmented > 0);
  CHECK(r1.curve.back().samples == data.size() * 2 + r1.augmented);

  SUBCASE("zero duplication leaves training untouched") {
    TrainConfig none = cfg;
    none.duplication = 0;
    TrainConfig off = cfg;
    off.warmup_fraction = 1.0;  // augmentation epoch never reached
    const auto [a, ra] = run(none);
    const auto [b, rb] = run(off);
    CHECK(ra.augmented == 0);
    for (std::size_t e = 0; e < cfg.epochs; ++e) CHECK(ra.curve[e].loss == rb.curve[e].loss);
  }
  SUBCASE("invalid settings") {
    TrainConfig bad = cfg;
    bad.quantile = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.duplication = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("scoring") {
  const std::vector<double> f{1, 2, 3, 4}, u0{0, 1, 0, 1}, u1{2, 2, 2, 2}, traj{1, 1, 1, 1, 2, 2, 2, 2};
  const ErrorReport perfect = score_predictions(2, f, f, u0, u0, u1, u1, traj, traj);
  CHECK(perfect.sum() == 0.0);

  std::vector<double> zeros2(4, 0.0), zeros4(8, 0.0);
  const ErrorReport blank = score_predictions(2, f, zeros2, u0, zeros2, u1, zeros2, traj, zeros4);
  CHECK(blank.f_recon == doctest::Approx(1.0));
  CHECK(blank.prediction == doctest::Approx(1.0));
  CHECK(blank.sum() == doctest::Approx(blank.f_recon + blank.u0_recon + blank.u1 + blank.prediction));

  std::vector<double> half = f;
  for (double& v : half) v *= 0.5;
  CHECK(score_predictions(2, f, half, u0, u0, u1, u1, traj, traj).f_recon == doctest::Approx(0.5));
}

TEST_CASE("evaluate_model on a fresh model") {
  const Problem p = small_rd();
  const Dataset test = generate_dataset(p, 4, 99, {}, "test", 1);
  const SurrogateModel model(p, small_config(BackboneKind::conv));
  const ErrorReport r = evaluate_model(model, test, 1);
  // reconstruction heads start at zero
  CHECK(r.f_recon == doctest::Approx(1.0));
  CHECK(r.u0_recon == doctest::Approx(1.0));
  CHECK(std::isfinite(r.prediction));
  CHECK(evaluate_model(model, test, 2).sum() == r.sum());
}

TEST_CASE("checkpoint round trip and corruption") {
  SurrogateModel model(small_rd(), small_config(BackboneKind::spectral));
  perturb(model, 12);
  model.set_input_scale(std::vector<double>(model.input_channels(), 0.5));
  const std::string path = temp_path("surrogate.spdm");
  save_model(path, model);
  const auto loaded = load_model(path);
  CHECK(loaded->config() == model.config());
  CHECK(loaded->input_scale() == model.input_scale());
  CHECK(loaded->spec_hash() == model.spec_hash());
  std::mt19937_64 gen(13);
  const auto in = random_inputs(model.grid(), 2, gen);
  const Tensor a = model.step(in.u, in.f, in.xi, 1).u_next, b = loaded->step(in.u, in.f, in.xi, 1).u_next;
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));

  auto bytes = read_file_bytes(path);
  bytes[bytes.size() / 2] ^= 0x5A;
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(load_model(path), FormatError);
  bytes.resize(bytes.size() / 3);
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(load_model(path), FormatError);
  std::remove(path.c_str());
  CHECK_THROWS(load_model(path));
}
