#include <doctest.h>

#include <cmath>
#include <limits>

#include "banknet/train.hpp"
#include "banknet/weights.hpp"
#include "banknet/zoo.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace bnk;
using testutil::TempDir;

TEST_CASE("training defaults carry the shipped recipe") {
  const TrainConfig cfg;
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.max_epochs == 50);
  CHECK(cfg.plateau_patience == 2);
  CHECK(cfg.plateau_factor == 0.8);
  const AdamConfig adam;
  CHECK(adam.beta1 == 0.9);
  CHECK(adam.beta2 == 0.999);
  CHECK(adam.eps == 1e-7);
  const AugmentConfig aug;
  CHECK(aug.rotation_range_deg == 180.0);
  CHECK(aug.width_shift_frac == 0.1);
  CHECK(aug.height_shift_frac == 0.1);
  CHECK(aug.shear_range == 0.1);
  CHECK(aug.zoom_min == 0.8);
  CHECK(aug.zoom_max == 1.5);
  CHECK(aug.oversample_factor == 10);
}

namespace {

ParamStore scalar_store(double value) {
  ParamStore s;
  s.add("p/w", Tensor::of({1}, {value}));
  return s;
}

}  // namespace

TEST_CASE("adam: zero gradients leave parameters untouched but advance the step") {
  ParamStore params = scalar_store(1.25);
  AdamState state(params);
  std::map<std::string, Tensor> grads;
  grads.emplace("p/w", Tensor::of({1}, {0.0}));
  adam_step(params, grads, state, 1e-2);
  CHECK(params.at("p/w")[0] == 1.25);
  CHECK(state.step_count() == 1);
}

TEST_CASE("adam: one step from t=0 matches the hand-stepped scalar oracle") {
  const double p0 = 0.7, g = 1.0, lr = 0.01;
  ParamStore params = scalar_store(p0);
  AdamState state(params);
  std::map<std::string, Tensor> grads;
  grads.emplace("p/w", Tensor::of({1}, {g}));
  adam_step(params, grads, state, lr);

  // Independent scalar arithmetic for one bias-corrected update.
  const double b1 = 0.9, b2 = 0.999, eps = 1e-7;
  const double m = (1.0 - b1) * g;
  const double v = (1.0 - b2) * g * g;
  const double m_hat = m / (1.0 - std::pow(b1, 1.0));
  const double v_hat = v / (1.0 - std::pow(b2, 1.0));
  const double want = p0 - lr * m_hat / (std::sqrt(v_hat) + eps);
  CHECK(params.at("p/w")[0] == doctest::Approx(want).epsilon(1e-12));
  // which is the "old - lr * 1/(1 + eps)" form for g = 1
  CHECK(params.at("p/w")[0] == doctest::Approx(p0 - lr / (1.0 + eps)).epsilon(1e-12));
}

TEST_CASE("adam: lr = 0 never moves parameters") {
  SplitMix64 rng(1);
  ParamStore params = scalar_store(rng.uniform(-2.0, 2.0));
  const double before = params.at("p/w")[0];
  AdamState state(params);
  for (int i = 0; i < 5; ++i) {
    std::map<std::string, Tensor> grads;
    grads.emplace("p/w", Tensor::of({1}, {rng.uniform(-3.0, 3.0)}));
    adam_step(params, grads, state, 0.0);
  }
  CHECK(params.at("p/w")[0] == before);
}

TEST_CASE("adam: frozen parameters keep bytes and grow no moments") {
  ParamStore params;
  params.add("frozen/w", Tensor::of({2}, {1.0, 2.0}));
  params.add("live/w", Tensor::of({2}, {1.0, 2.0}));
  params.freeze_layer("frozen");
  AdamState state(params);
  std::map<std::string, Tensor> grads;
  grads.emplace("frozen/w", Tensor::of({2}, {5.0, -5.0}));
  grads.emplace("live/w", Tensor::of({2}, {5.0, -5.0}));
  adam_step(params, grads, state, 1e-2);
  CHECK(params.at("frozen/w")[0] == 1.0);
  CHECK(params.at("frozen/w")[1] == 2.0);
  CHECK(params.at("live/w")[0] != 1.0);
  CHECK_THROWS_AS(state.first_moment("frozen/w"), std::out_of_range);
}

TEST_CASE("adam property: one step decreases a convex quadratic") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SplitMix64 rng(seed);
    const double target = rng.uniform(-1.0, 1.0);
    double p = target + (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
    ParamStore params = scalar_store(p);
    AdamState state(params);
    const double before = 0.5 * (p - target) * (p - target);
    std::map<std::string, Tensor> grads;
    grads.emplace("p/w", Tensor::of({1}, {p - target}));
    adam_step(params, grads, state, 1e-2);
    const double after_p = params.at("p/w")[0];
    const double after = 0.5 * (after_p - target) * (after_p - target);
    CHECK(after < before);
  }
}

TEST_CASE("plateau: improvement keeps the rate, stagnation cuts it by the factor") {
  TrainState st;
  st.lr = 1e-4;
  plateau_update(st, 1.0, 0.8, 2, 1e-7);
  plateau_update(st, 0.9, 0.8, 2, 1e-7);
  CHECK(st.lr == 1e-4);
  CHECK(st.plateau_best == 0.9);

  // Losses 1.0, 0.99, 0.995, 0.996 with patience 2: reduction lands after
  // the 4th epoch.
  TrainState s2;
  s2.lr = 1e-4;
  plateau_update(s2, 1.0, 0.8, 2, 1e-7);
  plateau_update(s2, 0.99, 0.8, 2, 1e-7);
  CHECK(s2.lr == 1e-4);
  plateau_update(s2, 0.995, 0.8, 2, 1e-7);
  CHECK(s2.lr == 1e-4);
  plateau_update(s2, 0.996, 0.8, 2, 1e-7);
  CHECK(s2.lr == doctest::Approx(8e-5).epsilon(1e-12));
}

TEST_CASE("plateau: 20 stagnant epochs follow the closed-form lr sequence") {
  TrainState st;
  st.lr = 1e-4;
  plateau_update(st, 0.5, 0.8, 2, 1e-7);  // establishes the best
  for (int e = 0; e < 20; ++e) plateau_update(st, 0.6, 0.8, 2, 1e-7);
  CHECK(st.lr == doctest::Approx(std::max(1e-4 * std::pow(0.8, 10), 1e-7)).epsilon(1e-9));

  // With a high floor the sequence clamps at min_lr.
  TrainState low;
  low.lr = 1e-4;
  plateau_update(low, 0.5, 0.8, 2, 9e-5);
  for (int e = 0; e < 20; ++e) plateau_update(low, 0.6, 0.8, 2, 9e-5);
  CHECK(low.lr == 9e-5);
}

TEST_CASE("plateau property: lr is non-increasing and floored at min_lr") {
  SplitMix64 rng(17);
  TrainState st;
  st.lr = 1e-3;
  double prev = st.lr;
  for (int e = 0; e < 200; ++e) {
    plateau_update(st, rng.uniform(0.0, 1.0), 0.8, 2, 1e-6);
    CHECK(st.lr <= prev);
    CHECK(st.lr >= 1e-6);
    prev = st.lr;
  }
}

TEST_CASE("early stopping: improving runs never stop, flat runs stop on patience") {
  TrainState improving;
  for (int e = 0; e < 50; ++e) {
    early_stop_observe(improving, 1.0 - 0.01 * e);
    CHECK_FALSE(early_stop_check(improving, 3));
  }

  TrainState flat;
  early_stop_observe(flat, 1.0);  // epoch 1 sets the best
  CHECK_FALSE(early_stop_check(flat, 3));
  early_stop_observe(flat, 1.0);
  early_stop_observe(flat, 1.0);
  CHECK_FALSE(early_stop_check(flat, 3));
  early_stop_observe(flat, 1.0);  // epoch 4
  CHECK(early_stop_check(flat, 3));
}

TEST_CASE("early stopping agrees with a brute-force recomputation on random sequences") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SplitMix64 rng(seed + 40);
    const int n = 3 + static_cast<int>(rng.next_below(30));
    std::vector<double> losses;
    for (int i = 0; i < n; ++i) losses.push_back(rng.uniform(0.0, 1.0));

    TrainState st;
    for (double v : losses) early_stop_observe(st, v);

    // Brute force: epochs since the last strict running-min improvement.
    int best_index = 0;
    double best = losses[0];
    for (int i = 1; i < n; ++i) {
      if (losses[static_cast<std::size_t>(i)] < best) {
        best = losses[static_cast<std::size_t>(i)];
        best_index = i;
      }
    }
    const int since = n - 1 - best_index;
    for (int patience = 1; patience <= 5; ++patience) {
      CHECK(early_stop_check(st, patience) == (since >= patience));
    }
  }
}

TEST_CASE("checkpoint: improving run rewrites, regression keeps the best file") {
  TempDir dir;
  const auto path = dir / "ck.bnkw";

  auto params_for = [](int epoch) {
    ParamStore p;
    p.add("m/w", Tensor::of({1}, {static_cast<double>(epoch)}));
    return p;
  };

  TrainState st;
  for (int epoch = 1; epoch <= 5; ++epoch) {
    const bool saved = checkpoint_if_best(st, 1.0 - 0.1 * epoch, epoch, params_for(epoch), path);
    CHECK(saved);
  }
  CHECK(st.best_epoch == 5);
  CHECK(load_weights(path).at("m/w")[0] == 5.0);

  TrainState st2;
  checkpoint_if_best(st2, 0.5, 1, params_for(1), path);
  checkpoint_if_best(st2, 0.2, 2, params_for(2), path);
  checkpoint_if_best(st2, 0.9, 3, params_for(3), path);
  checkpoint_if_best(st2, 0.3, 4, params_for(4), path);
  CHECK(st2.best_epoch == 2);
  CHECK(load_weights(path).at("m/w")[0] == 2.0);
}

TEST_CASE("checkpoint: persisted epoch equals the argmin over random sequences") {
  TempDir dir;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SplitMix64 rng(seed + 70);
    const int n = 2 + static_cast<int>(rng.next_below(20));
    std::vector<double> losses;
    for (int i = 0; i < n; ++i) losses.push_back(rng.uniform(0.0, 1.0));

    const auto path = dir / ("seq" + std::to_string(seed) + ".bnkw");
    TrainState st;
    for (int e = 1; e <= n; ++e) {
      ParamStore p;
      p.add("m/w", Tensor::of({1}, {static_cast<double>(e)}));
      checkpoint_if_best(st, losses[static_cast<std::size_t>(e - 1)], e, p, path);
    }
    // First occurrence of the minimum, matching strict-improvement saves.
    int argmin = 0;
    for (int i = 1; i < n; ++i) {
      if (losses[static_cast<std::size_t>(i)] < losses[static_cast<std::size_t>(argmin)]) {
        argmin = i;
      }
    }
    CHECK(st.best_epoch == argmin + 1);
    CHECK(load_weights(path).at("m/w")[0] == static_cast<double>(argmin + 1));
  }
}

namespace {

// Two linearly separable vector classes streamed through a head-only model.
Dataset toy_vector_dataset(int per_class, std::uint64_t seed) {
  Dataset data;
  data.manifest.class_names = {"a", "b"};
  SplitMix64 rng(seed);
  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < per_class; ++i) {
      Tensor v({4});
      for (int d = 0; d < 4; ++d) v.at(d) = rng.uniform(0.0, 0.15);
      v.at(label) += 0.8;
      const Split split = (i % 5 == 4) ? Split::val : Split::train;
      data.manifest.items.push_back({"toy", label, split});
      data.items.push_back({std::move(v), label, "toy"});
    }
  }
  return data;
}

}  // namespace

TEST_CASE("fit: separable toy vectors reach train accuracy 1.0") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(4, 2, 0.05);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 50;
  cfg.batch_size = 8;
  cfg.seed = 3;
  cfg.augment_online = false;  // vector inputs cannot be warped
  cfg.checkpoint_path = (dir / "toy.bnkw").string();

  const Dataset data = toy_vector_dataset(20, 5);
  const FitResult result = fit(model, init_params(model, 3), data, AugmentConfig::identity(), cfg);
  REQUIRE(!result.state.history.empty());
  CHECK(result.state.history.size() <= 50);
  double best_train_acc = 0.0;
  for (const EpochStats& e : result.state.history) {
    best_train_acc = std::max(best_train_acc, e.train_acc);
  }
  CHECK(best_train_acc == 1.0);
}

TEST_CASE("fit: identical seeds give identical histories") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(4, 2, 0.02);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 6;
  cfg.batch_size = 4;
  cfg.seed = 11;
  cfg.augment_online = false;
  cfg.checkpoint_path = (dir / "a.bnkw").string();
  const Dataset data = toy_vector_dataset(10, 6);

  const FitResult r1 = fit(model, init_params(model, 11), data, AugmentConfig::identity(), cfg);
  cfg.checkpoint_path = (dir / "b.bnkw").string();
  const FitResult r2 = fit(model, init_params(model, 11), data, AugmentConfig::identity(), cfg);
  REQUIRE(r1.state.history.size() == r2.state.history.size());
  for (std::size_t i = 0; i < r1.state.history.size(); ++i) {
    CHECK(r1.state.history[i].train_loss == r2.state.history[i].train_loss);
    CHECK(r1.state.history[i].val_loss == r2.state.history[i].val_loss);
    CHECK(r1.state.history[i].lr == r2.state.history[i].lr);
  }
}

TEST_CASE("fit: a batch of identical items scores the single-example loss") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(4, 2, 0.02);
  const ParamStore params = init_params(model, 21);

  Dataset data;
  data.manifest.class_names = {"a", "b"};
  Tensor v = Tensor::of({4}, {0.9, 0.1, 0.0, 0.2});
  for (int i = 0; i < 6; ++i) {
    data.manifest.items.push_back({"x", 0, i < 5 ? Split::train : Split::val});
    data.items.push_back({v, 0, "x"});
  }

  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 5;
  cfg.augment_online = false;
  cfg.checkpoint_path = (dir / "c.bnkw").string();

  const Tensor probs = forward(model, params, v);
  Tensor onehot({2});
  onehot[0] = 1.0;
  const double single = cross_entropy(probs, onehot);

  const FitResult r = fit(model, params, data, AugmentConfig::identity(), cfg);
  CHECK(r.state.history[0].train_loss == doctest::Approx(single).epsilon(1e-12));
}

TEST_CASE("fit: epochs cap and validation guards") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(4, 2, 0.02);
  TrainConfig cfg;
  cfg.checkpoint_path = (dir / "d.bnkw").string();
  cfg.augment_online = false;
  cfg.max_epochs = 50;

  Dataset empty_val = toy_vector_dataset(4, 7);
  for (ManifestEntry& e : empty_val.manifest.items) e.split = Split::train;
  CHECK_THROWS_AS(
      fit(model, init_params(model, 1), empty_val, AugmentConfig::identity(), cfg), DataError);

  const ModelSpec three = build_classifier_head(4, 3, 0.02);
  const Dataset data = toy_vector_dataset(6, 8);
  CHECK_THROWS_AS(fit(three, init_params(three, 1), data, AugmentConfig::identity(), cfg),
                  DataError);
}

TEST_CASE("fit: frozen backbone bytes survive training untouched") {
  TempDir dir;
  const ModelSpec backbone = build_mobilenet_style(0.125, 1);
  const ModelSpec model =
      attach_head(backbone, build_classifier_head(static_output_width(backbone), 2, 0.02));

  SplitMix64 rng(31);
  Dataset data;
  data.manifest.class_names = {"a", "b"};
  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < 6; ++i) {
      const double base = label == 0 ? 0.2 : 0.8;
      Tensor img = Tensor::full({12, 12, 3}, base);
      for (std::size_t p = 0; p < img.size(); ++p) img[p] += rng.uniform(-0.05, 0.05);
      data.manifest.items.push_back({"s", label, i < 5 ? Split::train : Split::val});
      data.items.push_back({std::move(img), label, "s"});
    }
  }

  ParamStore params = init_params(model, 31);
  std::map<std::string, std::vector<double>> before;
  for (const std::string& name : params.names()) {
    if (ParamStore::layer_of(name) != "head_out" && name.rfind("head_", 0) != 0) {
      before[name] = params.at(name).values();
    }
  }

  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 4;
  cfg.freeze_backbone = true;
  cfg.augment_online = false;
  cfg.checkpoint_path = (dir / "f.bnkw").string();
  const FitResult r = fit(model, std::move(params), data, AugmentConfig::identity(), cfg);

  int compared = 0;
  for (const auto& [name, values] : before) {
    CHECK(r.best_params.at(name).values() == values);
    ++compared;
  }
  CHECK(compared > 0);
}

TEST_CASE("fit: resnet and nasnet families run the full loop too") {
  TempDir dir;
  SplitMix64 rng(61);
  Dataset data;
  data.manifest.class_names = {"a", "b"};
  for (int label = 0; label < 2; ++label) {
    for (int i = 0; i < 8; ++i) {
      const double base = label == 0 ? 0.25 : 0.75;
      Tensor img = Tensor::full({16, 16, 3}, base);
      for (std::size_t p = 0; p < img.size(); ++p) img[p] += rng.uniform(-0.05, 0.05);
      data.manifest.items.push_back({"s", label, i < 6 ? Split::train : Split::val});
      data.items.push_back({std::move(img), label, "s"});
    }
  }

  for (ModelFamily family : {ModelFamily::resnet, ModelFamily::nasnet}) {
    const ModelSpec model = build_model(family, preset("tiny"), 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.max_epochs = 2;
    cfg.batch_size = 4;
    cfg.checkpoint_path = (dir / (std::string(model_family_name(family)) + ".bnkw")).string();
    const FitResult r = fit(model, init_params(model, 62), data, AugmentConfig{}, cfg);
    REQUIRE(r.state.history.size() == 2);
    for (const EpochStats& e : r.state.history) {
      CHECK(std::isfinite(e.train_loss));
      CHECK(std::isfinite(e.val_loss));
    }
  }
}

TEST_CASE("fit: non-finite loss aborts with the batch index") {
  TempDir dir;
  const ModelSpec model = build_classifier_head(4, 2, 0.02);
  ParamStore params = init_params(model, 41);
  // +inf on the logit bias survives straight into softmax as NaN.
  params.at("head_out/bias")[0] = std::numeric_limits<double>::infinity();

  TrainConfig cfg;
  cfg.augment_online = false;
  cfg.checkpoint_path = (dir / "g.bnkw").string();
  const Dataset data = toy_vector_dataset(6, 9);
  CHECK_THROWS_WITH_AS(fit(model, params, data, AugmentConfig::identity(), cfg),
                       doctest::Contains("batch"), NumericError);
}

TEST_CASE("history table renders one row per epoch") {
  std::vector<EpochStats> h = {{1, 1e-4, 0.5, 0.75, 0.6, 0.7}, {2, 8e-5, 0.4, 0.8, 0.55, 0.72}};
  const std::string table = history_table(h);
  CHECK(table.find("epoch\tlr\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n") == 0);
  CHECK(table.find("\n2\t") != std::string::npos);
}
