#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dssm/rng.hpp"
#include "dssm/synth.hpp"
#include "dssm/train.hpp"

using namespace dssm;

namespace {

PreparedDataset tiny_dataset(std::uint64_t seed, std::size_t days = 10) {
    SynthProfile p;
    auto raw = synth_generate(days, seed, p);
    WindowSpec w{12, 1, 1};
    return prepare_dataset(raw.traffic, raw.hours, raw.start_hour, raw.social,
                           raw.social_names, {}, w, 2, 1);
}

ModelConfig tiny_model(const PreparedDataset& ds) {
    ModelConfig c;
    c.d_e = ds.d_e;
    c.d_a = 4;
    c.d_k = 3;
    c.channels = 1;
    c.t_in = ds.window.t_in;
    c.horizon = ds.window.horizon;
    return c;
}

} // namespace

TEST_CASE("rmse_loss values and guard") {
    Tensor a = Tensor::from({2}, {1.0, 2.0});
    CHECK(rmse_loss(a, a).scalar_value() == 0.0);

    Tensor pred = Tensor::from({2}, {0.0, 0.0});
    Tensor target = Tensor::from({2}, {3.0, 4.0});
    CHECK(rmse_loss(pred, target).scalar_value() ==
          doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));

    CHECK_THROWS_AS(rmse_loss(a, Tensor::from({3}, {1, 2, 3})), ShapeError);

    // zero-loss gradient guard: backward leaves the input untouched
    Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor loss = rmse_loss(p, Tensor::from({2}, {1.0, 2.0}));
    loss.backward();
    CHECK(p.grad()[0] == 0.0);
    CHECK(p.grad()[1] == 0.0);
}

TEST_CASE("rmse_loss gradient matches finite differences away from zero") {
    Rng rng(3);
    Tensor target = Tensor::from({6}, {0.1, 0.7, 0.3, 0.9, 0.5, 0.2});
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    double err = grad_check(
        [&](const Tensor& p) { return rmse_loss(p, target); },
        Tensor::from({6}, v), 1e-5);
    CHECK(err < 1e-5);
}

TEST_CASE("adam_step hand-computed first update") {
    // theta=0, g=1, lr=1e-3: m_hat = v_hat = 1, theta -> -lr/(1+eps)
    Tensor theta = Tensor::from({1}, {0.0}, true);
    Tensor loss = mul(theta, Tensor::from({1}, {1.0}));
    loss.backward();
    std::vector<Tensor> params{theta};
    AdamState st = AdamState::like(params);
    TrainConfig cfg;
    adam_step(params, st, 1, cfg);
    CHECK(theta.value(0) == doctest::Approx(-0.001).epsilon(1e-7));
}

TEST_CASE("adam_step with zero gradient and zero state is a no-op") {
    Tensor theta = Tensor::from({3}, {0.5, -0.2, 1.0}, true);
    theta.zero_grad();
    std::vector<Tensor> params{theta};
    AdamState st = AdamState::like(params);
    TrainConfig cfg;
    adam_step(params, st, 1, cfg);
    CHECK(theta.value(0) == 0.5);
    CHECK(theta.value(1) == -0.2);
    CHECK(theta.value(2) == 1.0);
}

TEST_CASE("adam_step rejects non-finite gradients") {
    Tensor theta = Tensor::from({1}, {0.0}, true);
    Tensor zero = Tensor::from({1}, {0.0});
    Tensor loss = ::dssm::div(mul(theta, theta), add_scalar(mul(theta, zero), 1e-300));
    loss.backward(1e308); // blow the gradient up to inf
    std::vector<Tensor> params{theta};
    AdamState st = AdamState::like(params);
    TrainConfig cfg;
    CHECK_THROWS_AS(adam_step(params, st, 1, cfg), NumericError);
}

TEST_CASE("one small adam step on a single sample decreases its loss") {
    PreparedDataset ds = tiny_dataset(7);
    ModelConfig mc = tiny_model(ds);
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        ModelParams params = ModelParams::init(mc, seed);
        std::vector<Tensor> tensors = params.tensors();
        AdamState st = AdamState::like(tensors);
        TrainConfig cfg;
        cfg.lr = 1e-6;

        Tensor input = ds.input_window(0), exo = ds.exo_window(0);
        Tensor flat_target = reshape(ds.target_window(0), {kCells});
        auto loss_of = [&](const ModelParams& p) {
            return rmse_loss(reshape(forward(input, exo, p, mc).forecast, {kCells}),
                             flat_target);
        };
        double before = loss_of(params.detached(mc)).scalar_value();
        params.zero_grad();
        Tensor loss = loss_of(params);
        loss.backward();
        adam_step(tensors, st, 1, cfg);
        double after = loss_of(params.detached(mc)).scalar_value();
        CHECK(after < before);
    }
}

TEST_CASE("train with lr=0 leaves parameters and loss unchanged") {
    PreparedDataset ds = tiny_dataset(11);
    ModelConfig mc = tiny_model(ds);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.max_epochs = 3;
    tc.patience = 5;
    tc.batch_size = 32;
    tc.seed = 9;
    TrainResult r = train(ds, mc, tc);
    REQUIRE(r.report.epochs.size() == 3);
    CHECK(r.report.epochs[1].train_rmse ==
          doctest::Approx(r.report.epochs[0].train_rmse).epsilon(1e-12));
    CHECK(r.report.epochs[2].val_rmse ==
          doctest::Approx(r.report.epochs[0].val_rmse).epsilon(1e-12));

    ModelParams fresh = ModelParams::init(mc, tc.seed);
    auto a = fresh.tensors(), b = r.params.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values() == b[i].values());
}

TEST_CASE("training is deterministic for a fixed seed") {
    PreparedDataset ds = tiny_dataset(13);
    ModelConfig mc = tiny_model(ds);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.max_epochs = 2;
    tc.batch_size = 16;
    tc.seed = 77;
    TrainResult r1 = train(ds, mc, tc);
    TrainResult r2 = train(ds, mc, tc);
    REQUIRE(r1.report.epochs.size() == r2.report.epochs.size());
    for (std::size_t i = 0; i < r1.report.epochs.size(); ++i) {
        CHECK(r1.report.epochs[i].train_rmse == r2.report.epochs[i].train_rmse);
        CHECK(r1.report.epochs[i].val_rmse == r2.report.epochs[i].val_rmse);
    }
    auto a = r1.params.tensors(), b = r2.params.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values() == b[i].values());
}

TEST_CASE("early stopping returns the parameters of the best epoch") {
    PreparedDataset ds = tiny_dataset(17);
    ModelConfig mc = tiny_model(ds);
    TrainConfig tc;
    tc.lr = 5e-3;
    tc.max_epochs = 12;
    tc.patience = 2;
    tc.batch_size = 16;
    tc.seed = 5;
    TrainResult r = train(ds, mc, tc);
    REQUIRE(!r.report.epochs.empty());

    double min_val = r.report.epochs[0].val_rmse;
    std::size_t argmin = 1;
    for (const auto& e : r.report.epochs)
        if (e.val_rmse < min_val) {
            min_val = e.val_rmse;
            argmin = e.epoch;
        }
    CHECK(r.report.best_epoch == argmin);
    CHECK(r.report.best_val_rmse == doctest::Approx(min_val).epsilon(1e-15));
    // stops within patience epochs of the best one
    CHECK(r.report.epochs.size() <= r.report.best_epoch + tc.patience);

    // the returned parameters reproduce the recorded best validation RMSE
    double replay = dataset_rmse(ds, r.params.detached(mc), mc, ds.split.train_end,
                                 ds.split.val_end);
    CHECK(replay == doctest::Approx(r.report.best_val_rmse).epsilon(1e-12));
}

TEST_CASE("training reduces the loss on seasonal synthetic data") {
    PreparedDataset ds = tiny_dataset(21, 12);
    ModelConfig mc = tiny_model(ds);
    TrainConfig tc;
    tc.lr = 5e-3;
    tc.max_epochs = 6;
    tc.patience = 6;
    tc.batch_size = 16;
    tc.seed = 21;
    TrainResult r = train(ds, mc, tc);
    CHECK(!r.report.diverged);
    CHECK(r.report.best_val_rmse < r.report.epochs[0].val_rmse * 1.0 + 1e-12);
    CHECK(r.report.epochs.back().train_rmse < r.report.epochs[0].train_rmse);
}

TEST_CASE("sweep with a singleton grid reproduces train") {
    PreparedDataset ds = tiny_dataset(23);
    ModelConfig mc = tiny_model(ds);
    TrainConfig tc;
    tc.lr = 2e-3;
    tc.max_epochs = 2;
    tc.batch_size = 16;
    tc.seed = 3;
    TrainResult direct = train(ds, mc, tc);

    TrainConfig with_grid = tc;
    with_grid.sweep.lr = {2e-3};
    SweepResult s = sweep(ds, mc, with_grid);
    REQUIRE(s.cells.size() == 1);
    CHECK(s.cells[0].ok);
    CHECK(s.cells[0].report.best_val_rmse == direct.report.best_val_rmse);
    auto a = direct.params.tensors(), b = s.best_params.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values() == b[i].values());
}

TEST_CASE("sweep explores the Cartesian product and selects the argmin") {
    PreparedDataset ds = tiny_dataset(29);
    ModelConfig mc = tiny_model(ds);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 32;
    tc.seed = 11;
    tc.sweep.lr = {1e-3, 1e-2};
    tc.sweep.d_k = {2, 4};
    SweepResult s = sweep(ds, mc, tc, 2);
    REQUIRE(s.cells.size() == 4);
    double best = s.cells[s.best_index].report.best_val_rmse;
    for (const auto& cell : s.cells) {
        REQUIRE(cell.ok);
        CHECK(best <= cell.report.best_val_rmse);
    }
    CHECK(s.best_config.d_k == s.cells[s.best_index].d_k);
}
