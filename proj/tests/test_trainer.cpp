#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include <scsurro/trainer.hpp>

using namespace scsurro;

namespace {

// smooth synthetic target on [0,1]^6; learnable by a small network
TrainMatrix synthetic(int rows, std::uint64_t seed) {
    std::uint64_t s = seed;
    TrainMatrix m;
    m.inputs.resize(rows, 6);
    m.targets.resize(rows, 1);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < 6; ++c) m.inputs(r, c) = detail::uniform01(s);
        m.targets(r, 0) = 0.25 + 0.1 * std::sin(3.0 * m.inputs(r, 0)) * m.inputs(r, 1) +
                          0.05 * m.inputs(r, 2) * m.inputs(r, 3);
    }
    return m;
}

} // namespace

TEST_CASE("evaluate_loss equals the direct mean squared error") {
    NetworkArch arch{NetworkArch::Kind::plain, 6, 1, 8, 2};
    NetworkParams p = init_params(arch, 3);
    TrainMatrix data = synthetic(100, 1);
    const double batched = evaluate_loss(arch, p, data, 7);   // uneven batches
    const double direct =
        (forward(arch, p, data.inputs) - data.targets).squaredNorm() / 100.0;
    CHECK(batched == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("checkpoint rule requires both losses to improve") {
    CHECK(checkpoint_rule(0.5, 0.6, 1.0, 1.0));
    CHECK_FALSE(checkpoint_rule(0.5, 1.2, 1.0, 1.0));    // val worse
    CHECK_FALSE(checkpoint_rule(1.2, 0.5, 1.0, 1.0));    // train worse
    CHECK_FALSE(checkpoint_rule(1.0, 0.5, 1.0, 1.0));    // ties do not count
    CHECK_FALSE(checkpoint_rule(0.5, 1.0, 1.0, 1.0));
}

TEST_CASE("training reduces the loss on a learnable problem") {
    NetworkArch arch{NetworkArch::Kind::residual, 6, 1, 16, 2};
    TrainMatrix tr = synthetic(512, 1);
    TrainMatrix val = synthetic(128, 2);
    TrainHyper hyper;
    hyper.batch_size = 128;
    hyper.max_epochs = 60;
    hyper.seed = 5;
    hyper.schedule.initial = 3e-3;

    auto result = train(arch, tr, val, hyper);
    REQUIRE(!result.run.epochs.empty());
    CHECK(result.run.best_epoch >= 0);
    CHECK(result.run.best_train_loss < 0.1 * result.run.epochs.front().train_loss);
    CHECK(result.run.best_val_loss < 0.1 * result.run.epochs.front().val_loss);
    CHECK(audit_checkpoints(result.run));

    // returned parameters reproduce the recorded best validation loss
    const double val_loss = evaluate_loss(arch, result.params, val, hyper.eval_batch_size);
    CHECK(val_loss == doctest::Approx(result.run.best_val_loss).epsilon(1e-12));
}

TEST_CASE("identical seeds give bit-identical runs") {
    NetworkArch arch{NetworkArch::Kind::plain, 6, 1, 8, 2};
    TrainMatrix tr = synthetic(256, 3);
    TrainMatrix val = synthetic(64, 4);
    TrainHyper hyper;
    hyper.batch_size = 64;
    hyper.max_epochs = 10;
    hyper.seed = 42;

    auto a = train(arch, tr, val, hyper);
    auto b = train(arch, tr, val, hyper);
    REQUIRE(a.run.epochs.size() == b.run.epochs.size());
    for (std::size_t i = 0; i < a.run.epochs.size(); ++i) {
        CHECK(a.run.epochs[i].train_loss == b.run.epochs[i].train_loss);
        CHECK(a.run.epochs[i].val_loss == b.run.epochs[i].val_loss);
    }
    for (std::size_t l = 0; l < a.params.layers.size(); ++l)
        CHECK(a.params.layers[l].weight == b.params.layers[l].weight);

    hyper.seed = 43;
    auto c = train(arch, tr, val, hyper);
    CHECK(c.run.epochs.front().train_loss != a.run.epochs.front().train_loss);
}

TEST_CASE("early stop on reaching the target train loss") {
    NetworkArch arch{NetworkArch::Kind::residual, 6, 1, 16, 2};
    TrainMatrix tr = synthetic(512, 1);
    TrainMatrix val = synthetic(128, 2);
    TrainHyper hyper;
    hyper.batch_size = 128;
    hyper.max_epochs = 200;
    hyper.seed = 5;
    hyper.schedule.initial = 3e-3;

    auto result = train(arch, tr, val, hyper, 5e-4);
    CHECK(result.run.status == TrainStatus::converged);
    CHECK(result.run.epochs.back().train_loss <= 5e-4);
    CHECK(result.run.epochs.size() < 200);
}

TEST_CASE("divergence is detected and reported") {
    NetworkArch arch{NetworkArch::Kind::plain, 6, 1, 16, 3};
    TrainMatrix tr = synthetic(256, 9);
    TrainMatrix val = synthetic(64, 10);
    TrainHyper hyper;
    hyper.batch_size = 32;
    hyper.max_epochs = 200;
    hyper.seed = 1;
    hyper.schedule.initial = 50.0;   // absurd learning rate

    auto result = train(arch, tr, val, hyper);
    CHECK(result.run.status == TrainStatus::diverged);
    CHECK(result.run.epochs.size() < 200);
}

TEST_CASE("audit rejects a doctored run") {
    TrainRun run;
    run.epochs = {{0, 1.0, 1.0, 1e-3, true}, {1, 0.5, 1.2, 1e-3, true}};
    CHECK_FALSE(audit_checkpoints(run));
    run.epochs[1].val_loss = 0.9;
    CHECK(audit_checkpoints(run));
}

TEST_CASE("sweep records failures without aborting") {
    TrainMatrix tr = synthetic(128, 1);
    TrainMatrix val = synthetic(32, 2);
    TrainHyper hyper;
    hyper.batch_size = 32;
    hyper.max_epochs = 5;

    NetworkArch good{NetworkArch::Kind::plain, 6, 1, 8, 2};
    NetworkArch wrong_input{NetworkArch::Kind::plain, 4, 1, 8, 2};
    auto report = run_sweep({good, wrong_input}, {1, 2}, tr, val, hyper);
    REQUIRE(report.entries.size() == 4);
    CHECK_FALSE(report.entries[0].failed);
    CHECK(report.entries[2].failed);
    CHECK_FALSE(report.entries[2].error.empty());

    auto summary = report.summarize();
    REQUIRE(summary.size() == 1);
    CHECK(summary[0].runs == 2);
    CHECK(summary[0].var_val >= 0.0);
}

TEST_CASE("loss curve CSV carries one row per epoch") {
    TrainRun run;
    run.epochs = {{0, 1.0, 1.1, 5e-4, true}, {1, 0.5, 0.6, 5e-4, true}};
    std::ostringstream out;
    write_loss_curve_csv(run, out);
    const std::string text = out.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    CHECK(text.rfind("epoch,train_loss,val_loss,lr,checkpointed", 0) == 0);
}

TEST_CASE("empty splits rejected") {
    NetworkArch arch{NetworkArch::Kind::plain, 6, 1, 8, 2};
    TrainMatrix empty;
    empty.inputs.resize(0, 6);
    empty.targets.resize(0, 1);
    TrainMatrix ok = synthetic(16, 1);
    CHECK_THROWS_AS(train(arch, empty, ok, TrainHyper{}), NetworkError);
    CHECK_THROWS_AS(train(arch, ok, empty, TrainHyper{}), NetworkError);
}
