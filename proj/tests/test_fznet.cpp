#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "volfit/errors.hpp"
#include "volfit/fznet.hpp"

using namespace volfit;

namespace {

struct ToyScene {
    TriMesh body = make_icosphere(Vec3d(0.05, 0, 0.1), 0.25, 2);
    TriMesh scene = make_box(Vec3d(0, 0, -0.3), Vec3d(0.7, 0.7, 0.05));
    std::shared_ptr<const FieldLabeler> labeler =
        std::make_shared<FieldLabeler>(body, scene, Vec3d::Zero(), 3, 2000, 2000);
    Points body_points;
    Points scene_points;
    ToyScene() {
        Rng rng(5);
        body_points = sample_surface(body, 256, rng);
        scene_points = sample_surface(scene, 512, rng);
    }
};

const ToyScene& toy() {
    static const ToyScene t;
    return t;
}

}  // namespace

TEST_CASE("model layout and forward pass") {
    const FzNetModel m = FzNetModel::initialize(1);
    REQUIRE(m.tensors().size() == 21);
    CHECK(m.tensors()[13].value.rows() == 512);
    CHECK(m.tensors()[13].value.cols() == 515);
    CHECK(m.tensors().back().value.rows() == 2);
    const ToyScene& t = toy();
    const QuerySet qs = sample_training_points(*t.labeler, 1000, 2);
    const Eigen::MatrixX2f a = m.predict(t.body_points, t.scene_points, Vec3d::Zero(), qs.queries);
    const Eigen::MatrixX2f b = m.predict(t.body_points, t.scene_points, Vec3d::Zero(), qs.queries);
    CHECK(a == b);
    CHECK(a.allFinite());
    CHECK(a.minCoeff() >= 0.0f);
    CHECK_THROWS_AS(FzNetModel().predict(t.body_points, t.scene_points, Vec3d::Zero(), qs.queries), ConfigError);
}

TEST_CASE("serialization round trip") {
    const FzNetModel m = FzNetModel::initialize(9);
    const auto dir = std::filesystem::temp_directory_path() / "volfit_fznet_test";
    std::filesystem::create_directories(dir);
    save_fznet(m, dir / "model.json");
    CHECK(std::filesystem::exists(dir / "model.bin"));
    CHECK(std::filesystem::file_size(dir / "model.bin") == 4 * m.parameter_count());
    const FzNetModel r = load_fznet(dir / "model.json");
    REQUIRE(r.tensors().size() == m.tensors().size());
    for (std::size_t i = 0; i < m.tensors().size(); ++i) {
        CHECK(r.tensors()[i].name == m.tensors()[i].name);
        CHECK(r.tensors()[i].value == m.tensors()[i].value);
    }
    CHECK_THROWS_AS(load_fznet(dir / "missing.json"), IoError);
    std::filesystem::resize_file(dir / "model.bin", 400);
    CHECK_THROWS_AS(load_fznet(dir / "model.json"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("backpropagation matches finite differences") {
    const ToyScene& t = toy();
    const FzNetModel m = FzNetModel::initialize(4);
    QuerySet qs = sample_training_points(*t.labeler, 1000, 6);
    // A wide clamp keeps the loss away from its saturation kinks.
    const double clamp = 10.0;
    std::vector<Eigen::MatrixXf> g;
    fznet_batch_loss(m, t.body_points, t.scene_points, Vec3d::Zero(), qs, clamp, 0.3, &g);
    REQUIRE(g.size() == 21);
    Rng rng(12);
    int checked = 0, agreed = 0;
    for (std::size_t slot = 0; slot < g.size(); ++slot) {
        for (int k = 0; k < 3; ++k) {
            Eigen::Index r, c;
            g[slot].cwiseAbs().maxCoeff(&r, &c);
            if (k > 0) {
                r = static_cast<Eigen::Index>(uniform01(rng) * g[slot].rows());
                c = static_cast<Eigen::Index>(uniform01(rng) * g[slot].cols());
            }
            const float analytic = g[slot](r, c);
            if (std::abs(analytic) < 1e-4f) continue;
            const float h = 2e-3f;
            FzNetModel plus = m, minus = m;
            plus.tensors()[slot].value(r, c) += h;
            minus.tensors()[slot].value(r, c) -= h;
            const double fd = (fznet_batch_loss(plus, t.body_points, t.scene_points, Vec3d::Zero(), qs, clamp, 0.3) -
                               fznet_batch_loss(minus, t.body_points, t.scene_points, Vec3d::Zero(), qs, clamp, 0.3)) /
                              (2.0 * h);
            ++checked;
            agreed += std::abs(fd - analytic) <= 0.05 * std::abs(analytic) + 1e-4;
        }
    }
    CHECK(checked >= 30);
    CHECK(agreed >= checked - 2);
}

TEST_CASE("training reduces the loss on a toy scene") {
    const ToyScene& t = toy();
    FzNetTrainConfig cfg;
    cfg.epochs = 40;
    cfg.decay_epoch = 30;
    cfg.learning_rate = 1e-4;
    cfg.queries_per_epoch = 5000;
    cfg.batch_size = 1000;
    cfg.sampling.interior_zero = true;
    const std::vector<FzNetTrainingScene> scenes{{t.body_points, t.scene_points, t.labeler}};
    const double before = evaluate_fznet(FzNetModel::initialize(cfg.seed), scenes, 2000, 77, 0.1, cfg.sampling);
    const FzNetTrainResult r = train_fznet(scenes, cfg);
    REQUIRE(r.loss_trace.size() == 40);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
    const double after = evaluate_fznet(r.model, scenes, 2000, 77, 0.1, cfg.sampling);
    CHECK(after < 0.6 * before);

    const FzNetProvider provider(r.model);
    const FreeZonePoints fz = carve_free_zone(provider, t.body_points, t.scene_points, Vec3d::Zero(), 0.03125);
    CHECK(provider.calls() == 1);
    CHECK(fz.points.rows() < 262144);
}

TEST_CASE("training configuration is validated") {
    FzNetTrainConfig cfg;
    CHECK_THROWS_AS(train_fznet({}, cfg), ConfigError);
    cfg.epochs = 0;
    const ToyScene& t = toy();
    CHECK_THROWS_AS(train_fznet({{t.body_points, t.scene_points, t.labeler}}, cfg), ConfigError);
}

TEST_CASE("saturated predictions get a gradient only with pass-through") {
    const ToyScene& t = toy();
    FzNetModel m = FzNetModel::initialize(2);
    // Push every output far above the clamp.
    m.tensors().back().value.setConstant(5.0f);
    const QuerySet qs = sample_training_points(*t.labeler, 1000, 1);
    std::vector<Eigen::MatrixXf> exact, pass;
    const double a = fznet_batch_loss(m, t.body_points, t.scene_points, Vec3d::Zero(), qs, 0.1, 0.0, &exact, false);
    const double b = fznet_batch_loss(m, t.body_points, t.scene_points, Vec3d::Zero(), qs, 0.1, 0.0, &pass, true);
    CHECK(a == b);
    CHECK(exact.back().cwiseAbs().maxCoeff() == 0.0f);
    CHECK(pass.back()(0, 0) > 0.0f);
}
