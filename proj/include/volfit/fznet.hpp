#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "volfit/field.hpp"

namespace volfit {

// Encoder-decoder field network. Both encoders map points through per-point
// layers 3 -> 64 -> 128 -> 256 and max-pool; the body encoder's first layer also
// receives the scene code. The decoder maps [body code, scene code, query]
// through 515 -> 512 -> 512 -> 256 -> 2 with a softplus output (body, scene).
// All inputs are expressed relative to the root joint.
class FzNetModel {
public:
    static constexpr int kCodeSize = 256;

    struct Tensor {
        std::string name;
        Eigen::MatrixXf value;
    };

    FzNetModel() = default;
    static FzNetModel initialize(std::uint64_t seed);

    // World-frame inputs; returns one (body, scene) row per query.
    Eigen::MatrixX2f predict(const Points& body_points, const Points& scene_points, const Vec3d& root,
                             const Points& queries) const;

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    std::size_t parameter_count() const;

private:
    friend class FzNetTrainer;
    std::vector<Tensor> tensors_;
};

// Flat JSON manifest (names, shapes, offsets) plus a little-endian float32 blob
// stored next to it with the extension ".bin".
void save_fznet(const FzNetModel& model, const std::filesystem::path& manifest);
FzNetModel load_fznet(const std::filesystem::path& manifest);

struct FzNetTrainConfig {
    int epochs = 200;
    double learning_rate = 1e-4;
    int decay_epoch = 100;  // learning rate is multiplied by `decay` from this epoch on
    double decay = 0.5;
    double clamp = 0.1;
    int queries_per_epoch = 20000;  // per scene
    int batch_size = 20000;         // queries per optimizer step
    bool rotate_z = true;
    // Keep a gradient on predictions stuck above the clamp (see fznet_batch_loss).
    bool saturated_gradient = true;
    SamplingOptions sampling;
    std::uint64_t seed = 1;
};

struct FzNetTrainingScene {
    Points body_points;   // P_b
    Points scene_points;  // P_s (cropped to the unit sphere internally)
    std::shared_ptr<const FieldLabeler> labeler;
};

struct FzNetTrainResult {
    FzNetModel model;
    std::vector<double> loss_trace;  // mean clamped loss per epoch
};

// Mean clamped loss of one query batch with inputs rotated by `angle` about the
// z-axis through the root. When `grads` is given it receives one gradient per tensor.
// `pass_through` routes the gradient of |F - GT| through a saturated prediction
// whose label lies below the clamp (the exact gradient there is zero).
double fznet_batch_loss(const FzNetModel& model, const Points& body_points, const Points& scene_points,
                        const Vec3d& root, const QuerySet& batch, double clamp, double angle = 0.0,
                        std::vector<Eigen::MatrixXf>* grads = nullptr, bool pass_through = false);

// Throws DivergenceDetected when the loss becomes non-finite.
FzNetTrainResult train_fznet(const std::vector<FzNetTrainingScene>& scenes, const FzNetTrainConfig& config,
                             const FzNetModel* init = nullptr);

// Mean clamped loss over `queries` fresh samples per scene.
double evaluate_fznet(const FzNetModel& model, const std::vector<FzNetTrainingScene>& scenes, int queries,
                      std::uint64_t seed, double clamp, const SamplingOptions& sampling);

class FzNetProvider : public FieldProvider {
public:
    explicit FzNetProvider(const FzNetModel& model) : model_(model) {}
    std::string name() const override { return "fznet"; }

protected:
    void do_evaluate(const Points& body_points, const Points& scene_points, const Vec3d& root, const Points& queries,
                     Eigen::VectorXd& body, Eigen::VectorXd& scene) const override;

private:
    const FzNetModel& model_;
};

}  // namespace volfit
