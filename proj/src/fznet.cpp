#include "volfit/fznet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "volfit/errors.hpp"
#include "volfit/parallel.hpp"

namespace volfit {

using json = nlohmann::json;

namespace {

// Tensor slots.
enum Slot : int {
    kSceneW0, kSceneB0, kSceneW1, kSceneB1, kSceneW2, kSceneB2,
    kBodyW0, kBodyB0, kBodyProj, kBodyW1, kBodyB1, kBodyW2, kBodyB2,
    kDecW0, kDecB0, kDecW1, kDecB1, kDecW2, kDecB2, kDecW3, kDecB3,
    kNumSlots
};

struct Shape {
    const char* name;
    int rows, cols, fan_in;
};

constexpr int kQueryDims = 3;
constexpr float kOutputBias = -3.0f;  // softplus(-3) = 0.049
constexpr int kDecIn = 2 * FzNetModel::kCodeSize + kQueryDims;

const Shape kShapes[kNumSlots] = {
    {"scene_encoder.0.weight", 64, 3, 3},       {"scene_encoder.0.bias", 64, 1, 3},
    {"scene_encoder.1.weight", 128, 64, 64},    {"scene_encoder.1.bias", 128, 1, 64},
    {"scene_encoder.2.weight", 256, 128, 128},  {"scene_encoder.2.bias", 256, 1, 128},
    {"body_encoder.0.weight", 64, 3, 3 + 256},  {"body_encoder.0.bias", 64, 1, 3 + 256},
    {"body_encoder.0.scene_code", 64, 256, 3 + 256},
    {"body_encoder.1.weight", 128, 64, 64},     {"body_encoder.1.bias", 128, 1, 64},
    {"body_encoder.2.weight", 256, 128, 128},   {"body_encoder.2.bias", 256, 1, 128},
    {"decoder.0.weight", 512, kDecIn, kDecIn},  {"decoder.0.bias", 512, 1, kDecIn},
    {"decoder.1.weight", 512, 512, 512},        {"decoder.1.bias", 512, 1, 512},
    {"decoder.2.weight", 256, 512, 512},        {"decoder.2.bias", 256, 1, 512},
    {"decoder.3.weight", 2, 256, 256},          {"decoder.3.bias", 2, 1, 256},
};

using MatF = Eigen::MatrixXf;
using VecF = Eigen::VectorXf;

MatF relu(const MatF& a) { return a.cwiseMax(0.0f); }

float softplus(float x) { return std::max(x, 0.0f) + std::log1p(std::exp(-std::abs(x))); }
float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Points (N x 3, world) -> 3 x N float, relative to root, optionally rotated about z.
MatF to_input(const Points& pts, const Vec3d& root, double angle = 0.0) {
    const double c = std::cos(angle), s = std::sin(angle);
    MatF x(3, pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const Vec3d d = pts.row(i).transpose() - root;
        x(0, i) = static_cast<float>(c * d.x() - s * d.y());
        x(1, i) = static_cast<float>(s * d.x() + c * d.y());
        x(2, i) = static_cast<float>(d.z());
    }
    return x;
}

struct EncoderCache {
    MatF x, a1, h1, a2, h2, a3, h3;
    VecF code;
    std::vector<Eigen::Index> argmax;
};

struct DecoderCache {
    MatF q, a1, h1, a2, h2, a3, h3, a4;
    VecF z;
};

}  // namespace

// Forward/backward passes over the model's tensors.
class FzNetTrainer {
public:
    explicit FzNetTrainer(const FzNetModel& m) : m_(m) {}

    const MatF& t(int slot) const { return m_.tensors_[static_cast<std::size_t>(slot)].value; }

    void encode(const MatF& x, int w0, const VecF* scene_code, EncoderCache& c) const {
        c.x = x;
        c.a1 = t(w0) * x;
        VecF shift = t(w0 + 1).col(0);
        if (scene_code) shift += t(kBodyProj) * *scene_code;
        c.a1.colwise() += shift;
        c.h1 = relu(c.a1);
        const int w1 = scene_code ? kBodyW1 : kSceneW1;
        c.a2 = t(w1) * c.h1;
        c.a2.colwise() += t(w1 + 1).col(0);
        c.h2 = relu(c.a2);
        c.a3 = t(w1 + 2) * c.h2;
        c.a3.colwise() += t(w1 + 3).col(0);
        c.h3 = relu(c.a3);
        c.code.resize(c.h3.rows());
        c.argmax.assign(static_cast<std::size_t>(c.h3.rows()), 0);
        if (c.h3.cols() == 0) {
            c.code.setZero();
            return;
        }
        for (Eigen::Index r = 0; r < c.h3.rows(); ++r) {
            Eigen::Index arg;
            c.code(r) = c.h3.row(r).maxCoeff(&arg);
            c.argmax[static_cast<std::size_t>(r)] = arg;
        }
    }

    void decode(const VecF& body_code, const VecF& scene_code, const MatF& q, DecoderCache& c) const {
        const int k = FzNetModel::kCodeSize;
        c.q = q;
        c.z.resize(2 * k);
        c.z << body_code, scene_code;
        const MatF& w0 = t(kDecW0);
        const VecF shift = w0.leftCols(2 * k) * c.z + t(kDecB0).col(0);
        c.a1 = w0.rightCols(kQueryDims) * q;
        c.a1.colwise() += shift;
        c.h1 = relu(c.a1);
        c.a2 = t(kDecW1) * c.h1;
        c.a2.colwise() += t(kDecB1).col(0);
        c.h2 = relu(c.a2);
        c.a3 = t(kDecW2) * c.h2;
        c.a3.colwise() += t(kDecB2).col(0);
        c.h3 = relu(c.a3);
        c.a4 = t(kDecW3) * c.h3;
        c.a4.colwise() += t(kDecB3).col(0);
    }

    // d_out: 2 x B gradient w.r.t. the softplus outputs.
    void decode_backward(const DecoderCache& c, const MatF& d_out, std::vector<MatF>& g, VecF& d_body_code,
                         VecF& d_scene_code) const {
        const int k = FzNetModel::kCodeSize;
        MatF da4 = d_out;
        for (Eigen::Index j = 0; j < da4.cols(); ++j)
            for (Eigen::Index r = 0; r < da4.rows(); ++r) da4(r, j) *= sigmoid(c.a4(r, j));
        g[kDecW3].noalias() += da4 * c.h3.transpose();
        g[kDecB3].col(0) += da4.rowwise().sum();
        MatF da3 = (t(kDecW3).transpose() * da4).cwiseProduct((c.a3.array() > 0.0f).cast<float>().matrix());
        g[kDecW2].noalias() += da3 * c.h2.transpose();
        g[kDecB2].col(0) += da3.rowwise().sum();
        MatF da2 = (t(kDecW2).transpose() * da3).cwiseProduct((c.a2.array() > 0.0f).cast<float>().matrix());
        g[kDecW1].noalias() += da2 * c.h1.transpose();
        g[kDecB1].col(0) += da2.rowwise().sum();
        MatF da1 = (t(kDecW1).transpose() * da2).cwiseProduct((c.a1.array() > 0.0f).cast<float>().matrix());
        const VecF s = da1.rowwise().sum();
        g[kDecW0].leftCols(2 * k).noalias() += s * c.z.transpose();
        g[kDecW0].rightCols(kQueryDims).noalias() += da1 * c.q.transpose();
        g[kDecB0].col(0) += s;
        const VecF dz = t(kDecW0).leftCols(2 * k).transpose() * s;
        d_body_code = dz.head(k);
        d_scene_code = dz.tail(k);
    }

    void encode_backward(const EncoderCache& c, const VecF& d_code, int w0, const VecF* scene_code,
                         std::vector<MatF>& g, VecF* d_scene_code) const {
        const int w1 = scene_code ? kBodyW1 : kSceneW1;
        if (c.h3.cols() == 0) return;
        MatF da3 = MatF::Zero(c.a3.rows(), c.a3.cols());
        for (Eigen::Index r = 0; r < da3.rows(); ++r) {
            const Eigen::Index j = c.argmax[static_cast<std::size_t>(r)];
            if (c.a3(r, j) > 0.0f) da3(r, j) = d_code(r);
        }
        g[w1 + 2].noalias() += da3 * c.h2.transpose();
        g[w1 + 3].col(0) += da3.rowwise().sum();
        MatF da2 = (t(w1 + 2).transpose() * da3).cwiseProduct((c.a2.array() > 0.0f).cast<float>().matrix());
        g[w1].noalias() += da2 * c.h1.transpose();
        g[w1 + 1].col(0) += da2.rowwise().sum();
        MatF da1 = (t(w1).transpose() * da2).cwiseProduct((c.a1.array() > 0.0f).cast<float>().matrix());
        g[w0].noalias() += da1 * c.x.transpose();
        const VecF s = da1.rowwise().sum();
        g[w0 + 1].col(0) += s;
        if (scene_code) {
            g[kBodyProj].noalias() += s * scene_code->transpose();
            if (d_scene_code) *d_scene_code += t(kBodyProj).transpose() * s;
        }
    }

private:
    const FzNetModel& m_;
};

FzNetModel FzNetModel::initialize(std::uint64_t seed) {
    FzNetModel m;
    Rng rng(seed);
    for (int s = 0; s < kNumSlots; ++s) {
        const Shape& sh = kShapes[s];
        Tensor t{sh.name, MatF::Zero(sh.rows, sh.cols)};
        if (sh.cols > 1 || std::string(sh.name).find("bias") == std::string::npos) {
            // He-uniform initialization.
            const double bound = std::sqrt(6.0 / sh.fan_in);
            for (int r = 0; r < sh.rows; ++r)
                for (int c = 0; c < sh.cols; ++c)
                    t.value(r, c) = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
        }
        m.tensors_.push_back(std::move(t));
    }
    // The query columns are initialized as their own 3-input layer so that the
    // query is not drowned out by the 512 code inputs.
    {
        MatF& w = m.tensors_[kDecW0].value;
        const double bound = std::sqrt(6.0 / kQueryDims);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = w.cols() - kQueryDims; c < w.cols(); ++c)
                w(r, c) = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
    }
    // Start the outputs below the loss clamp, where the clamped loss has a gradient.
    m.tensors_[kDecB3].value.setConstant(kOutputBias);
    return m;
}

std::size_t FzNetModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

Eigen::MatrixX2f FzNetModel::predict(const Points& body_points, const Points& scene_points, const Vec3d& root,
                                     const Points& queries) const {
    if (tensors_.size() != kNumSlots) throw ConfigError("FZNet model is not initialized");
    FzNetTrainer net(*this);
    EncoderCache sc, bc;
    net.encode(to_input(scene_points, root), kSceneW0, nullptr, sc);
    net.encode(to_input(body_points, root), kBodyW0, &sc.code, bc);
    const MatF q = to_input(queries, root);
    Eigen::MatrixX2f out(queries.rows(), 2);
    constexpr int kBlock = 2048;
    const int blocks = static_cast<int>((queries.rows() + kBlock - 1) / kBlock);
    parallel_for(blocks, 1, [&](int b0, int b1) {
        DecoderCache dc;
        for (int b = b0; b < b1; ++b) {
            const Eigen::Index start = static_cast<Eigen::Index>(b) * kBlock;
            const Eigen::Index len = std::min<Eigen::Index>(kBlock, q.cols() - start);
            net.decode(bc.code, sc.code, q.middleCols(start, len), dc);
            for (Eigen::Index j = 0; j < len; ++j)
                for (int r = 0; r < 2; ++r) out(start + j, r) = softplus(dc.a4(r, j));
        }
    });
    return out;
}

void save_fznet(const FzNetModel& model, const std::filesystem::path& manifest) {
    std::filesystem::path blob = manifest;
    blob.replace_extension(".bin");
    std::ofstream bin(blob, std::ios::binary);
    if (!bin) throw IoError("cannot write " + blob.string());
    json j;
    j["format"] = "volfit-fznet";
    j["version"] = 1;
    j["dtype"] = "float32";
    j["byte_order"] = "little";
    j["blob"] = blob.filename().string();
    json tensors = json::array();
    std::size_t offset = 0;
    for (const auto& t : model.tensors()) {
        tensors.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}, {"offset", offset}});
        // Row-major order in the blob.
        for (Eigen::Index r = 0; r < t.value.rows(); ++r)
            for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
                const float v = t.value(r, c);
                char bytes[4];
                std::memcpy(bytes, &v, 4);
                bin.write(bytes, 4);
            }
        offset += static_cast<std::size_t>(t.value.size());
    }
    j["tensors"] = tensors;
    std::ofstream out(manifest);
    if (!out) throw IoError("cannot write " + manifest.string());
    out << j.dump(2) << "\n";
}

FzNetModel load_fznet(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot read " + manifest.string());
    FzNetModel model;
    try {
        const json j = json::parse(in);
        if (j.at("format") != "volfit-fznet" || j.at("dtype") != "float32")
            throw IoError(manifest.string() + ": not an FZNet manifest");
        const std::filesystem::path blob = manifest.parent_path() / j.at("blob").get<std::string>();
        std::ifstream bin(blob, std::ios::binary);
        if (!bin) throw IoError("cannot read " + blob.string());
        const auto& list = j.at("tensors");
        if (list.size() != kNumSlots) throw IoError(manifest.string() + ": unexpected tensor count");
        for (int s = 0; s < kNumSlots; ++s) {
            const auto& e = list[static_cast<std::size_t>(s)];
            const int rows = e.at("shape")[0].get<int>(), cols = e.at("shape")[1].get<int>();
            if (e.at("name") != kShapes[s].name || rows != kShapes[s].rows || cols != kShapes[s].cols)
                throw IoError(manifest.string() + ": tensor " + std::to_string(s) + " does not match the architecture");
            bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::size_t>() * 4));
            FzNetModel::Tensor t{kShapes[s].name, MatF(rows, cols)};
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    char bytes[4];
                    if (!bin.read(bytes, 4)) throw IoError(blob.string() + ": truncated");
                    std::memcpy(&t.value(r, c), bytes, 4);
                }
            if (!t.value.allFinite()) throw IoError(blob.string() + ": non-finite weights");
            model.tensors().push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw IoError(manifest.string() + ": " + e.what());
    }
    return model;
}

namespace {

struct Adam {
    std::vector<MatF> m, v;
    long step = 0;
    void init(const FzNetModel& model) {
        for (const auto& t : model.tensors()) {
            m.push_back(MatF::Zero(t.value.rows(), t.value.cols()));
            v.push_back(MatF::Zero(t.value.rows(), t.value.cols()));
        }
    }
    void update(FzNetModel& model, const std::vector<MatF>& g, double lr) {
        constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
        ++step;
        const float c1 = 1.0f - std::pow(b1, static_cast<float>(step));
        const float c2 = 1.0f - std::pow(b2, static_cast<float>(step));
        const float a = static_cast<float>(lr) * std::sqrt(c2) / c1;
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i].cwiseAbs2();
            model.tensors()[i].value.array() -= a * m[i].array() / (v[i].array().sqrt() + eps);
        }
    }
};

std::vector<MatF> zero_grads(const FzNetModel& model) {
    std::vector<MatF> g;
    for (const auto& t : model.tensors()) g.push_back(MatF::Zero(t.value.rows(), t.value.cols()));
    return g;
}

std::uint64_t step_seed(std::uint64_t seed, long a, long b) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(a + 1) +
                      0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Clamped loss of one batch; fills d_out (2 x B) with the gradient of the mean.
// With `pass_through`, a prediction above the clamp whose label is below it still
// receives the gradient of |F - GT|; the loss value itself is unchanged.
double batch_loss(const MatF& a4, const QuerySet& qs, double clamp, bool pass_through, MatF* d_out) {
    const Eigen::Index b = a4.cols();
    const float d = static_cast<float>(clamp);
    if (d_out) d_out->setZero(2, b);
    double total = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
        const float gt[2] = {static_cast<float>(qs.gt_body(j)), static_cast<float>(qs.gt_scene(j))};
        for (int r = 0; r < 2; ++r) {
            const float f = softplus(a4(r, j));
            const float diff = std::min(f, d) - std::min(gt[r], d);
            total += std::abs(diff);
            if (!d_out) continue;
            if (f < d && diff != 0.0f)
                (*d_out)(r, j) = (diff > 0.0f ? 1.0f : -1.0f) / static_cast<float>(b);
            else if (pass_through && f >= d && gt[r] < d)
                (*d_out)(r, j) = 1.0f / static_cast<float>(b);
        }
    }
    return total / static_cast<double>(b);
}

}  // namespace

double fznet_batch_loss(const FzNetModel& model, const Points& body_points, const Points& scene_points,
                        const Vec3d& root, const QuerySet& batch, double clamp, double angle,
                        std::vector<Eigen::MatrixXf>* grads, bool pass_through) {
    if (model.tensors().size() != kNumSlots) throw ConfigError("FZNet model is not initialized");
    FzNetTrainer net(model);
    EncoderCache sce, bce;
    DecoderCache dc;
    net.encode(to_input(scene_points, root, angle), kSceneW0, nullptr, sce);
    net.encode(to_input(body_points, root, angle), kBodyW0, &sce.code, bce);
    net.decode(bce.code, sce.code, to_input(batch.queries, root, angle), dc);
    MatF d_out;
    const double loss = batch_loss(dc.a4, batch, clamp, pass_through, grads ? &d_out : nullptr);
    if (grads && std::isfinite(loss)) {
        *grads = zero_grads(model);
        VecF d_body, d_scene;
        net.decode_backward(dc, d_out, *grads, d_body, d_scene);
        net.encode_backward(bce, d_body, kBodyW0, &sce.code, *grads, &d_scene);
        net.encode_backward(sce, d_scene, kSceneW0, nullptr, *grads, nullptr);
    }
    return loss;
}

FzNetTrainResult train_fznet(const std::vector<FzNetTrainingScene>& scenes, const FzNetTrainConfig& config,
                             const FzNetModel* init) {
    if (scenes.empty()) throw ConfigError("FZNet training needs at least one scene");
    if (config.epochs < 1 || config.batch_size < 1 || config.queries_per_epoch < 1000)
        throw ConfigError("invalid FZNet training configuration");
    FzNetTrainResult result;
    result.model = init ? *init : FzNetModel::initialize(config.seed);
    Adam adam;
    adam.init(result.model);
    const Eigen::Index batch = config.batch_size;
    Rng angle_rng(step_seed(config.seed, -1, -1));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.learning_rate * (epoch >= config.decay_epoch ? config.decay : 1.0);
        double epoch_loss = 0.0;
        long batches = 0;
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            const FzNetTrainingScene& sc = scenes[s];
            const Vec3d root = sc.labeler->root();
            const Points scene_crop = crop_to_sphere(sc.scene_points, root, 1.0);
            // One fresh query set per scene and epoch, consumed in mini-batches.
            const QuerySet pool = sample_training_points(*sc.labeler, config.queries_per_epoch,
                                                         step_seed(config.seed, epoch, static_cast<long>(s)),
                                                         config.sampling);
            for (Eigen::Index begin = 0; begin < pool.queries.rows(); begin += batch) {
                const Eigen::Index n = std::min(batch, pool.queries.rows() - begin);
                QuerySet qs;
                qs.queries = pool.queries.middleRows(begin, n);
                qs.gt_body = pool.gt_body.segment(begin, n);
                qs.gt_scene = pool.gt_scene.segment(begin, n);
                const double angle = config.rotate_z ? 2.0 * M_PI * uniform01(angle_rng) : 0.0;
                std::vector<MatF> g;
                const double loss = fznet_batch_loss(result.model, sc.body_points, scene_crop, root, qs, config.clamp,
                                                     angle, &g, config.saturated_gradient);
                if (!std::isfinite(loss)) throw DivergenceDetected("FZNet loss became non-finite");
                adam.update(result.model, g, lr);
                epoch_loss += loss;
                ++batches;
            }
        }
        const double mean = epoch_loss / static_cast<double>(batches);
        if (!std::isfinite(mean)) throw DivergenceDetected("FZNet loss became non-finite");
        result.loss_trace.push_back(mean);
    }
    return result;
}

double evaluate_fznet(const FzNetModel& model, const std::vector<FzNetTrainingScene>& scenes, int queries,
                      std::uint64_t seed, double clamp, const SamplingOptions& sampling) {
    if (scenes.empty()) throw ConfigError("FZNet evaluation needs at least one scene");
    double total = 0.0;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const FzNetTrainingScene& sc = scenes[s];
        const QuerySet qs = sample_training_points(*sc.labeler, queries, step_seed(seed, 1 << 20, static_cast<long>(s)),
                                                   sampling);
        const Eigen::MatrixX2f pred = model.predict(sc.body_points, crop_to_sphere(sc.scene_points, sc.labeler->root(), 1.0),
                                                    sc.labeler->root(), qs.queries);
        double loss = 0.0;
        for (Eigen::Index j = 0; j < pred.rows(); ++j)
            loss += fznet_loss({Vec3d::Zero(), pred(j, 0), pred(j, 1)}, {Vec3d::Zero(), qs.gt_body(j), qs.gt_scene(j)},
                               clamp);
        total += loss / static_cast<double>(pred.rows());
    }
    return total / static_cast<double>(scenes.size());
}

void FzNetProvider::do_evaluate(const Points& body_points, const Points& scene_points, const Vec3d& root,
                                const Points& queries, Eigen::VectorXd& body, Eigen::VectorXd& scene) const {
    const Eigen::MatrixX2f pred = model_.predict(body_points, scene_points, root, queries);
    body = pred.col(0).cast<double>();
    scene = pred.col(1).cast<double>();
}

}  // namespace volfit
