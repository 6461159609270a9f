#include "invad/mlp.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "invad/error.hpp"

namespace invad {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const Mat>;
using ConstVecMap = Eigen::Map<const Vec>;
using MatMap = Eigen::Map<Mat>;
using VecMap = Eigen::Map<Vec>;

constexpr double kMaxFrequency = 1e4;

double silu(double z) { return z / (1.0 + std::exp(-z)); }

double silu_grad(double z) {
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// Group indices in layout order.
constexpr std::size_t kTimeW = 0, kTimeB = 1, kInW = 2, kInB = 3, kBlockBase = 4, kPerBlock = 6;
enum BlockSlot : std::size_t { kModW = 0, kModB, kFc1W, kFc1B, kFc2W, kFc2B };

struct BlockCache {
    Mat h_in, mod, u, z1, a, v;
};

struct Cache {
    Mat emb, zt, cond;
    std::vector<BlockCache> blocks;
    Mat h_final, fmod, uf, out;
};

// Read-only views over the flat parameter vector.
class Weights {
public:
    Weights(const MlpArch& arch, const std::vector<ParamGroup>& groups, const double* base)
        : arch_(arch), groups_(groups), base_(base) {}

    ConstMatMap mat(std::size_t g, Eigen::Index rows, Eigen::Index cols) const {
        return ConstMatMap(base_ + groups_[g].offset, rows, cols);
    }
    ConstVecMap vec(std::size_t g, Eigen::Index n) const { return ConstVecMap(base_ + groups_[g].offset, n); }

    std::size_t block(int l, BlockSlot slot) const { return kBlockBase + kPerBlock * l + slot; }
    std::size_t final_mod_w() const { return kBlockBase + kPerBlock * arch_.depth; }
    std::size_t final_mod_b() const { return final_mod_w() + 1; }
    std::size_t out_w() const { return final_mod_w() + 2; }
    std::size_t out_b() const { return final_mod_w() + 3; }

private:
    const MlpArch& arch_;
    const std::vector<ParamGroup>& groups_;
    const double* base_;
};

Mat to_columns(std::span<const Tensor> xs, std::size_t dim) {
    Mat x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(xs.size()));
    for (std::size_t b = 0; b < xs.size(); ++b) {
        if (xs[b].size() != dim) throw InvalidArgument("MlpEpsModel: latent size mismatch");
        x.col(static_cast<Eigen::Index>(b)) = ConstVecMap(xs[b].data().data(), static_cast<Eigen::Index>(dim));
    }
    return x;
}

Mat silu(const Mat& z) { return z.unaryExpr([](double v) { return silu(v); }); }

Mat modulate(const Mat& h, const Mat& shift, const Mat& scale) {
    return h.cwiseProduct((scale.array() + 1.0).matrix()) + shift;
}

}  // namespace

std::size_t MlpArch::input_dim() const {
    if (latent_shape.empty()) return 0;
    return shape_volume(latent_shape);
}

void MlpArch::validate() const {
    if (latent_shape.size() != 3 || input_dim() == 0) {
        throw InvalidArgument("MlpArch: latent shape must be C x h x w with positive dims");
    }
    if (depth < 1) throw InvalidArgument("MlpArch: depth must be >= 1");
    if (width < 1 || cond_dim < 1) throw InvalidArgument("MlpArch: width and cond_dim must be positive");
    if (time_dim < 2 || time_dim % 2 != 0) throw InvalidArgument("MlpArch: time_dim must be even and >= 2");
}

MlpEpsModel::MlpEpsModel(MlpArch arch, int total_steps) : arch_(std::move(arch)), total_steps_(total_steps) {
    arch_.validate();
    if (total_steps < 1) throw InvalidArgument("MlpEpsModel: total_steps must be >= 1");
    build_layout();
}

void MlpEpsModel::build_layout() {
    const std::size_t d = arch_.input_dim();
    const auto w = static_cast<std::size_t>(arch_.width);
    const auto k = static_cast<std::size_t>(arch_.cond_dim);
    const auto e = static_cast<std::size_t>(arch_.time_dim);
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t n) {
        groups_.push_back({std::move(name), offset, n});
        offset += n;
    };
    add("time.w", k * e);
    add("time.b", k);
    add("in.w", w * d);
    add("in.b", w);
    for (int l = 0; l < arch_.depth; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        add(p + "mod.w", 3 * w * k);
        add(p + "mod.b", 3 * w);
        add(p + "fc1.w", w * w);
        add(p + "fc1.b", w);
        add(p + "fc2.w", w * w);
        add(p + "fc2.b", w);
    }
    add("final.mod.w", 2 * w * k);
    add("final.mod.b", 2 * w);
    add("out.w", d * w);
    add("out.b", d);
    params_.assign(offset, 0.0);
}

MlpEpsModel MlpEpsModel::initialized(MlpArch arch, int total_steps, Rng& rng) {
    MlpEpsModel model(std::move(arch), total_steps);
    const std::size_t d = model.arch_.input_dim();
    const auto w = static_cast<std::size_t>(model.arch_.width);
    for (const ParamGroup& g : model.groups_) {
        const bool is_weight = g.name.ends_with(".w");
        const bool is_modulation = g.name.find("mod.") != std::string::npos;
        if (!is_weight || is_modulation) continue;
        std::size_t fan_in = w;
        if (g.name == "time.w") fan_in = static_cast<std::size_t>(model.arch_.time_dim);
        if (g.name == "in.w") fan_in = d;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < g.size; ++i) model.params_[g.offset + i] = rng.uniform(-bound, bound);
    }
    return model;
}

void MlpEpsModel::randomize_all(Rng& rng, double scale) {
    for (double& p : params_) p = rng.uniform(-scale, scale);
}

std::vector<double> MlpEpsModel::time_embedding(Step step) const {
    if (step < 0 || step >= total_steps_) {
        throw InvalidArgument("MlpEpsModel: step " + std::to_string(step) + " outside trained range");
    }
    const int half = arch_.time_dim / 2;
    const double t = total_steps_ == 1 ? 0.0 : static_cast<double>(step) / (total_steps_ - 1);
    std::vector<double> emb(static_cast<std::size_t>(arch_.time_dim));
    for (int k = 0; k < half; ++k) {
        const double freq = half == 1 ? 1.0 : std::exp(std::log(kMaxFrequency) * k / (half - 1));
        emb[static_cast<std::size_t>(k)] = std::sin(freq * t);
        emb[static_cast<std::size_t>(half + k)] = std::cos(freq * t);
    }
    return emb;
}

namespace {

Cache forward(const MlpEpsModel& model, const Mat& x, std::span<const Step> steps) {
    const MlpArch& arch = model.arch();
    const Weights wt(arch, model.groups(), model.params().data());
    const auto d = static_cast<Eigen::Index>(arch.input_dim());
    const Eigen::Index w = arch.width, k = arch.cond_dim, e = arch.time_dim;
    const Eigen::Index batch = x.cols();

    Cache c;
    c.emb.resize(e, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto emb = model.time_embedding(steps[static_cast<std::size_t>(b)]);
        c.emb.col(b) = ConstVecMap(emb.data(), e);
    }
    c.zt = wt.mat(kTimeW, k, e) * c.emb;
    c.zt.colwise() += wt.vec(kTimeB, k);
    c.cond = silu(c.zt);

    Mat h = wt.mat(kInW, w, d) * x;
    h.colwise() += wt.vec(kInB, w);

    c.blocks.resize(static_cast<std::size_t>(arch.depth));
    for (int l = 0; l < arch.depth; ++l) {
        BlockCache& bc = c.blocks[static_cast<std::size_t>(l)];
        bc.h_in = h;
        bc.mod = wt.mat(wt.block(l, kModW), 3 * w, k) * c.cond;
        bc.mod.colwise() += wt.vec(wt.block(l, kModB), 3 * w);
        bc.u = modulate(h, bc.mod.topRows(w), bc.mod.middleRows(w, w));
        bc.z1 = wt.mat(wt.block(l, kFc1W), w, w) * bc.u;
        bc.z1.colwise() += wt.vec(wt.block(l, kFc1B), w);
        bc.a = silu(bc.z1);
        bc.v = wt.mat(wt.block(l, kFc2W), w, w) * bc.a;
        bc.v.colwise() += wt.vec(wt.block(l, kFc2B), w);
        h += bc.mod.bottomRows(w).cwiseProduct(bc.v);
    }

    c.h_final = h;
    c.fmod = wt.mat(wt.final_mod_w(), 2 * w, k) * c.cond;
    c.fmod.colwise() += wt.vec(wt.final_mod_b(), 2 * w);
    c.uf = modulate(h, c.fmod.topRows(w), c.fmod.bottomRows(w));
    c.out = wt.mat(wt.out_w(), d, w) * c.uf;
    c.out.colwise() += wt.vec(wt.out_b(), d);
    return c;
}

std::vector<Tensor> from_columns(const Mat& out, const std::vector<std::size_t>& shape) {
    std::vector<Tensor> result;
    result.reserve(static_cast<std::size_t>(out.cols()));
    for (Eigen::Index b = 0; b < out.cols(); ++b) {
        std::vector<double> v(out.col(b).data(), out.col(b).data() + out.rows());
        result.emplace_back(shape, std::move(v));
    }
    return result;
}

}  // namespace

std::vector<Tensor> MlpEpsModel::predict_steps(std::span<const Tensor> xs, std::span<const Step> steps) const {
    if (xs.size() != steps.size()) throw InvalidArgument("predict_steps: batch/steps length mismatch");
    if (xs.empty()) return {};
    for (const Tensor& x : xs) check_latent_shape(*this, x, "MlpEpsModel");
    const Cache c = forward(*this, to_columns(xs, arch_.input_dim()), steps);
    return from_columns(c.out, arch_.latent_shape);
}

std::vector<Tensor> MlpEpsModel::predict_batch(std::span<const Tensor> xs, Step step) const {
    const std::vector<Step> steps(xs.size(), step);
    return predict_steps(xs, steps);
}

double MlpEpsModel::loss_and_grad(std::span<const Tensor> xs, std::span<const Step> steps,
                                  std::span<const Tensor> targets, std::vector<double>* grad) const {
    if (xs.empty()) throw InvalidArgument("loss_and_grad: empty batch");
    if (xs.size() != steps.size() || xs.size() != targets.size()) {
        throw InvalidArgument("loss_and_grad: batch/steps/targets length mismatch");
    }
    const auto d = static_cast<Eigen::Index>(arch_.input_dim());
    const Eigen::Index w = arch_.width, k = arch_.cond_dim, e = arch_.time_dim;
    const Mat x = to_columns(xs, arch_.input_dim());
    const Mat target = to_columns(targets, arch_.input_dim());
    const Cache c = forward(*this, x, steps);

    const double inv_batch = 1.0 / static_cast<double>(xs.size());
    const Mat residual = c.out - target;
    const double loss = residual.squaredNorm() * inv_batch;
    if (!grad) return loss;

    grad->assign(params_.size(), 0.0);
    const Weights wt(arch_, groups_, params_.data());
    auto gmat = [&](std::size_t g, Eigen::Index rows, Eigen::Index cols) {
        return MatMap(grad->data() + groups_[g].offset, rows, cols);
    };
    auto gvec = [&](std::size_t g, Eigen::Index n) { return VecMap(grad->data() + groups_[g].offset, n); };

    const Mat d_out = (2.0 * inv_batch) * residual;
    gmat(wt.out_w(), d, w).noalias() = d_out * c.uf.transpose();
    gvec(wt.out_b(), d) = d_out.rowwise().sum();
    const Mat d_uf = wt.mat(wt.out_w(), d, w).transpose() * d_out;

    Mat d_fmod(2 * w, x.cols());
    d_fmod.topRows(w) = d_uf;
    d_fmod.bottomRows(w) = d_uf.cwiseProduct(c.h_final);
    Mat d_h = d_uf.cwiseProduct((c.fmod.bottomRows(w).array() + 1.0).matrix());
    gmat(wt.final_mod_w(), 2 * w, k).noalias() = d_fmod * c.cond.transpose();
    gvec(wt.final_mod_b(), 2 * w) = d_fmod.rowwise().sum();
    Mat d_cond = wt.mat(wt.final_mod_w(), 2 * w, k).transpose() * d_fmod;

    for (int l = arch_.depth - 1; l >= 0; --l) {
        const BlockCache& bc = c.blocks[static_cast<std::size_t>(l)];
        Mat d_mod(3 * w, x.cols());
        d_mod.bottomRows(w) = d_h.cwiseProduct(bc.v);
        const Mat d_v = d_h.cwiseProduct(bc.mod.bottomRows(w));

        gmat(wt.block(l, kFc2W), w, w).noalias() = d_v * bc.a.transpose();
        gvec(wt.block(l, kFc2B), w) = d_v.rowwise().sum();
        const Mat d_a = wt.mat(wt.block(l, kFc2W), w, w).transpose() * d_v;
        const Mat d_z1 = d_a.cwiseProduct(bc.z1.unaryExpr([](double v) { return silu_grad(v); }));
        gmat(wt.block(l, kFc1W), w, w).noalias() = d_z1 * bc.u.transpose();
        gvec(wt.block(l, kFc1B), w) = d_z1.rowwise().sum();
        const Mat d_u = wt.mat(wt.block(l, kFc1W), w, w).transpose() * d_z1;

        d_mod.topRows(w) = d_u;
        d_mod.middleRows(w, w) = d_u.cwiseProduct(bc.h_in);
        d_h += d_u.cwiseProduct((bc.mod.middleRows(w, w).array() + 1.0).matrix());

        gmat(wt.block(l, kModW), 3 * w, k).noalias() = d_mod * c.cond.transpose();
        gvec(wt.block(l, kModB), 3 * w) = d_mod.rowwise().sum();
        d_cond.noalias() += wt.mat(wt.block(l, kModW), 3 * w, k).transpose() * d_mod;
    }

    gmat(kInW, w, d).noalias() = d_h * x.transpose();
    gvec(kInB, w) = d_h.rowwise().sum();

    const Mat d_zt = d_cond.cwiseProduct(c.zt.unaryExpr([](double v) { return silu_grad(v); }));
    gmat(kTimeW, k, e).noalias() = d_zt * c.emb.transpose();
    gvec(kTimeB, k) = d_zt.rowwise().sum();
    return loss;
}

}  // namespace invad
