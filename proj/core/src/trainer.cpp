#include "statesoup/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "statesoup/error.hpp"

namespace statesoup {

void TrainConfig::validate() const {
    if (!(mixture >= 0.0 && mixture <= 1.0)) throw ConfigError("mixture must lie in [0, 1]");
    if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
    if (batch == 0 || seq_len < 2 || corpus_seq_len < 2) throw ConfigError("batch >= 1 and lengths >= 2 required");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"steps", c.steps},     {"batch", c.batch},       {"seq_len", c.seq_len},
                       {"lr", c.lr},           {"beta1", c.beta1},       {"beta2", c.beta2},
                       {"eps", c.eps},         {"mixture", c.mixture},   {"clip_norm", c.clip_norm},
                       {"seed", c.seed},       {"corpus_seq_len", c.corpus_seq_len}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    check_known_keys(j, {"steps", "batch", "seq_len", "lr", "beta1", "beta2", "eps", "mixture", "clip_norm", "seed",
                         "corpus_seq_len"},
                     "train");
    TrainConfig d;
    c.steps = j.value("steps", d.steps);
    c.batch = j.value("batch", d.batch);
    c.seq_len = j.value("seq_len", d.seq_len);
    c.lr = j.value("lr", d.lr);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.eps = j.value("eps", d.eps);
    c.mixture = j.value("mixture", d.mixture);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.seed = j.value("seed", d.seed);
    c.corpus_seq_len = j.value("corpus_seq_len", d.corpus_seq_len);
}

namespace {

constexpr double kNormEps = 1e-5;

template <class S>
struct LayerCache {
    Mat<S> X, Xh, Nx, P, Z, V, U, Low, Dl, Dt, Bm, Cm, Y, SZ, G;
    Vec<S> rinv;
    Mat<S> S_hist;  // (T + 1) x (N * D), row 0 is the initial zero state
    Mat<S> A_hist;  // T x (N * D)
};

template <class S>
Vec<S> rms_inverse(const Mat<S>& X) {
    const S d = static_cast<S>(X.cols());
    return ((X.rowwise().squaredNorm().array() / d) + static_cast<S>(kNormEps)).rsqrt().matrix();
}

template <class S>
Mat<S> rms_backward(const Mat<S>& dXh, const Mat<S>& Xh, const Vec<S>& rinv) {
    const S d = static_cast<S>(Xh.cols());
    const Vec<S> dots = (dXh.cwiseProduct(Xh)).rowwise().sum() / d;
    Mat<S> dX = dXh - (Xh.array().colwise() * dots.array()).matrix();
    return (dX.array().colwise() * rinv.array()).matrix();
}

template <class S>
Mat<S> sigmoid(const Mat<S>& x) {
    return (static_cast<S>(1) / (static_cast<S>(1) + (-x.array()).exp())).matrix();
}

/// Forward and reverse pass for one sequence from the zero state.
template <class S>
class SequenceBackprop {
public:
    /// Returns the summed NLL over positions 0..T-2. When `grads` is
    /// non-null, accumulates `weight` times the gradient of that sum.
    double run(const BasicParams<S>& p, std::span<const Token> tokens, BasicParams<S>* grads, S weight) {
        const ModelConfig& c = p.config;
        const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
        const Eigen::Index D = static_cast<Eigen::Index>(c.embed_dim);
        const Eigen::Index N = static_cast<Eigen::Index>(c.state_dim);
        const Eigen::Index W = static_cast<Eigen::Index>(c.conv_width);
        const std::size_t L = c.num_layers;
        for (Token t : tokens)
            if (t >= c.vocab_size) throw RangeError("token " + std::to_string(t) + " out of range");

        caches_.resize(L);
        Mat<S> X(T, D);
        for (Eigen::Index t = 0; t < T; ++t) X.row(t) = p.embedding.row(tokens[static_cast<std::size_t>(t)]);

        for (std::size_t l = 0; l < L; ++l) {
            const auto& lp = p.layers[l];
            auto& k = caches_[l];
            k.X = X;
            k.rinv = rms_inverse(X);
            k.Xh = (X.array().colwise() * k.rinv.array()).matrix();
            k.Nx = (k.Xh.array().rowwise() * lp.norm_scale.transpose().array()).matrix();
            k.P.noalias() = k.Nx * lp.in_proj.transpose();
            k.Z.noalias() = k.Nx * lp.gate_proj.transpose();
            k.V.resize(T, D);
            for (Eigen::Index t = 0; t < T; ++t) {
                k.V.row(t) = lp.conv_bias.transpose();
                for (Eigen::Index j = 0; j < W; ++j) {
                    const Eigen::Index src = t - (W - 1) + j;
                    if (src >= 0) k.V.row(t) += lp.conv_kernel.row(j).cwiseProduct(k.P.row(src));
                }
            }
            k.U = k.V.cwiseProduct(sigmoid(k.V));
            k.Low.noalias() = k.U * lp.delta_down.transpose();
            k.Dl.noalias() = k.Low * lp.delta_up.transpose();
            k.Dl.rowwise() += lp.delta_bias.transpose();
            k.Dt = (k.Dl.array().max(S(0)) + (-k.Dl.array().abs()).exp().log1p()).matrix();
            k.Bm.noalias() = k.U * lp.b_proj.transpose();
            k.Cm.noalias() = k.U * lp.c_proj.transpose();
            const Vec<S> rate = lp.a_log.array().exp().matrix();

            // Internal layout is N x D per step so the inner loops run over D.
            k.A_hist.resize(T, D * N);
            for (Eigen::Index t = 0; t < T; ++t) {
                S* a = k.A_hist.row(t).data();
                const S* dt = k.Dt.row(t).data();
                for (Eigen::Index n = 0; n < N; ++n) {
                    const S r = -rate[n];
#pragma omp simd
                    for (Eigen::Index d = 0; d < D; ++d) a[n * D + d] = dt[d] * r;
                }
            }
            k.A_hist.array() = k.A_hist.array().exp();

            k.S_hist.resize(T + 1, D * N);
            k.S_hist.row(0).setZero();
            k.Y.setZero(T, D);
            std::vector<S> drive(static_cast<std::size_t>(D));
            for (Eigen::Index t = 0; t < T; ++t) {
                const S* a = k.A_hist.row(t).data();
                const S* prev = k.S_hist.row(t).data();
                S* cur = k.S_hist.row(t + 1).data();
                S* y = k.Y.row(t).data();
                for (Eigen::Index d = 0; d < D; ++d) drive[d] = k.Dt(t, d) * k.U(t, d);
                for (Eigen::Index n = 0; n < N; ++n) {
                    const S bn = k.Bm(t, n);
                    const S cn = k.Cm(t, n);
                    const Eigen::Index o = n * D;
#pragma omp simd
                    for (Eigen::Index d = 0; d < D; ++d) {
                        const S v = a[o + d] * prev[o + d] + drive[d] * bn;
                        cur[o + d] = v;
                        y[d] += v * cn;
                    }
                }
            }
            k.SZ = k.Z.cwiseProduct(sigmoid(k.Z));
            k.G = k.Y.cwiseProduct(k.SZ);
            X.noalias() += k.G * lp.out_proj.transpose();
        }

        const Vec<S> rinv_f = rms_inverse(X);
        const Mat<S> Xh_f = (X.array().colwise() * rinv_f.array()).matrix();
        const Mat<S> Nf = (Xh_f.array().rowwise() * p.final_norm.transpose().array()).matrix();
        Mat<S> logits;
        logits.noalias() = Nf * p.embedding.transpose();

        double loss = 0.0;
        Mat<S> dlogits = Mat<S>::Zero(T, logits.cols());
        for (Eigen::Index t = 0; t + 1 < T; ++t) {
            const S m = logits.row(t).maxCoeff();
            const auto e = (logits.row(t).array() - m).exp();
            const S sum = e.sum();
            const Token next = tokens[static_cast<std::size_t>(t + 1)];
            loss += static_cast<double>(std::log(sum) + m - logits(t, next));
            if (grads != nullptr) {
                dlogits.row(t) = (e / sum * weight).matrix();
                dlogits(t, next) -= weight;
            }
        }
        if (grads == nullptr) return loss;

        BasicParams<S>& g = *grads;
        g.embedding.noalias() += dlogits.transpose() * Nf;
        Mat<S> dNf;
        dNf.noalias() = dlogits * p.embedding;
        g.final_norm += dNf.cwiseProduct(Xh_f).colwise().sum().transpose();
        Mat<S> dX = rms_backward<S>((dNf.array().rowwise() * p.final_norm.transpose().array()).matrix(), Xh_f, rinv_f);

        for (std::size_t li = L; li-- > 0;) {
            const auto& lp = p.layers[li];
            auto& gl = g.layers[li];
            auto& k = caches_[li];
            const Vec<S> rate = lp.a_log.array().exp().matrix();

            gl.out_proj.noalias() += dX.transpose() * k.G;
            Mat<S> dG;
            dG.noalias() = dX * lp.out_proj;
            const Mat<S> dY = dG.cwiseProduct(k.SZ);
            const Mat<S> sz = sigmoid(k.Z);
            const Mat<S> dZ = dG.cwiseProduct(k.Y).cwiseProduct(
                (sz.array() * (S(1) + k.Z.array() * (S(1) - sz.array()))).matrix());

            Mat<S> dDt(T, D), dU(T, D);
            Mat<S> dBm(T, N), dCm(T, N);
            Vec<S> drate = Vec<S>::Zero(N);
            std::vector<S> dS(static_cast<std::size_t>(D * N), S(0));
            std::vector<S> drive(static_cast<std::size_t>(D)), acc_drive(drive.size()), acc_dt(drive.size());
            for (Eigen::Index t = T; t-- > 0;) {
                const S* a = k.A_hist.row(t).data();
                const S* prev = k.S_hist.row(t).data();
                const S* cur = k.S_hist.row(t + 1).data();
                const S* dy = dY.row(t).data();
                const S* dt = k.Dt.row(t).data();
                for (Eigen::Index d = 0; d < D; ++d) {
                    drive[d] = dt[d] * k.U(t, d);
                    acc_drive[d] = 0;
                    acc_dt[d] = 0;
                }
                for (Eigen::Index n = 0; n < N; ++n) {
                    const S bn = k.Bm(t, n);
                    const S cn = k.Cm(t, n);
                    const S rn = rate[n];
                    const Eigen::Index o = n * D;
                    S* ds = dS.data() + o;
                    S sum_dc = 0, sum_db = 0, sum_dr = 0;
#pragma omp simd reduction(+ : sum_dc, sum_db, sum_dr)
                    for (Eigen::Index d = 0; d < D; ++d) {
                        const S g = ds[d] + dy[d] * cn;
                        sum_dc += dy[d] * cur[o + d];
                        acc_drive[d] += g * bn;
                        sum_db += g * drive[d];
                        const S dla = g * a[o + d] * prev[o + d];
                        acc_dt[d] -= dla * rn;
                        sum_dr -= dla * dt[d];
                        ds[d] = g * a[o + d];
                    }
                    dCm(t, n) = sum_dc;
                    dBm(t, n) = sum_db;
                    drate[n] += sum_dr;
                }
                for (Eigen::Index d = 0; d < D; ++d) {
                    dDt(t, d) = acc_dt[d] + acc_drive[d] * k.U(t, d);
                    dU(t, d) = acc_drive[d] * dt[d];
                }
            }
            gl.a_log += drate.cwiseProduct(rate);

            const Mat<S> dDl = dDt.cwiseProduct(sigmoid(k.Dl));
            gl.delta_bias += dDl.colwise().sum().transpose();
            gl.delta_up.noalias() += dDl.transpose() * k.Low;
            Mat<S> dLow;
            dLow.noalias() = dDl * lp.delta_up;
            gl.delta_down.noalias() += dLow.transpose() * k.U;
            dU.noalias() += dLow * lp.delta_down;
            gl.b_proj.noalias() += dBm.transpose() * k.U;
            dU.noalias() += dBm * lp.b_proj;
            gl.c_proj.noalias() += dCm.transpose() * k.U;
            dU.noalias() += dCm * lp.c_proj;

            const Mat<S> sv = sigmoid(k.V);
            const Mat<S> dV =
                dU.cwiseProduct((sv.array() * (S(1) + k.V.array() * (S(1) - sv.array()))).matrix());
            gl.conv_bias += dV.colwise().sum().transpose();
            Mat<S> dP = Mat<S>::Zero(T, D);
            for (Eigen::Index t = 0; t < T; ++t) {
                for (Eigen::Index j = 0; j < W; ++j) {
                    const Eigen::Index src = t - (W - 1) + j;
                    if (src < 0) continue;
                    gl.conv_kernel.row(j) += dV.row(t).cwiseProduct(k.P.row(src));
                    dP.row(src) += dV.row(t).cwiseProduct(lp.conv_kernel.row(j));
                }
            }
            gl.in_proj.noalias() += dP.transpose() * k.Nx;
            gl.gate_proj.noalias() += dZ.transpose() * k.Nx;
            Mat<S> dNx;
            dNx.noalias() = dP * lp.in_proj;
            dNx.noalias() += dZ * lp.gate_proj;
            gl.norm_scale += dNx.cwiseProduct(k.Xh).colwise().sum().transpose();
            dX += rms_backward<S>((dNx.array().rowwise() * lp.norm_scale.transpose().array()).matrix(), k.Xh,
                                  k.rinv);
        }
        for (Eigen::Index t = 0; t < T; ++t) g.embedding.row(tokens[static_cast<std::size_t>(t)]) += dX.row(t);
        return loss;
    }

private:
    std::vector<LayerCache<S>> caches_;
};

template <class S>
void check_batch(std::span<const TokenSeq> batch) {
    if (batch.empty()) throw RangeError("empty batch");
    const std::size_t len = batch.front().size();
    if (len < 2) throw RangeError("batch rows need at least two tokens");
    for (const auto& row : batch)
        if (row.size() != len) throw RangeError("batch rows must share one length");
}

}  // namespace

template <class Scalar>
double compute_gradients(const BasicParams<Scalar>& params, std::span<const TokenSeq> batch,
                         BasicParams<Scalar>& grads) {
    check_batch<Scalar>(batch);
    grads = zero_params<Scalar>(params.config);
    const double positions = static_cast<double>(batch.size() * (batch.front().size() - 1));
    const Scalar weight = static_cast<Scalar>(1.0 / positions);
    thread_local SequenceBackprop<Scalar> engine;
    double total = 0.0;
    for (const auto& row : batch) total += engine.run(params, row, &grads, weight);
    const double loss = total / positions;
    if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
    return loss;
}

template <class Scalar>
double batch_loss(const BasicParams<Scalar>& params, std::span<const TokenSeq> batch) {
    check_batch<Scalar>(batch);
    const double positions = static_cast<double>(batch.size() * (batch.front().size() - 1));
    thread_local SequenceBackprop<Scalar> engine;
    double total = 0.0;
    for (const auto& row : batch) total += engine.run(params, row, nullptr, Scalar(0));
    return total / positions;
}

template <class Scalar>
double global_norm(const BasicParams<Scalar>& grads) {
    double sq = 0.0;
    for_each_tensor(grads, [&](const std::string&, const auto& t) {
        sq += t.template cast<double>().squaredNorm();
    });
    return std::sqrt(sq);
}

template double compute_gradients<float>(const BasicParams<float>&, std::span<const TokenSeq>, BasicParams<float>&);
template double compute_gradients<double>(const BasicParams<double>&, std::span<const TokenSeq>,
                                          BasicParams<double>&);
template double batch_loss<float>(const BasicParams<float>&, std::span<const TokenSeq>);
template double batch_loss<double>(const BasicParams<double>&, std::span<const TokenSeq>);
template double global_norm<float>(const BasicParams<float>&);
template double global_norm<double>(const BasicParams<double>&);

AdamOptimizer::AdamOptimizer(const ModelParams& like, double lr, double beta1, double beta2, double eps)
    : m_(zero_params<float>(like.config)),
      v_(zero_params<float>(like.config)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float step = static_cast<float>(lr_ / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(eps_);

    // Walk the five parameter sets in lockstep through the canonical order.
    std::vector<float*> pm, mm, vm;
    std::vector<const float*> gm;
    std::vector<Eigen::Index> sizes;
    for_each_tensor(params, [&](const std::string&, auto& t) { pm.push_back(t.data()); sizes.push_back(t.size()); });
    for_each_tensor(grads, [&](const std::string&, const auto& t) { gm.push_back(t.data()); });
    for_each_tensor(m_, [&](const std::string&, auto& t) { mm.push_back(t.data()); });
    for_each_tensor(v_, [&](const std::string&, auto& t) { vm.push_back(t.data()); });
    for (std::size_t i = 0; i < pm.size(); ++i) {
        for (Eigen::Index j = 0; j < sizes[i]; ++j) {
            const float gv = gm[i][j];
            mm[i][j] = b1 * mm[i][j] + (1.0f - b1) * gv;
            vm[i][j] = b2 * vm[i][j] + (1.0f - b2) * gv * gv;
            pm[i][j] -= step * mm[i][j] / (std::sqrt(vm[i][j] * inv_c2) + eps);
        }
    }
}

TrainingStreams::TrainingStreams(std::vector<TaskSpec> tasks, CorpusSource corpus)
    : tasks_(std::move(tasks)), corpus_(std::move(corpus)) {
    if (tasks_.empty()) throw ConfigError("training needs at least one task");
    if (corpus_.kind == CorpusKind::Synthetic) {
        chain_ = std::make_unique<SyntheticChain>(corpus_.family_seed);
    } else {
        text_ = read_text_bytes(corpus_.path);
        if (text_.empty()) throw RangeError("text corpus " + corpus_.path + " is empty");
    }
}

TokenSeq TrainingStreams::icl_row(std::size_t length, Rng& rng) const {
    const TaskSpec& task = tasks_[rng.below(tasks_.size())];
    TokenSeq row;
    row.reserve(length + 4);
    std::vector<std::size_t> ids(task.size());
    while (row.size() < length) {
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        rng.shuffle(ids);
        const Demonstration d = format_demonstration(task, ids);
        row.insert(row.end(), d.tokens.begin(), d.tokens.end());
    }
    row.resize(length);
    return row;
}

TokenSeq TrainingStreams::corpus_row(std::size_t length, Rng& rng) const {
    if (chain_) return chain_->sample(length, rng);
    if (text_.size() < length) throw RangeError("text corpus shorter than one training row");
    const std::size_t off = rng.below(text_.size() - length + 1);
    return TokenSeq(text_.begin() + static_cast<std::ptrdiff_t>(off),
                    text_.begin() + static_cast<std::ptrdiff_t>(off + length));
}

TrainResult train_from(ModelParams params, const TrainConfig& tc, const TrainingStreams& streams,
                       const StepCallback& on_step) {
    tc.validate();
    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    AdamOptimizer opt(params, tc.lr, tc.beta1, tc.beta2, tc.eps);
    ModelParams grads;
    const std::size_t corpus_rows = std::max<std::size_t>(1, tc.batch * tc.seq_len / tc.corpus_seq_len);
    double last_finite = std::numeric_limits<double>::quiet_NaN();
    std::vector<TokenSeq> rows;

    for (std::size_t step = 0; step < tc.steps; ++step) {
        Rng rng(derive_seed(tc.seed, 0x73746570ULL, step));
        const bool icl = rng.uniform() < tc.mixture;
        rows.clear();
        if (icl) {
            for (std::size_t b = 0; b < tc.batch; ++b) rows.push_back(streams.icl_row(tc.seq_len, rng));
        } else {
            for (std::size_t b = 0; b < corpus_rows; ++b) rows.push_back(streams.corpus_row(tc.corpus_seq_len, rng));
        }
        double loss;
        try {
            loss = compute_gradients(params, std::span<const TokenSeq>(rows), grads);
        } catch (const NumericError&) {
            throw NumericError("training diverged at step " + std::to_string(step) +
                               " (last finite loss " + std::to_string(last_finite) + ")");
        }
        const double norm = global_norm(grads);
        if (!std::isfinite(norm)) {
            throw NumericError("non-finite gradient norm at step " + std::to_string(step));
        }
        if (norm > tc.clip_norm) {
            const float scale = static_cast<float>(tc.clip_norm / norm);
            for_each_tensor(grads, [&](const std::string&, auto& t) { t *= scale; });
        }
        opt.step(params, grads);
        last_finite = loss;
        StepMetrics m{step, loss, tc.lr, icl};
        result.log.push_back(m);
        if (on_step) on_step(m);
    }
    result.params = std::move(params);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

TrainResult train(const ModelConfig& config, const TrainConfig& tconfig, const std::vector<TaskSpec>& tasks,
                  const CorpusSource& corpus, const StepCallback& on_step) {
    TrainingStreams streams(tasks, corpus);
    return train_from(init_model(config, tconfig.seed), tconfig, streams, on_step);
}

void write_metrics_jsonl(const std::vector<StepMetrics>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics log " + path);
    for (const auto& m : log) {
        out << nlohmann::json{{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}}.dump() << '\n';
    }
    if (!out) throw IoError("failed writing metrics log " + path);
}

}  // namespace statesoup
