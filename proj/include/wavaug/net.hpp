#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavaug {

// Minimal dense tensor: shape plus a contiguous row-major double buffer.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    const double& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// A batch of images (N x H x W x C, values in [0,1]) with integer labels.
struct Batch {
    Tensor images;
    std::vector<int> labels;

    std::size_t count() const { return labels.size(); }
};

enum class Path { clean, adv };
enum class Mode { train, eval };
enum class NormKind { batch_norm, layer_norm };

struct ConvLayer {
    std::size_t in_ch = 0, out_ch = 0;   // 3x3 kernels, stride 1, pad 1
    Tensor weight;                        // [out_ch, in_ch, 3, 3]
    Tensor bias;                          // [out_ch]
};

struct DenseLayer {
    std::size_t in_f = 0, out_f = 0;
    Tensor weight;                        // [out_f, in_f]
    Tensor bias;                          // [out_f]
};

// Affine parameters are shared between the clean and adversarial paths;
// only the running statistics (NormStats) are duplicated per path.
struct NormLayer {
    std::size_t channels = 0;
    Tensor gamma;                         // [channels]
    Tensor beta;                          // [channels]
};

struct NormStats {
    Tensor mean;                          // [channels]
    Tensor var;                           // [channels]
};

// Fixed desk classifier: three conv-norm-relu-maxpool blocks followed by a
// two-layer dense head. Input is input_hw x input_hw x in_channels; the head
// sees channels[2] * (input_hw/8)^2 features.
struct ModelState {
    std::vector<ConvLayer> convs;         // 3 blocks
    std::vector<NormLayer> norms;         // one per conv block
    DenseLayer fc1, fc2;
    std::vector<NormStats> stats_clean;   // one per norm layer
    std::vector<NormStats> stats_adv;
    NormKind norm_kind = NormKind::batch_norm;
    std::uint64_t rng_seed = 0;
    std::size_t input_hw = 32;
    std::size_t in_channels = 1;
    std::size_t num_classes = 4;

    std::size_t feature_width() const { return fc1.out_f; }
};

// Gradients congruent with the trainable parameters of ModelState.
struct ModelGrads {
    std::vector<Tensor> conv_w, conv_b;
    std::vector<Tensor> norm_gamma, norm_beta;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

// Momentum buffers for SGD; same layout as ModelGrads, owned by the caller
// and carried across steps.
struct SgdState {
    ModelGrads velocity;
    bool initialized = false;
};

ModelState make_model(std::uint64_t seed,
                      NormKind kind = NormKind::batch_norm,
                      std::size_t input_hw = 32,
                      std::size_t in_channels = 1,
                      std::size_t num_classes = 4);

// Logits for a batch: N x num_classes. `path` selects which running
// statistics are read (and, in train mode with batch norm, updated).
Tensor forward(ModelState& model, const Batch& batch, Path path, Mode mode);

// Mean cross-entropy over the batch.
double ce_loss(const Tensor& logits, const std::vector<int>& labels);

// Gradients of the mean cross-entropy loss for every parameter; if
// input_grad is non-null it receives d(loss)/d(images) with the batch's
// image shape. Eval mode freezes normalization statistics (used by attacks).
// loss_out / logits_out expose the forward pass already paid for.
ModelGrads backward(ModelState& model, const Batch& batch, Path path,
                    Tensor* input_grad = nullptr, Mode mode = Mode::train,
                    double* loss_out = nullptr, Tensor* logits_out = nullptr);

// SGD with momentum: v = mu * v + (g + wd * w); w -= lr * v.
void sgd_step(ModelState& model, const ModelGrads& grads, double lr,
              double momentum, double weight_decay, SgdState& state);

// Penultimate activations (post-ReLU dense hidden layer), N x feature_width.
Tensor features(ModelState& model, const Batch& batch, Path path);

// Post-pool activations of every conv block (eval mode), one tensor per
// block, each N x C x H x W. Feeds the perceptual-distance proxy.
std::vector<Tensor> layer_features(ModelState& model, const Batch& batch, Path path);

// Zero-filled gradient set congruent with the model.
ModelGrads zero_grads(const ModelState& model);

// Copies the clean-path running statistics over the adversarial-path ones.
// Training modes without a live auxiliary path call this before saving so
// that adv-path evaluation works on any checkpoint.
void mirror_clean_stats(ModelState& model);

// Contiguous sub-batch [begin, begin + count).
Batch slice_batch(const Batch& batch, std::size_t begin, std::size_t count);

}  // namespace wavaug
