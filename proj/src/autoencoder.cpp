#include "ltf/autoencoder.hpp"

#include <algorithm>
#include <numeric>

#include "ltf/classifier.hpp"
#include "ltf/error.hpp"

namespace ltf {

Autoencoder::Autoencoder(const AutoencoderConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
    Rng rng(derive_seed(seed, "autoencoder"));
    std::vector<std::size_t> enc_dims{cfg.d_x};
    for (std::size_t i = 0; i < cfg.layers; ++i) enc_dims.push_back(cfg.hidden);
    enc_dims.push_back(cfg.d_z);
    encoder_ = Mlp(enc_dims, rng);

    std::vector<std::size_t> dec_dims{cfg.d_z};
    for (std::size_t i = 0; i < cfg.layers; ++i) dec_dims.push_back(cfg.hidden);
    dec_dims.push_back(cfg.d_x);
    decoder_ = Mlp(dec_dims, rng);
}

void Autoencoder::identity_init() {
    if (cfg_.layers != 0 || cfg_.d_x != cfg_.d_z) {
        throw ContractError("identity init needs layers == 0 and d_z == d_x");
    }
    encoder_.layers[0].identity_init();
    decoder_.layers[0].identity_init();
}

std::vector<Tensor> Autoencoder::params() const {
    auto out = encoder_.params();
    auto dp = decoder_.params();
    out.insert(out.end(), dp.begin(), dp.end());
    return out;
}

double train_autoencoder(Autoencoder& a, const std::vector<LabeledPoint>& data,
                         const AeTrainConfig& cfg, std::uint64_t seed) {
    if (data.empty()) throw ContractError("train_autoencoder: empty dataset");
    const std::size_t n = data.size();
    const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;

    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.lr;
    ocfg.cosine_decay = true;
    ocfg.total_steps = cfg.epochs * steps_per_epoch;
    Optimizer opt(a.params(), ocfg);

    Rng order_rng(derive_seed(seed, "autoencoder_batches"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double last_epoch_mse = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_mse = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const std::size_t bsz = std::min(cfg.batch, n - start);
            std::vector<LabeledPoint> batch(bsz);
            for (std::size_t i = 0; i < bsz; ++i) batch[i] = data[order[start + i]];
            const Tensor x = points_matrix(batch);

            Tape tape;
            TapeScope scope(tape);
            const Tensor loss = mean_all(square(sub(a.decode(a.encode(x)), x)));
            tape.backward(loss);
            opt.step();
            opt.zero_grad();
            epoch_mse += loss.item() * static_cast<double>(bsz);
        }
        last_epoch_mse = epoch_mse / static_cast<double>(n);
    }
    return last_epoch_mse;
}

}  // namespace ltf
