#include "hspan/hyperkite.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace hspan {

using nn::NodeRef;
using nlohmann::json;

double receptive_field(int layer_index, int kernel) {
    if (layer_index < 1 || kernel < 1)
        throw DimensionError("receptive_field: layer_index and kernel must be >= 1");
    return std::pow(0.25, layer_index - 1) * kernel * kernel;
}

HyperKiteNet::HyperKiteNet(const HyperKiteConfig& cfg, int bands, std::mt19937& rng)
    : config(cfg), in_bands(bands) {
    if (bands < 1) throw DimensionError("HyperKiteNet: bands must be >= 1");
    if (config.widths[6] == 0) config.widths[6] = bands;
    if (config.widths[6] != bands)
        throw DimensionError("HyperKiteNet: widths[6] " + std::to_string(config.widths[6]) +
                             " != band count " + std::to_string(bands));
    for (int w : config.widths)
        if (w < 1) throw DimensionError("HyperKiteNet: widths must be >= 1");

    // channel flow: in -> w0 | w0 -> w1 -> w2 -> w3 | cat halves on the way
    // back so each decoder conv sees exactly twice its skip partner's width
    const std::array<int, 7> cin{bands + 1,
                                 config.widths[0],
                                 config.widths[1],
                                 config.widths[2],
                                 config.widths[3] + config.widths[2],
                                 config.widths[4] + config.widths[1],
                                 config.widths[5] + config.widths[0]};
    for (int i = 0; i < 7; ++i) {
        const int k = config.kernels[static_cast<size_t>(i)];
        const int fan_in = cin[static_cast<size_t>(i)] * k * k;
        layers.push_back({nn::param(fan_in_uniform(
                              {config.widths[static_cast<size_t>(i)], cin[static_cast<size_t>(i)], k, k},
                              fan_in, rng)),
                          nn::param(fan_in_uniform({config.widths[static_cast<size_t>(i)]}, fan_in, rng)),
                          nn::BatchNorm(config.widths[static_cast<size_t>(i)])});
    }
    // residual-output init: start the last normalization at a small scale so
    // the predicted residual begins near zero instead of O(1)
    layers.back().bn.gamma->val.fill(0.1f);
}

NodeRef HyperKiteNet::forward_graph(const NodeRef& x_in, bool training) {
    if (x_in->val.dim(1) != in_bands + 1)
        throw DimensionError("HyperKiteNet: input channels " + std::to_string(x_in->val.dim(1)) +
                             " != bands+1 = " + std::to_string(in_bands + 1));
    const int H = x_in->val.dim(2), W = x_in->val.dim(3);
    auto block = [&](int i, NodeRef x) {
        auto& L = layers[static_cast<size_t>(i)];
        const int k = config.kernels[static_cast<size_t>(i)];
        return nn::leaky_relu(L.bn(nn::conv2d(std::move(x), L.w, L.b, 1, (k - 1) / 2), training),
                              config.leaky_slope);
    };

    NodeRef f1 = block(0, x_in);                                          // 1x
    NodeRef f2 = block(1, nn::bilinear_resize(f1, 2 * H, 2 * W));          // 2x
    NodeRef f4 = block(2, nn::bilinear_resize(f2, 4 * H, 4 * W));          // 4x
    NodeRef f8 = block(3, nn::bilinear_resize(f4, 8 * H, 8 * W));          // 8x
    NodeRef g4 = block(4, nn::concat_channels(nn::bilinear_resize(f8, 4 * H, 4 * W), f4));
    NodeRef g2 = block(5, nn::concat_channels(nn::bilinear_resize(g4, 2 * H, 2 * W), f2));
    NodeRef g1 = nn::bilinear_resize(g2, H, W);
    return block(6, nn::concat_channels(g1, f1));
}

static Tensor pack_input(const HSICube& x_dip, const PANImage& p) {
    if (p.height != x_dip.height || p.width != x_dip.width)
        throw DimensionError("HyperKite: PAN dims must match x_dip spatial dims");
    Tensor t({1, x_dip.bands + 1, x_dip.height, x_dip.width});
    std::memcpy(t.data(), x_dip.data.data(), x_dip.data.size() * sizeof(float));
    std::memcpy(t.data() + x_dip.size(), p.data.data(), p.data.size() * sizeof(float));
    return t;
}

HSICube HyperKiteNet::forward(const HSICube& x_dip, const PANImage& p) {
    x_dip.check_valid();
    if (x_dip.bands != in_bands)
        throw DimensionError("HyperKiteNet: cube has " + std::to_string(x_dip.bands) +
                             " bands, net expects " + std::to_string(in_bands));
    auto out = forward_graph(nn::constant(pack_input(x_dip, p)), false);
    HSICube res(in_bands, x_dip.height, x_dip.width);
    res.data = out->val.v;
    res.value_range = {-1.0, 1.0};  // residuals are signed
    return res;
}

std::vector<NodeRef> HyperKiteNet::params() const {
    std::vector<NodeRef> ps;
    for (const auto& L : layers) {
        ps.push_back(L.w);
        ps.push_back(L.b);
        ps.push_back(L.bn.gamma);
        ps.push_back(L.bn.beta);
    }
    return ps;
}

std::vector<double> train(HyperKiteNet& net, const std::vector<HyperKiteTrainItem>& samples) {
    if (samples.empty()) throw DataError("hyperkite::train: needs at least one sample");
    const auto& cfg = net.config;
    const int l = net.in_bands;
    const int H = samples[0].x_dip.height, W = samples[0].x_dip.width;
    for (const auto& s : samples) {
        if (s.x_dip.bands != l || s.reference.bands != l)
            throw DimensionError("hyperkite::train: band count mismatch in training set");
        if (s.x_dip.height != H || s.x_dip.width != W || s.reference.height != H ||
            s.reference.width != W || s.pan.height != H || s.pan.width != W)
            throw DimensionError("hyperkite::train: all samples must share spatial dims");
    }

    const int n = static_cast<int>(samples.size());
    const int64_t plane = static_cast<int64_t>(H) * W;
    auto make_batch = [&](const std::vector<int>& idx, int b0, int b1, Tensor& x, Tensor& target) {
        const int nb = b1 - b0;
        x = Tensor({nb, l + 1, H, W});
        target = Tensor({nb, l, H, W});
        for (int j = 0; j < nb; ++j) {
            const auto& s = samples[static_cast<size_t>(idx[static_cast<size_t>(b0 + j)])];
            float* xd = x.data() + static_cast<int64_t>(j) * (l + 1) * plane;
            std::memcpy(xd, s.x_dip.data.data(), s.x_dip.data.size() * sizeof(float));
            std::memcpy(xd + static_cast<int64_t>(l) * plane, s.pan.data.data(),
                        s.pan.data.size() * sizeof(float));
            float* td = target.data() + static_cast<int64_t>(j) * l * plane;
            for (int64_t i = 0; i < static_cast<int64_t>(l) * plane; ++i)
                td[i] = s.reference.data[static_cast<size_t>(i)] - s.x_dip.data[static_cast<size_t>(i)];
        }
    };

    std::mt19937 rng(cfg.seed);
    nn::Adam adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    adam.beta1 = cfg.adam_beta1;
    adam.beta2 = cfg.adam_beta2;
    const auto params = net.params();

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> history;
    history.reserve(static_cast<size_t>(cfg.epochs) + 1);

    // pre-update loss over the whole set (batch statistics, no steps)
    {
        double acc = 0.0;
        for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
            const int b1 = std::min(n, b0 + cfg.batch_size);
            Tensor x, target;
            make_batch(order, b0, b1, x, target);
            auto out = net.forward_graph(nn::constant(std::move(x)), true);
            acc += nn::scalar_value(nn::mean_abs_error(out, target)) * (b1 - b0);
        }
        history.push_back(acc / n);
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double acc = 0.0;
        for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
            const int b1 = std::min(n, b0 + cfg.batch_size);
            Tensor x, target;
            make_batch(order, b0, b1, x, target);
            auto out = net.forward_graph(nn::constant(std::move(x)), true);
            auto loss = nn::mean_abs_error(out, target);
            const double lv = nn::scalar_value(loss);
            if (!std::isfinite(lv))
                throw NumericError("hyperkite::train: non-finite loss at epoch " +
                                   std::to_string(epoch));
            acc += lv * (b1 - b0);
            nn::backward(loss);
            adam.step(params);
        }
        history.push_back(acc / n);
    }

    // pin the inference statistics to the final weights: one pass over the
    // training set in cumulative-average mode, no optimizer steps
    std::iota(order.begin(), order.end(), 0);
    for (auto& L : net.layers) L.bn.begin_calibration();
    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
        const int b1 = std::min(n, b0 + cfg.batch_size);
        Tensor x, target;
        make_batch(order, b0, b1, x, target);
        net.forward_graph(nn::constant(std::move(x)), true);
    }
    for (auto& L : net.layers) L.bn.calib_count = -1;
    return history;
}

HSICube fuse(const HSICube& x_dip, const HSICube& x_res, bool clamp) {
    if (x_dip.bands != x_res.bands || x_dip.height != x_res.height || x_dip.width != x_res.width)
        throw DimensionError("fuse: dims mismatch between x_dip and x_res");
    HSICube out(x_dip.bands, x_dip.height, x_dip.width);
    out.value_range = x_dip.value_range;
    const float lo = static_cast<float>(out.value_range[0]);
    const float hi = static_cast<float>(out.value_range[1]);
    for (int64_t i = 0; i < out.size(); ++i) {
        float v = x_dip.data[static_cast<size_t>(i)] + x_res.data[static_cast<size_t>(i)];
        if (clamp) v = std::clamp(v, lo, hi);
        out.data[static_cast<size_t>(i)] = v;
    }
    return out;
}

// --------------------------------------------------------------------------
// checkpoint
// --------------------------------------------------------------------------

static constexpr char kMagic[6] = {'H', 'K', 'P', 'T', '1', '\n'};

void save_checkpoint(const HyperKiteNet& net, const std::filesystem::path& path) {
    json header;
    header["config"] = {{"widths", net.config.widths},
                        {"kernels", net.config.kernels},
                        {"epochs", net.config.epochs},
                        {"lr", net.config.lr},
                        {"weight_decay", net.config.weight_decay},
                        {"adam_beta1", net.config.adam_beta1},
                        {"adam_beta2", net.config.adam_beta2},
                        {"batch_size", net.config.batch_size},
                        {"leaky_slope", net.config.leaky_slope},
                        {"seed", net.config.seed}};
    header["bands"] = net.in_bands;

    std::vector<const Tensor*> tensors;
    json index = json::array();
    auto add = [&](const std::string& name, const Tensor& t) {
        index.push_back({{"name", name}, {"shape", t.shape}});
        tensors.push_back(&t);
    };
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& L = net.layers[i];
        const std::string p = "layer" + std::to_string(i);
        add(p + ".w", L.w->val);
        add(p + ".b", L.b->val);
        add(p + ".bn.gamma", L.bn.gamma->val);
        add(p + ".bn.beta", L.bn.beta->val);
        add(p + ".bn.running_mean", L.bn.running_mean);
        add(p + ".bn.running_var", L.bn.running_var);
    }
    header["tensors"] = index;
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_checkpoint: cannot open " + path.string());
    os.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = hs.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : tensors)
        os.write(reinterpret_cast<const char*>(t->v.data()),
                 static_cast<std::streamsize>(t->v.size() * sizeof(float)));
    if (!os) throw IoError("save_checkpoint: short write to " + path.string());
}

HyperKiteNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path.string());
    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("load_checkpoint: bad magic in " + path.string());
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!is || hlen == 0 || hlen > (64ull << 20))
        throw IoError("load_checkpoint: corrupt header length in " + path.string());
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw IoError("load_checkpoint: truncated header");

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw IoError("load_checkpoint: corrupt header: " + std::string(e.what()));
    }

    HyperKiteConfig cfg;
    const auto& jc = header.at("config");
    cfg.widths = jc.at("widths").get<std::array<int, 7>>();
    cfg.kernels = jc.at("kernels").get<std::array<int, 7>>();
    cfg.epochs = jc.at("epochs").get<int>();
    cfg.lr = jc.at("lr").get<double>();
    cfg.weight_decay = jc.at("weight_decay").get<double>();
    cfg.adam_beta1 = jc.at("adam_beta1").get<double>();
    cfg.adam_beta2 = jc.at("adam_beta2").get<double>();
    cfg.batch_size = jc.at("batch_size").get<int>();
    cfg.leaky_slope = jc.at("leaky_slope").get<float>();
    cfg.seed = jc.at("seed").get<uint32_t>();
    const int bands = header.at("bands").get<int>();

    std::mt19937 rng(cfg.seed);
    HyperKiteNet net(cfg, bands, rng);

    std::vector<Tensor*> tensors;
    for (auto& L : net.layers) {
        tensors.push_back(&L.w->val);
        tensors.push_back(&L.b->val);
        tensors.push_back(&L.bn.gamma->val);
        tensors.push_back(&L.bn.beta->val);
        tensors.push_back(&L.bn.running_mean);
        tensors.push_back(&L.bn.running_var);
    }
    const auto& index = header.at("tensors");
    if (index.size() != tensors.size())
        throw IoError("load_checkpoint: tensor count mismatch");
    for (size_t i = 0; i < tensors.size(); ++i) {
        const auto shape = index[i].at("shape").get<std::vector<int>>();
        if (shape != tensors[i]->shape)
            throw IoError("load_checkpoint: shape mismatch for " +
                          index[i].at("name").get<std::string>());
        is.read(reinterpret_cast<char*>(tensors[i]->v.data()),
                static_cast<std::streamsize>(tensors[i]->v.size() * sizeof(float)));
        if (!is) throw IoError("load_checkpoint: truncated payload");
    }
    return net;
}

}  // namespace hspan
