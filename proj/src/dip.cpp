#include "hspan/dip.hpp"

#include "hspan/resample.hpp"

#include <cmath>

namespace hspan {

using nn::NodeRef;

UpsampleMethod parse_upsample_method(const std::string& name) {
    if (name == "dip-qss") return UpsampleMethod::DipQss;
    if (name == "dip-spectral") return UpsampleMethod::DipSpectral;
    if (name == "nearest") return UpsampleMethod::Nearest;
    if (name == "bicubic") return UpsampleMethod::Bicubic;
    throw DataError("unknown upsample method '" + name + "'");
}

static Tensor cube_to_tensor(const HSICube& c) {
    Tensor t({1, c.bands, c.height, c.width});
    t.v = c.data;
    return t;
}

static Tensor pan_to_tensor(const PANImage& p) {
    Tensor t({1, 1, p.height, p.width});
    t.v = p.data;
    return t;
}

static HSICube tensor_to_cube(const Tensor& t) {
    HSICube c(t.dim(1), t.dim(2), t.dim(3));
    c.data = t.v;
    return c;
}

DipGenerator::DipGenerator(const DIPConfig& cfg, int out_bands, int in_h, int in_w,
                           std::mt19937& rng)
    : levels(cfg.levels), slope(cfg.leaky_slope) {
    const int div = 1 << cfg.levels;
    if (in_h % div != 0 || in_w % div != 0)
        throw DimensionError("DipGenerator: noise dims (" + std::to_string(in_h) + "," +
                             std::to_string(in_w) + ") not divisible by " + std::to_string(div));

    auto make_block = [&](int cin, int cout, int k) {
        const int fan_in = cin * k * k;
        Block blk{nn::param(fan_in_uniform({cout, cin, k, k}, fan_in, rng)),
                  nn::param(fan_in_uniform({cout}, fan_in, rng)), nn::BatchNorm(cout)};
        return blk;
    };

    int cin = cfg.noise_channels;
    for (int i = 0; i < cfg.levels; ++i) {
        down.push_back(make_block(cin, cfg.down_width, cfg.down_kernel));
        skip.push_back(make_block(cin, cfg.skip_width, cfg.skip_kernel));
        cin = cfg.down_width;
    }
    for (int i = 0; i < cfg.levels; ++i)
        up.push_back(make_block(cfg.down_width + cfg.skip_width, cfg.down_width, cfg.down_kernel));
    head = make_block(cfg.down_width, out_bands, 1);
}

NodeRef DipGenerator::forward(const NodeRef& z) {
    const bool training = true;  // per-image optimization always uses batch stats
    const int kd = down[0].w->val.dim(2);
    const int ks = skip[0].w->val.dim(2);

    std::vector<NodeRef> skips;
    NodeRef x = z;
    for (int i = 0; i < levels; ++i) {
        auto& sk_blk = skip[static_cast<size_t>(i)];
        skips.push_back(nn::leaky_relu(
            sk_blk.bn(nn::conv2d(x, sk_blk.w, sk_blk.b, 1, (ks - 1) / 2), training), slope));
        auto& dn_blk = down[static_cast<size_t>(i)];
        x = nn::leaky_relu(
            dn_blk.bn(nn::conv2d(x, dn_blk.w, dn_blk.b, 2, (kd - 1) / 2), training), slope);
    }
    for (int i = levels - 1; i >= 0; --i) {
        const NodeRef& sk = skips[static_cast<size_t>(i)];
        x = nn::bilinear_resize(x, sk->val.dim(2), sk->val.dim(3));
        x = nn::concat_channels(x, sk);
        auto& up_blk = up[static_cast<size_t>(i)];
        x = nn::leaky_relu(
            up_blk.bn(nn::conv2d(x, up_blk.w, up_blk.b, 1, (kd - 1) / 2), training), slope);
    }
    x = nn::conv2d(x, head.w, head.b, 1, 0);
    return nn::sigmoid(x);
}

std::vector<NodeRef> DipGenerator::params() const {
    std::vector<NodeRef> ps;
    auto push = [&](const Block& b) {
        ps.push_back(b.w);
        ps.push_back(b.b);
        ps.push_back(b.bn.gamma);
        ps.push_back(b.bn.beta);
    };
    for (const auto& b : down) push(b);
    for (const auto& b : skip) push(b);
    for (const auto& b : up) push(b);
    push(head);
    return ps;
}

DipGenerator build_generator(const DIPConfig& config, int out_bands, int in_h, int in_w,
                             std::mt19937& rng) {
    return DipGenerator(config, out_bands, in_h, in_w, rng);
}

double spectral_energy(const HSICube& x_dip, const HSICube& y, int beta, nn::Downsampler mode) {
    if (x_dip.bands != y.bands)
        throw DimensionError("spectral_energy: band axis mismatch");
    if (x_dip.height != beta * y.height || x_dip.width != beta * y.width)
        throw DimensionError("spectral_energy: x_dip dims must be beta x y dims");
    auto x = nn::constant(cube_to_tensor(x_dip));
    auto e = nn::mean_abs_error(nn::downsample(x, beta, mode), cube_to_tensor(y));
    return nn::scalar_value(e);
}

QssBreakdown qss_energy(const HSICube& x_dip, const HSICube& y, const PANImage& p,
                        const SRFParams& srf, double lambda, int beta, nn::Downsampler mode) {
    if (p.height != x_dip.height || p.width != x_dip.width)
        throw DimensionError("qss_energy: pan dims must match x_dip spatial dims");
    if (lambda < 0.0) throw DataError("qss_energy: lambda must be >= 0");
    QssBreakdown b{};
    b.spectral = spectral_energy(x_dip, y, beta, mode);
    SrfHead srf_head(srf, false);
    auto x = nn::constant(cube_to_tensor(x_dip));
    b.spatial = nn::scalar_value(nn::mean_abs_error(srf_head.predicted_pan(x), pan_to_tensor(p)));
    b.total = b.spectral + lambda * b.spatial;
    return b;
}

std::pair<HSICube, DIPState> optimize_dip(const FusionSample& sample, const DIPConfig& config,
                                          UpsampleMethod method) {
    validate_sample(sample);
    if (method == UpsampleMethod::Nearest || method == UpsampleMethod::Bicubic)
        throw DataError("optimize_dip: interpolation baselines go through baseline_upsample");
    if (config.iterations < 1) throw DataError("optimize_dip: iterations must be >= 1");

    const int l = sample.lr_hsi.bands;
    const int oh = sample.beta * sample.lr_hsi.height;
    const int ow = sample.beta * sample.lr_hsi.width;

    std::mt19937 rng(config.seed);
    // fixed draw order: z, generator weights, SRF weights
    Tensor z_noise = uniform_tensor({1, config.noise_channels, oh, ow},
                                    static_cast<float>(config.noise_lo),
                                    static_cast<float>(config.noise_hi), rng);
    DipGenerator gen(config, l, oh, ow, rng);
    const int bdim = config.srf_bottleneck > 0 ? config.srf_bottleneck
                                               : SRFParams::default_bottleneck(l);
    SRFParams srf0 = SRFParams::init(l, bdim, rng, config.srf_activation);
    const bool srf_trainable = method == UpsampleMethod::DipQss && !config.freeze_srf;
    SrfHead srf_head(srf0, srf_trainable);

    auto z = nn::constant(z_noise);
    const Tensor y_t = cube_to_tensor(sample.lr_hsi);
    const Tensor p_t = pan_to_tensor(sample.pan);

    std::vector<NodeRef> params = gen.params();
    for (const auto& p : srf_head.params()) params.push_back(p);

    nn::Adam adam;
    adam.lr = config.lr;
    adam.weight_decay = config.weight_decay;
    adam.beta1 = config.adam_beta1;
    adam.beta2 = config.adam_beta2;

    DIPState state;
    state.z = z_noise;
    state.z_hash = tensor_hash(z_noise);
    state.energy_trace.reserve(static_cast<size_t>(config.iterations));

    const bool spatial_in_loss = method == UpsampleMethod::DipQss && config.lambda > 0.0;
    NodeRef x;
    for (int it = 0; it < config.iterations; ++it) {
        x = gen.forward(z);
        auto spec = nn::mean_abs_error(nn::downsample(x, sample.beta, config.downsampler), y_t);

        // the spatial term rides the graph only when it feeds the objective;
        // otherwise it is evaluated on a detached copy for the trace
        double spat_val;
        NodeRef total;
        if (spatial_in_loss) {
            auto spat = nn::mean_abs_error(srf_head.predicted_pan(x), p_t);
            spat_val = nn::scalar_value(spat);
            total = nn::add(spec, nn::scale(spat, static_cast<float>(config.lambda)));
        } else {
            auto detached = nn::constant(x->val);
            spat_val = nn::scalar_value(nn::mean_abs_error(srf_head.predicted_pan(detached), p_t));
            total = spec;
        }

        const double spec_val = nn::scalar_value(spec);
        const double total_val = spec_val + config.lambda * spat_val;
        if (!std::isfinite(total_val))
            throw NumericError("optimize_dip: non-finite energy at iteration " +
                               std::to_string(it) + " (spectral=" + std::to_string(spec_val) +
                               ", spatial=" + std::to_string(spat_val) + ")");
        state.energy_trace.push_back({it, spec_val, spat_val, total_val});

        nn::backward(total);
        adam.step(params);
    }
    state.iterations_run = config.iterations;

    // final forward at the optimized parameters
    x = gen.forward(z);
    HSICube x_dip = tensor_to_cube(x->val);
    x_dip.value_range = {0.0, 1.0};

    state.srf = srf_head.snapshot();
    state.srf_response = excite(squeeze(x_dip), state.srf).s;
    return {std::move(x_dip), std::move(state)};
}

HSICube baseline_upsample(const HSICube& y, int beta, UpsampleMethod method) {
    switch (method) {
        case UpsampleMethod::Nearest: return upsample_nearest(y, beta);
        case UpsampleMethod::Bicubic: return upsample_bicubic(y, beta);
        default: throw DataError("baseline_upsample: method must be nearest or bicubic");
    }
}

}  // namespace hspan
