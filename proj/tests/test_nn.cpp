#include <doctest.h>

#include "hspan/nn.hpp"
#include "hspan/cube.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <tuple>
#include <vector>

using namespace hspan;
using nn::NodeRef;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
    return uniform_tensor(std::move(shape), lo, hi, rng);
}

// relative L2 distance between the analytic gradient of `param` and central
// finite differences of `loss_fn` (which rebuilds the graph from scratch)
double grad_check(Tensor& param_store, const std::function<double()>& loss_fn,
                  const Tensor& analytic, double h) {
    REQUIRE(param_store.size() == analytic.size());
    double num = 0.0, den_a = 0.0, den_f = 0.0;
    for (int64_t i = 0; i < param_store.size(); ++i) {
        const float keep = param_store.v[i];
        param_store.v[i] = keep + static_cast<float>(h);
        const double fp = loss_fn();
        param_store.v[i] = keep - static_cast<float>(h);
        const double fm = loss_fn();
        param_store.v[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double ga = analytic.v[i];
        num += (ga - fd) * (ga - fd);
        den_a += ga * ga;
        den_f += fd * fd;
    }
    const double den = std::sqrt(std::max(den_a, den_f));
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / den;
}

}  // namespace

TEST_CASE("add / scale / reshape forward and backward") {
    std::mt19937 rng(1);
    auto a = nn::param(random_tensor({2, 3}, rng));
    auto b = nn::param(random_tensor({2, 3}, rng));
    auto s = nn::scale(nn::add(a, b), 2.0f);
    auto r = nn::reshape(s, {6});
    Tensor target = random_tensor({6}, rng, 4.0f, 5.0f);
    auto loss = nn::mean_abs_error(r, target);
    nn::backward(loss);
    // everything sits below the target: d loss / d a_i = -2/6
    for (int i = 0; i < 6; ++i) {
        CHECK(a->grad.v[i] == doctest::Approx(-2.0f / 6.0f));
        CHECK(b->grad.v[i] == doctest::Approx(-2.0f / 6.0f));
    }
}

TEST_CASE("activations forward values") {
    auto x = nn::constant(Tensor::full({4}, 0.0f));
    x->val.v = {-2.0f, -0.5f, 0.0f, 3.0f};
    auto lr = nn::leaky_relu(x, 0.2f);
    CHECK(lr->val.v[0] == doctest::Approx(-0.4f));
    CHECK(lr->val.v[1] == doctest::Approx(-0.1f));
    CHECK(lr->val.v[2] == doctest::Approx(0.0f));
    CHECK(lr->val.v[3] == doctest::Approx(3.0f));
    auto sg = nn::sigmoid(x);
    CHECK(sg->val.v[2] == doctest::Approx(0.5f));
    CHECK(sg->val.v[3] == doctest::Approx(1.0f / (1.0f + std::exp(-3.0f))));
}

TEST_CASE("softmax: uniform on zeros, closed form, sums to one") {
    auto zero = nn::constant(Tensor::full({4}, 0.0f));
    auto s0 = nn::softmax(zero);
    for (float v : s0->val.v) CHECK(v == doctest::Approx(0.25f));

    auto a = nn::constant(Tensor::full({2}, 0.0f));
    a->val.v = {std::log(3.0f), std::log(1.0f)};
    auto s = nn::softmax(a);
    CHECK(s->val.v[0] == doctest::Approx(0.75f));
    CHECK(s->val.v[1] == doctest::Approx(0.25f));

    std::mt19937 rng(3);
    for (int t = 0; t < 50; ++t) {
        auto r = nn::softmax(nn::constant(random_tensor({7}, rng, -5.0f, 5.0f)));
        double sum = 0.0;
        for (float v : r->val.v) {
            CHECK(v >= 0.0f);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("conv2d forward against a hand example") {
    // 1x1x3x3 input 1..9, all-ones 3x3 kernel, zero pad 1:
    auto x = nn::constant(Tensor({1, 1, 3, 3}));
    for (int i = 0; i < 9; ++i) x->val.v[static_cast<size_t>(i)] = static_cast<float>(i + 1);
    auto w = nn::constant(Tensor::full({1, 1, 3, 3}, 1.0f));
    auto b = nn::constant(Tensor::full({1}, 0.5f));
    auto y = nn::conv2d(x, w, b, 1, 1);
    REQUIRE(y->val.shape == std::vector<int>{1, 1, 3, 3});
    CHECK(y->val.v[4] == doctest::Approx(45.0f + 0.5f));
    // corner (0,0) sees 1,2,4,5
    CHECK(y->val.v[0] == doctest::Approx(12.0f + 0.5f));
}

TEST_CASE("conv2d stride 2 halves the grid") {
    std::mt19937 rng(5);
    auto x = nn::constant(random_tensor({2, 3, 8, 10}, rng));
    auto w = nn::constant(random_tensor({4, 3, 3, 3}, rng));
    auto b = nn::constant(random_tensor({4}, rng));
    auto y = nn::conv2d(x, w, b, 2, 1);
    CHECK(y->val.shape == std::vector<int>{2, 4, 4, 5});
}

TEST_CASE("gradient check: conv2d stride 1 and 2") {
    std::mt19937 rng(7);
    for (int stride : {1, 2}) {
        Tensor xv = random_tensor({1, 2, 6, 6}, rng);
        Tensor wv = random_tensor({3, 2, 3, 3}, rng, -0.5f, 0.5f);
        Tensor bv = random_tensor({3}, rng, -0.2f, 0.2f);
        Tensor target = random_tensor({1, 3, stride == 1 ? 6 : 3, stride == 1 ? 6 : 3}, rng, 2.0f, 3.0f);

        auto build = [&](bool want_grads) {
            auto x = want_grads ? nn::param(xv) : nn::constant(xv);
            auto w = want_grads ? nn::param(wv) : nn::constant(wv);
            auto b = want_grads ? nn::param(bv) : nn::constant(bv);
            // sigmoid keeps |.| signs fixed (outputs < target) and adds curvature
            auto loss = nn::mean_abs_error(nn::sigmoid(nn::conv2d(x, w, b, stride, 1)), target);
            return std::tuple{x, w, b, loss};
        };
        auto [x, w, b, loss] = build(true);
        nn::backward(loss);

        auto loss_of = [&]() { return nn::scalar_value(std::get<3>(build(false))); };
        CHECK(grad_check(wv, loss_of, w->grad, 1e-3) < 1e-3);
        CHECK(grad_check(bv, loss_of, b->grad, 1e-3) < 1e-3);
        CHECK(grad_check(xv, loss_of, x->grad, 1e-3) < 1e-3);
    }
}

TEST_CASE("gradient check: bilinear resize both directions") {
    std::mt19937 rng(9);
    for (auto [oh, ow] : std::vector<std::array<int, 2>>{{8, 8}, {2, 2}}) {
        Tensor xv = random_tensor({1, 2, 4, 4}, rng);
        Tensor target = Tensor::full({1, 2, oh, ow}, 2.5f);
        auto build = [&](bool g) {
            auto x = g ? nn::param(xv) : nn::constant(xv);
            return std::pair{x, nn::mean_abs_error(nn::sigmoid(nn::bilinear_resize(x, oh, ow)), target)};
        };
        auto [x, loss] = build(true);
        nn::backward(loss);
        auto loss_of = [&]() { return nn::scalar_value(build(false).second); };
        CHECK(grad_check(xv, loss_of, x->grad, 1e-3) < 1e-3);
    }
}

TEST_CASE("bilinear resize preserves constants") {
    auto x = nn::constant(Tensor::full({1, 1, 5, 7}, 0.63f));
    auto up = nn::bilinear_resize(x, 13, 11);
    for (float v : up->val.v) CHECK(v == doctest::Approx(0.63f));
}

TEST_CASE("gradient check: batchnorm training mode") {
    std::mt19937 rng(11);
    Tensor xv = random_tensor({2, 3, 4, 4}, rng);
    Tensor target = Tensor::full({2, 3, 4, 4}, 3.0f);
    Tensor gv = Tensor::full({3}, 0.0f);
    gv.v = {0.9f, 1.2f, 0.8f};
    Tensor bv = Tensor::full({3}, 0.0f);
    bv.v = {0.1f, -0.2f, 0.3f};

    auto build = [&](bool g) {
        nn::BatchNorm local(3);
        local.gamma->val = gv;
        local.beta->val = bv;
        auto x = g ? nn::param(xv) : nn::constant(xv);
        if (!g) {
            // freeze affine params too for finite differences
            local.gamma->needs_grad = false;
            local.beta->needs_grad = false;
        }
        auto y = nn::sigmoid(local(x, true));
        return std::tuple{x, local.gamma, local.beta, nn::mean_abs_error(y, target)};
    };
    auto [x, gamma, beta, loss] = build(true);
    nn::backward(loss);
    auto loss_of = [&]() { return nn::scalar_value(std::get<3>(build(false))); };
    CHECK(grad_check(xv, loss_of, x->grad, 1e-3) < 2e-3);
    CHECK(grad_check(gv, loss_of, gamma->grad, 1e-3) < 1e-3);
    CHECK(grad_check(bv, loss_of, beta->grad, 1e-3) < 1e-3);
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    nn::BatchNorm bn(1);
    bn.running_mean.v = {2.0f};
    bn.running_var.v = {4.0f};
    auto x = nn::constant(Tensor::full({1, 1, 2, 2}, 4.0f));
    auto y = bn(x, false);
    // (4 - 2) / sqrt(4 + eps) ~ 1
    CHECK(y->val.v[0] == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("gradient check: gap, linear, band_combine, softmax chain") {
    std::mt19937 rng(13);
    Tensor xv = random_tensor({1, 4, 6, 6}, rng, 0.0f, 1.0f);
    Tensor w1v = random_tensor({3, 4}, rng, -0.7f, 0.7f);
    Tensor w2v = random_tensor({4, 3}, rng, -0.7f, 0.7f);
    Tensor pan = random_tensor({1, 1, 6, 6}, rng, 2.0f, 3.0f);

    auto build = [&](bool g) {
        auto x = g ? nn::param(xv) : nn::constant(xv);
        auto w1 = g ? nn::param(w1v) : nn::constant(w1v);
        auto w2 = g ? nn::param(w2v) : nn::constant(w2v);
        auto q = nn::reshape(nn::global_avg_pool(x), {4});
        auto s = nn::softmax(nn::linear(w2, nn::relu(nn::linear(w1, q))));
        auto pred = nn::band_combine(x, s);
        return std::tuple{x, w1, w2, nn::mean_abs_error(pred, pan)};
    };
    auto [x, w1, w2, loss] = build(true);
    nn::backward(loss);
    auto loss_of = [&]() { return nn::scalar_value(std::get<3>(build(false))); };
    CHECK(grad_check(w1v, loss_of, w1->grad, 1e-2) < 1e-3);
    CHECK(grad_check(w2v, loss_of, w2->grad, 1e-2) < 1e-3);
    CHECK(grad_check(xv, loss_of, x->grad, 1e-2) < 2e-3);
}

TEST_CASE("gradient check: downsample operators") {
    std::mt19937 rng(17);
    for (auto mode : {nn::Downsampler::MatchedGaussian, nn::Downsampler::Lanczos2}) {
        Tensor xv = random_tensor({1, 2, 8, 8}, rng);
        Tensor target = Tensor::full({1, 2, 4, 4}, 2.0f);
        auto build = [&](bool g) {
            auto x = g ? nn::param(xv) : nn::constant(xv);
            return std::pair{x, nn::mean_abs_error(nn::sigmoid(nn::downsample(x, 2, mode)), target)};
        };
        auto [x, loss] = build(true);
        nn::backward(loss);
        auto loss_of = [&]() { return nn::scalar_value(build(false).second); };
        CHECK(grad_check(xv, loss_of, x->grad, 1e-3) < 1e-3);
    }
}

TEST_CASE("downsample shape and DC behavior") {
    auto x = nn::constant(Tensor::full({1, 3, 12, 8}, 0.41f));
    for (auto mode : {nn::Downsampler::MatchedGaussian, nn::Downsampler::Lanczos2}) {
        auto y = nn::downsample(x, 4, mode);
        CHECK(y->val.shape == std::vector<int>{1, 3, 3, 2});
        for (float v : y->val.v) CHECK(v == doctest::Approx(0.41f).epsilon(1e-5));
    }
    CHECK_THROWS_AS(nn::downsample(x, 5, nn::Downsampler::Lanczos2), DimensionError);
}

TEST_CASE("lanczos2 downsample at beta 1 is the identity") {
    std::mt19937 rng(19);
    auto x = nn::constant(random_tensor({1, 2, 5, 5}, rng));
    auto y = nn::downsample(x, 1, nn::Downsampler::Lanczos2);
    for (int64_t i = 0; i < x->val.size(); ++i) CHECK(y->val.v[i] == doctest::Approx(x->val.v[i]));
}

TEST_CASE("concat_channels splits gradients correctly") {
    std::mt19937 rng(23);
    Tensor av = random_tensor({1, 2, 3, 3}, rng);
    Tensor bv = random_tensor({1, 1, 3, 3}, rng);
    Tensor target = Tensor::full({1, 3, 3, 3}, 5.0f);
    auto a = nn::param(av);
    auto b = nn::param(bv);
    auto loss = nn::mean_abs_error(nn::concat_channels(a, b), target);
    nn::backward(loss);
    // all values < 5 so every sign is -1: grad = -1/27
    for (float g : a->grad.v) CHECK(g == doctest::Approx(-1.0f / 27.0f));
    for (float g : b->grad.v) CHECK(g == doctest::Approx(-1.0f / 27.0f));
}

TEST_CASE("Adam takes a deterministic step and zeroes the gradient") {
    auto p = nn::param(Tensor::full({2}, 1.0f));
    auto loss = nn::mean_abs_error(p, Tensor::full({2}, 0.0f));
    nn::backward(loss);
    nn::Adam adam;
    adam.lr = 0.1;
    adam.weight_decay = 0.0;
    adam.step({p});
    // first step moves by ~lr against the gradient sign
    CHECK(p->val.v[0] == doctest::Approx(0.9f).epsilon(1e-3));
    CHECK(p->grad.v[0] == 0.0f);

    // second iteration from a fresh graph runs off accumulated moments
    auto loss2 = nn::mean_abs_error(p, Tensor::full({2}, 0.0f));
    nn::backward(loss2);
    adam.step({p});
    CHECK(p->val.v[0] < 0.9f);
}

TEST_CASE("backward handles shared subgraphs (diamond)") {
    auto a = nn::param(Tensor::full({3}, 2.0f));
    auto s = nn::scale(a, 1.0f);
    auto sum = nn::add(s, s);  // y = 2a
    auto loss = nn::mean_abs_error(sum, Tensor::full({3}, 0.0f));
    nn::backward(loss);
    // d/da mean|2a| = 2/3 per element (a > 0)
    for (float g : a->grad.v) CHECK(g == doctest::Approx(2.0f / 3.0f));
}

TEST_CASE("graph determinism: same inputs give bitwise-equal outputs") {
    std::mt19937 rng(29);
    Tensor xv = random_tensor({2, 3, 16, 16}, rng);
    Tensor wv = random_tensor({8, 3, 3, 3}, rng);
    Tensor bv = random_tensor({8}, rng);
    auto run = [&]() {
        auto y = nn::conv2d(nn::constant(xv), nn::constant(wv), nn::constant(bv), 1, 1);
        return y->val.v;
    };
    CHECK(run() == run());
}
