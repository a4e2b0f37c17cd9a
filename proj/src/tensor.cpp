#include "hspan/tensor.hpp"

#include "hspan/cube.hpp"

#include <cmath>

namespace hspan {

int64_t Tensor::count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 1) throw DimensionError("Tensor: dimensions must be >= 1");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), v(static_cast<size_t>(count(shape)), 0.0f) {}

Tensor Tensor::full(std::vector<int> s, float value) {
    Tensor t(std::move(s));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(float value) { return full({1}, value); }

void Tensor::fill(float x) { std::fill(v.begin(), v.end(), x); }

bool Tensor::all_finite() const {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor uniform_tensor(std::vector<int> shape, float lo, float hi, std::mt19937& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& x : t.v) x = dist(rng);
    return t;
}

Tensor fan_in_uniform(std::vector<int> shape, int fan_in, std::mt19937& rng) {
    const float b = 1.0f / std::sqrt(static_cast<float>(fan_in));
    return uniform_tensor(std::move(shape), -b, b, rng);
}

uint64_t fnv1a64(const void* bytes, size_t n, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t tensor_hash(const Tensor& t) {
    uint64_t h = fnv1a64(t.shape.data(), t.shape.size() * sizeof(int));
    return fnv1a64(t.v.data(), t.v.size() * sizeof(float), h);
}

}  // namespace hspan
