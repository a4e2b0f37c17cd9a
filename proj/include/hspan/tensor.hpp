#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace hspan {

// Dense row-major float32 tensor with a small dynamic shape.
// Reductions over tensors accumulate in double.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    static int64_t count(const std::vector<int>& s);
    static Tensor full(std::vector<int> s, float value);
    static Tensor scalar(float value);

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    float* data() { return v.data(); }
    const float* data() const { return v.data(); }

    void fill(float x);
    bool all_finite() const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Draws in a fixed order so seeded runs reproduce bitwise.
Tensor uniform_tensor(std::vector<int> shape, float lo, float hi, std::mt19937& rng);
// Zero-mean uniform scaled by fan-in: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(std::vector<int> shape, int fan_in, std::mt19937& rng);

// FNV-1a 64-bit over the raw float bytes; used for provenance records and
// the z-immutability check.
uint64_t tensor_hash(const Tensor& t);
uint64_t fnv1a64(const void* bytes, size_t n, uint64_t seed = 1469598103934665603ull);

}  // namespace hspan
