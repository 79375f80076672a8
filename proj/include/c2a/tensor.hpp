#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace c2a {

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

inline std::string dims_to_string(const std::vector<std::size_t>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(dims[i]);
    }
    return s + ")";
}

// Dense row-major f64 array. The one value/gradient carrier in this library.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> d, double fill = 0.0) : dims(std::move(d)) {
        data.assign(count(dims), fill);
    }

    static std::size_t count(const std::vector<std::size_t>& d) {
        std::size_t n = 1;
        for (std::size_t x : d) n *= x;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> d) { return Tensor(std::move(d), 0.0); }

    static Tensor from(std::vector<std::size_t> d, std::vector<double> vals) {
        Tensor t;
        t.dims = std::move(d);
        if (vals.size() != count(t.dims))
            throw shape_error("value count " + std::to_string(vals.size()) + " does not match dims " +
                              dims_to_string(t.dims));
        t.data = std::move(vals);
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return dims.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }

    double& at(std::size_t i, std::size_t j) { return data[i * dims[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * dims[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * dims[1] + j) * dims[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * dims[1] + j) * dims[2] + k];
    }

    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * dims[1] + j) * dims[2] + k) * dims[3] + l];
    }
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * dims[1] + j) * dims[2] + k) * dims[3] + l];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& want, const char* what) {
    if (t.dims != want)
        throw shape_error(std::string(what) + ": got " + dims_to_string(t.dims) + ", want " +
                          dims_to_string(want));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw shape_error(std::string(what) + ": " + dims_to_string(a.dims) + " vs " +
                          dims_to_string(b.dims));
}

inline void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw numeric_error(std::string(what) + ": non-finite value");
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace c2a
