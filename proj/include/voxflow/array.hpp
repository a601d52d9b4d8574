#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxflow/common.hpp"

namespace voxflow {

namespace detail {

// Thread-local size-bucketed recycler. Training tapes allocate the same
// shapes every step; reusing warm buffers keeps the kernels out of
// first-touch page faults. Capped so idle pools cannot grow without bound.
class BufferPool {
  public:
    static double* acquire(std::size_t n) {
        if (n == 0) return nullptr;
        Pool& p = pool();
        auto it = p.buckets.find(n);
        if (it != p.buckets.end() && !it->second.empty()) {
            double* out = it->second.back();
            it->second.pop_back();
            p.held_bytes -= n * sizeof(double);
            return out;
        }
        return new double[n];
    }

    static void release(double* ptr, std::size_t n) {
        if (ptr == nullptr) return;
        Pool& p = pool();
        constexpr std::size_t kCapBytes = std::size_t(512) << 20;
        if (p.held_bytes + n * sizeof(double) > kCapBytes) {
            delete[] ptr;
            return;
        }
        p.buckets[n].push_back(ptr);
        p.held_bytes += n * sizeof(double);
    }

  private:
    struct Pool {
        std::unordered_map<std::size_t, std::vector<double*>> buckets;
        std::size_t held_bytes = 0;
        ~Pool() {
            for (auto& [n, vec] : buckets)
                for (double* p : vec) delete[] p;
        }
    };

    static Pool& pool() {
        thread_local Pool p;
        return p;
    }
};

// Owning buffer with value semantics over the pool.
class DoubleBuf {
  public:
    DoubleBuf() = default;
    explicit DoubleBuf(std::size_t n) : ptr_(BufferPool::acquire(n)), n_(n) {}

    DoubleBuf(const DoubleBuf& o) : ptr_(BufferPool::acquire(o.n_)), n_(o.n_) {
        if (n_) std::memcpy(ptr_, o.ptr_, n_ * sizeof(double));
    }
    DoubleBuf& operator=(const DoubleBuf& o) {
        if (this == &o) return *this;
        if (n_ != o.n_) {
            BufferPool::release(ptr_, n_);
            n_ = o.n_;
            ptr_ = BufferPool::acquire(n_);
        }
        if (n_) std::memcpy(ptr_, o.ptr_, n_ * sizeof(double));
        return *this;
    }
    DoubleBuf(DoubleBuf&& o) noexcept : ptr_(o.ptr_), n_(o.n_) {
        o.ptr_ = nullptr;
        o.n_ = 0;
    }
    DoubleBuf& operator=(DoubleBuf&& o) noexcept {
        if (this == &o) return *this;
        BufferPool::release(ptr_, n_);
        ptr_ = o.ptr_;
        n_ = o.n_;
        o.ptr_ = nullptr;
        o.n_ = 0;
        return *this;
    }
    ~DoubleBuf() { BufferPool::release(ptr_, n_); }

    double* data() { return ptr_; }
    const double* data() const { return ptr_; }
    std::size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }

    double& operator[](std::size_t i) { return ptr_[i]; }
    double operator[](std::size_t i) const { return ptr_[i]; }

  private:
    double* ptr_ = nullptr;
    std::size_t n_ = 0;
};

}  // namespace detail

// Dense row-major array of 64-bit floats. Rank 0 (scalar) through rank 3 in
// practice; ops validate shapes and report both sides on mismatch.
class NdArray {
  public:
    NdArray() = default;

    explicit NdArray(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(checked_numel(shape_))) {
        std::fill(data_.data(), data_.data() + data_.size(), fill);
    }

    // Contents unspecified; for outputs that are fully overwritten.
    static NdArray uninit(std::vector<int> shape) {
        NdArray a;
        a.shape_ = std::move(shape);
        a.data_ = detail::DoubleBuf(static_cast<std::size_t>(checked_numel(a.shape_)));
        return a;
    }

    static NdArray scalar(double v) {
        NdArray a{std::vector<int>{}};
        a.data_[0] = v;
        return a;
    }

    static NdArray from(std::vector<int> shape, std::vector<double> values) {
        if (checked_numel(shape) != static_cast<std::int64_t>(values.size()))
            throw NumericError("NdArray::from: " + shape_str(shape) + " does not hold " +
                               std::to_string(values.size()) + " values");
        NdArray a = uninit(std::move(shape));
        std::copy(values.begin(), values.end(), a.data());
        return a;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int rows() const { return shape_.at(0); }
    int cols() const { return shape_.at(1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols() + j]; }

    bool same_shape(const NdArray& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double item() const {
        if (numel() != 1)
            throw NumericError("NdArray::item: expected a single element, shape " + shape_str());
        return data_[0];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const { return shape_str(shape_); }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ']';
        return os.str();
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    bool operator==(const NdArray& o) const {
        if (shape_ != o.shape_) return false;
        for (std::size_t i = 0; i < data_.size(); ++i)
            if (data_[i] != o.data_[i]) return false;
        return true;
    }

  private:
    static std::int64_t checked_numel(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw NumericError("NdArray: negative extent in shape " + shape_str(s));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    detail::DoubleBuf data_;
};

inline std::uint64_t hash_bytes(const NdArray& a) {
    Fnv1a h;
    h.update(a.data(), static_cast<std::size_t>(a.numel()) * sizeof(double));
    return h.digest();
}

}  // namespace voxflow
