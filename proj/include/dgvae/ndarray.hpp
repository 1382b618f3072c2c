#ifndef DGVAE_NDARRAY_HPP
#define DGVAE_NDARRAY_HPP

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgvae {

/// Minimal dense row-major N-d array. Heavy math lives in Eigen; this type
/// only carries dataset and model outputs between modules.
template <typename T>
struct Nd {
    std::vector<std::int64_t> dims;
    std::vector<T> v;

    Nd() = default;
    explicit Nd(std::vector<std::int64_t> d) : dims(std::move(d)) {
        v.assign(static_cast<std::size_t>(count(dims)), T{});
    }

    static Nd zeros(std::initializer_list<std::int64_t> d) {
        return Nd(std::vector<std::int64_t>(d));
    }

    static std::int64_t count(const std::vector<std::int64_t>& d) {
        std::int64_t n = 1;
        for (auto x : d) {
            if (x < 0) throw std::invalid_argument("Nd: negative dimension");
            n *= x;
        }
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
    std::int64_t dim(std::size_t i) const { return dims.at(i); }
    bool same_shape(const Nd& o) const { return dims == o.dims; }

    T& at(std::int64_t i) { return v[idx({i})]; }
    T& at(std::int64_t i, std::int64_t j) { return v[idx({i, j})]; }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k) { return v[idx({i, j, k})]; }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return v[idx({i, j, k, l})];
    }
    T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l, std::int64_t m) {
        return v[idx({i, j, k, l, m})];
    }
    const T& at(std::int64_t i) const { return v[idx({i})]; }
    const T& at(std::int64_t i, std::int64_t j) const { return v[idx({i, j})]; }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return v[idx({i, j, k})];
    }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return v[idx({i, j, k, l})];
    }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l,
                std::int64_t m) const {
        return v[idx({i, j, k, l, m})];
    }

private:
    std::size_t idx(std::initializer_list<std::int64_t> ix) const {
        assert(ix.size() == dims.size());
        std::int64_t flat = 0;
        std::size_t d = 0;
        for (auto i : ix) {
            assert(i >= 0 && i < dims[d]);
            flat = flat * dims[d] + i;
            ++d;
        }
        return static_cast<std::size_t>(flat);
    }
};

using NdD = Nd<double>;
using NdB = Nd<std::uint8_t>;

}  // namespace dgvae

#endif  // DGVAE_NDARRAY_HPP
