#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "vds/core/types.hpp"

namespace vds::ad {

// Dense row-major tensor of doubles. Double precision keeps central
// finite-difference checks meaningful down to 1e-3 relative error.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    static Tensor scalar(double x) {
        Tensor t({1});
        t.v[0] = x;
        return t;
    }

    static Tensor from_grid(const Grid<double>& g) {
        Tensor t({g.h, g.w});
        t.v = g.data;
        return t;
    }

    Grid<double> to_grid() const {
        if (shape.size() != 2) throw Error("Tensor::to_grid: not 2-D");
        Grid<double> g(shape[0], shape[1]);
        g.data = v;
        return g;
    }

    double item() const { return v.at(0); }
};

}  // namespace vds::ad
