#include "lapdae/tensor.hpp"

#include <cmath>
#include <sstream>

namespace lapdae {

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

void Tensor::check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() == b.shape()) return;
    for (int ax = 0; ax < std::max(a.rank(), b.rank()); ++ax) {
        int64_t da = ax < a.rank() ? a.shape()[static_cast<size_t>(ax)] : -1;
        int64_t db = ax < b.rank() ? b.shape()[static_cast<size_t>(ax)] : -1;
        if (da != db)
            throw DimensionError(std::string(what) + ": shape mismatch at axis " + std::to_string(ax) +
                                 ": " + a.shape_str() + " vs " + b.shape_str());
    }
    throw DimensionError(std::string(what) + ": shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace lapdae
