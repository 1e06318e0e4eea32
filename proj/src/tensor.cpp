#include "cyclecorr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace cyclecorr {

bool Tensor::all_finite() const {
    for (double x : values_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream ss;
    ss << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) ss << ", ";
        ss << shape_[i];
    }
    ss << ')';
    return ss.str();
}

}  // namespace cyclecorr
