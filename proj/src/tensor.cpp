#include "parnn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace parnn::ad {

void Tensor::check_finite() const {
    for (double v : data_)
        if (!std::isfinite(v))
            throw std::invalid_argument("Tensor: non-finite entry");
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

}  // namespace parnn::ad
