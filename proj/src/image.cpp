#include "radgs/image.hpp"

#include <algorithm>

#include "radgs/error.hpp"

namespace radgs {

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
    require(width >= 0 && height >= 0, ErrorKind::InvalidParameter, "image dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

double Image::max_value() const {
    if (data_.empty()) return 0.0;
    return *std::max_element(data_.begin(), data_.end());
}

} // namespace radgs
