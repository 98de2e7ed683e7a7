#pragma once

#include <cstddef>
#include <vector>

namespace radgs {

// Single-channel row-major image. Pixel (x, y) is centered at image
// coordinate (x, y).
class Image {
public:
    Image() = default;
    Image(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int x, int y) { return data_[index(x, y)]; }
    double operator()(int x, int y) const { return data_[index(x, y)]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double max_value() const;
    bool same_shape(const Image& other) const { return width_ == other.width_ && height_ == other.height_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

// One detector image with its acquisition azimuth (radians).
struct Projection {
    Image pixels;
    double angle = 0.0;

    friend bool operator==(const Projection&, const Projection&) = default;
};

} // namespace radgs
