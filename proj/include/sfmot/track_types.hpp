#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "sfmot/geometry.hpp"

namespace sfmot {

/// One detector output for a frame.
struct Detection {
  Box3D box;
  double confidence = 1.0;
  std::string category = "Car";

  void validate() const {
    box.validate();
    if (!std::isfinite(confidence)) throw std::invalid_argument("Detection: non-finite confidence");
  }
};

/// A tracker output for one frame.
struct EmittedTrack {
  int id = -1;
  std::string category;
  Box3D box;
  double confidence = 0.0;
};

}  // namespace sfmot
