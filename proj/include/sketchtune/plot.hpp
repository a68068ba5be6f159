// Copyright 2026 The sketchtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SKETCHTUNE_PLOT_HPP_
#define SKETCHTUNE_PLOT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "sketchtune/image.hpp"

namespace sketchtune {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Axes and polylines on a white RGB canvas; series cycle through a fixed palette.
/// The y-range is fixed when y_min < y_max, otherwise fitted to the data.
Raster line_plot(const std::vector<Series>& series, int width, int height, double y_min = 0.0, double y_max = 0.0);

}  // namespace sketchtune

#endif  // SKETCHTUNE_PLOT_HPP_
