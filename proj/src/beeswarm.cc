#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "xlint/vis_spec.h"

namespace xlint {

std::vector<double> BeeswarmLayout(std::span<const double> values, double bin_width,
                                   double diameter, std::span<const std::string> ids) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  const bool have_ids = ids.size() == values.size();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return have_ids ? ids[a] < ids[b] : a < b;
  });

  std::map<long long, int> filled;  // bin -> points placed so far
  std::vector<double> out(values.size(), 0.0);
  for (std::size_t i : order) {
    const auto bin = static_cast<long long>(std::floor(values[i] / bin_width));
    const int k = filled[bin]++;
    // 0, +1, -1, +2, -2, ...
    const int step = (k + 1) / 2;
    const double offset = k % 2 == 1 ? step : -step;
    out[i] = offset * diameter + 0.0;
  }
  return out;
}

}  // namespace xlint
