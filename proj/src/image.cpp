#include "esure/image.hpp"

#include <cmath>

namespace esure {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.height) + "," + std::to_string(s.width) + "," + std::to_string(s.channels) + ")";
}

ShapeMismatch::ShapeMismatch(const Shape& a, const Shape& b, const std::string& where)
    : std::invalid_argument(where + ": shape mismatch " + to_string(a) + " vs " + to_string(b)) {}

double psnr_from_mse(double mse, double peak, double cap_db) {
  if (!(peak > 0)) throw std::invalid_argument("psnr: peak must be positive");
  if (mse <= 0) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(peak * peak / mse));
}

double psnr(const Image& reference, const Image& estimate, double peak, double cap_db) {
  return psnr_from_mse(mean_squared_difference(reference, estimate), peak, cap_db);
}

}  // namespace esure
