#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ireg {

/// Raised when a configuration cannot be satisfied (e.g. more objects than
/// grid cells, empty corpus statistics).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box, (x_min, y_min, x_max, y_max), origin top-left, pixels.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_max > x_min && y_max > y_min; }

  bool operator==(const BBox&) const = default;
};

/// A referring expression: lowercase word tokens, no BOS/EOS markers.
using Expression = std::vector<std::string>;

/// Lowercases and splits on whitespace.
Expression tokenize_expression(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace ireg
