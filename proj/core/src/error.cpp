#include "facelab/error.hpp"

namespace facelab {

std::string at_line(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

}  // namespace facelab
