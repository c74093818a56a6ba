#include "sinkdem/tensor.hpp"

#include <sstream>

namespace sinkdem::nn {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

}  // namespace sinkdem::nn
