#include "fsn/model.hpp"

namespace fsn {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::logistic: return "logistic";
    case LossKind::squared: return "squared";
  }
  return "unknown";
}

std::string to_string(RegKind kind) {
  switch (kind) {
    case RegKind::l2: return "l2";
    case RegKind::pseudo_huber: return "pseudo_huber";
  }
  return "unknown";
}

}  // namespace fsn
