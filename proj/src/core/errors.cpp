// SPDX-License-Identifier: Apache-2.0
#include "madr/errors.hpp"

namespace madr {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kNumerical: return "numerical failure";
    case ErrorKind::kContract: return "contract violation";
    case ErrorKind::kDomain: return "out of domain";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kEstimation: return "estimation failure";
  }
  return "error";
}

}  // namespace madr
