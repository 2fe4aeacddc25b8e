#include "uapr/errors.hpp"

namespace uapr {

const char* category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kDomain: return "domain";
    case ErrorCategory::kConfiguration: return "configuration";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kIndex: return "index";
    case ErrorCategory::kIngestion: return "ingestion";
    case ErrorCategory::kMetric: return "metric";
    case ErrorCategory::kStructure: return "structure";
    case ErrorCategory::kOracle: return "oracle";
    case ErrorCategory::kNumeric: return "numeric";
  }
  return "unknown";
}

}  // namespace uapr
