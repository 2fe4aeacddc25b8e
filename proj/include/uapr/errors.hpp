#ifndef UAPR_ERRORS_HPP_
#define UAPR_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace uapr {

// Broad failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  kDimension = 2,
  kDomain = 3,
  kConfiguration = 4,
  kFormat = 5,
  kIndex = 6,
  kIngestion = 7,
  kMetric = 8,
  kStructure = 9,
  kOracle = 10,
  kNumeric = 11,
};

const char* category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

#define UAPR_DEFINE_ERROR(Name, Category)                                 \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(Category, what) {}     \
  };

UAPR_DEFINE_ERROR(DimensionError, ErrorCategory::kDimension)
UAPR_DEFINE_ERROR(DomainError, ErrorCategory::kDomain)
UAPR_DEFINE_ERROR(ConfigurationError, ErrorCategory::kConfiguration)
UAPR_DEFINE_ERROR(FormatError, ErrorCategory::kFormat)
UAPR_DEFINE_ERROR(IndexError, ErrorCategory::kIndex)
UAPR_DEFINE_ERROR(IngestionError, ErrorCategory::kIngestion)
UAPR_DEFINE_ERROR(MetricError, ErrorCategory::kMetric)
UAPR_DEFINE_ERROR(StructureError, ErrorCategory::kStructure)
UAPR_DEFINE_ERROR(OracleError, ErrorCategory::kOracle)
UAPR_DEFINE_ERROR(NumericError, ErrorCategory::kNumeric)

#undef UAPR_DEFINE_ERROR

}  // namespace uapr

#endif  // UAPR_ERRORS_HPP_
