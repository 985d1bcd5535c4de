#ifndef PAGG_ERROR_HPP
#define PAGG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pagg {

// Invalid configuration value or unknown configuration key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failure (open, read, write).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file parsed but its contents are malformed.
class FormatError : public std::runtime_error {
 public:
  enum class Kind {
    kBadMagic,
    kBadVersion,
    kTruncated,
    kTrailingBytes,
    kBadWidth,
    kBadValue,
  };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Non-finite values appeared in a numeric routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pagg

#endif  // PAGG_ERROR_HPP
