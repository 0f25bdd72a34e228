#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace algotag {

// Base class for every failure raised by the library. The category maps onto
// the CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { kInputFormat = 2, kParameter = 3, kDivergence = 4 };

  Error(Category category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  Category category_;
};

class InputFormatError : public Error {
 public:
  explicit InputFormatError(const std::string& message)
      : Error(Category::kInputFormat, message) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& message)
      : Error(Category::kParameter, message) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, const std::string& message)
      : Error(Category::kDivergence, message), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace algotag
