#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noisediag {

/// Base of every error the library raises on purpose.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input did not validate: the user can fix it by supplying different files
// or flags. The CLI maps these to exit status 1.
class validation_error : public error {
public:
  using error::error;
};

class io_error : public validation_error {
public:
  using validation_error::validation_error;
};

class format_error : public validation_error {
public:
  using validation_error::validation_error;
};

class shape_error : public validation_error {
public:
  using validation_error::validation_error;
};

class manifest_error : public validation_error {
public:
  using validation_error::validation_error;
};

class parse_error : public validation_error {
public:
  using validation_error::validation_error;
};

class table_error : public validation_error {
public:
  using validation_error::validation_error;
};

class spec_error : public validation_error {
public:
  using validation_error::validation_error;
};

// NaN or Inf found while loading; carries the first offending flat index.
class nonfinite_value_error : public validation_error {
public:
  nonfinite_value_error(const std::string& what, std::size_t flat_index)
      : validation_error(what), index_(flat_index) {}
  std::size_t flat_index() const noexcept { return index_; }

private:
  std::size_t index_;
};

class config_error : public validation_error {
public:
  using validation_error::validation_error;
};

// Input validated but the numbers make a metric undefined (0/0, zero norms,
// too few samples). The CLI maps these to exit status 2.
class data_error : public error {
public:
  using error::error;
};

class degenerate_input_error : public data_error {
public:
  using data_error::data_error;
};

class insufficient_data_error : public data_error {
public:
  using data_error::data_error;
};

/// A postcondition check inside the library failed.
class internal_error : public error {
public:
  using error::error;
};

} // namespace noisediag
