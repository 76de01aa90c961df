#pragma once

#include <stdexcept>
#include <string>

namespace gnssrx {

// Bad arguments: empty buffers, length mismatches, out-of-range PRNs.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Inputs that are well-formed but carry no information (e.g. all-zero correlators).
class DegenerateInput : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class InvalidConfig : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Malformed IF files, configuration files or CSV text.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures: missing files, short writes.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ResourceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant, e.g. a monotonic clock running backwards.
class InternalError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Failure inside one channel of a multi-channel run.
class ChannelError : public std::runtime_error {
public:
  ChannelError(std::size_t channel, const std::string& what)
      : std::runtime_error("channel " + std::to_string(channel) + ": " + what),
        channel_(channel) {}

  std::size_t channel() const noexcept { return channel_; }

private:
  std::size_t channel_;
};

}  // namespace gnssrx
