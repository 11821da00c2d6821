#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace worldpose {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or indices that do not agree with the skeleton / state layout.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class RolloutDivergence : public NumericalError {
 public:
  explicit RolloutDivergence(int step)
      : NumericalError("rollout diverged at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

namespace log {

using Sink = std::function<void(std::string_view)>;

inline Sink& sink() {
  static Sink s = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

inline void warn(std::string_view msg) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  if (sink()) sink()(msg);
}

// Swaps the warning sink for the lifetime of the guard.
class ScopedSink {
 public:
  explicit ScopedSink(Sink s) : saved_(std::move(sink())) { sink() = std::move(s); }
  ~ScopedSink() { sink() = std::move(saved_); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  Sink saved_;
};

}  // namespace log

// FNV-1a, used to stamp output files with the producing config / skeleton.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace worldpose
