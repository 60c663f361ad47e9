// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lvg {

enum class Errc {
  kInvalidArgument,
  kDimensionMismatch,
  kNotFound,
  kConflict,
  kOutOfRange,
  kParse,
  kSchemaVersion,
  kIo,
  kDegenerate,
  kNonFinite,
  kUnsupported,
  kEmptyResult,
};

/// Library-wide exception. Every failure surfaced by lvg carries a code so
/// that callers (and the CLI) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Raised when a multi-step numerical loop hits a non-finite value or a
/// per-item stage fails; `index()` is the step or item that failed.
class StepError : public Error {
 public:
  StepError(Errc code, long index, const std::string& message)
      : Error(code, message), index_(index) {}

  long index() const noexcept { return index_; }

 private:
  long index_;
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kDimensionMismatch: return "dimension mismatch";
    case Errc::kNotFound: return "not found";
    case Errc::kConflict: return "conflict";
    case Errc::kOutOfRange: return "out of range";
    case Errc::kParse: return "parse error";
    case Errc::kSchemaVersion: return "schema version mismatch";
    case Errc::kIo: return "i/o error";
    case Errc::kDegenerate: return "degenerate input";
    case Errc::kNonFinite: return "non-finite value";
    case Errc::kUnsupported: return "unsupported";
    case Errc::kEmptyResult: return "empty result";
  }
  return "unknown";
}

}  // namespace lvg
