// Copyright 2026 The voqa Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voqa {

enum class ErrorCode {
  kFormatError,
  kUnsupportedEncoding,
  kEmptyAudio,
  kTooShort,
  kInsufficientCycles,
  kDegenerateAmplitude,
  kNoVoicedFrames,
  kCorruptStack,
  kNonFiniteValues,
  kShapeError,
  kCalledBeforeForward,
  kDegenerateScale,
  kNonFiniteGradient,
  kUndefinedCorrelation,
  kInsufficientSpeakers,
  kDegenerateSignal,
  kFileError,
  kConfigError,
  kMissingEmbeddings,
  kInvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kUnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::kEmptyAudio: return "EmptyAudio";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kInsufficientCycles: return "InsufficientCycles";
    case ErrorCode::kDegenerateAmplitude: return "DegenerateAmplitude";
    case ErrorCode::kNoVoicedFrames: return "NoVoicedFrames";
    case ErrorCode::kCorruptStack: return "CorruptStack";
    case ErrorCode::kNonFiniteValues: return "NonFiniteValues";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kCalledBeforeForward: return "CalledBeforeForward";
    case ErrorCode::kDegenerateScale: return "DegenerateScale";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kUndefinedCorrelation: return "UndefinedCorrelation";
    case ErrorCode::kInsufficientSpeakers: return "InsufficientSpeakers";
    case ErrorCode::kDegenerateSignal: return "DegenerateSignal";
    case ErrorCode::kFileError: return "FileError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kMissingEmbeddings: return "MissingEmbeddings";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// All toolkit failures surface as this exception; `code()` tells callers
// which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace voqa
