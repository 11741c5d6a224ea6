// Copyright 2026 The CAP Authors.
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

#ifndef CAP_ERROR_HPP_
#define CAP_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace cap {

enum class ErrorCode {
  kInvalidArgument,
  // geometry
  kNonPositiveDepth,
  kOutOfBounds,
  kBehindCamera,
  kWrongFrame,
  // episode store
  kMissingManifest,
  kSchemaVersionMismatch,
  kCorruptFrameLine,
  kDegenerateCalibration,
  kImageReadFailure,
  kImageWriteFailure,
  // labeling
  kNoContactFound,
  // simulator
  kEpisodeFinished,
  kWrongTask,
  kUnknownEnvironment,
  // codec
  kInsufficientData,
  kIndexOutOfRange,
  // policy
  kGradientCheckFailed,
  kEmptyDataset,
  kNoAnchor,
  kModelLoadFailure,
  // control
  kPointingTimeout,
  kUnknownTool,
  kUnknownTarget,
  // eval
  kConfigInvalid,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the library are reported with this type; the
// code is the machine-readable part, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cap

#endif  // CAP_ERROR_HPP_
