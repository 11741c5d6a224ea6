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

#include "cap/error.hpp"

namespace cap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kWrongFrame: return "WrongFrame";
    case ErrorCode::kMissingManifest: return "MissingManifest";
    case ErrorCode::kSchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::kCorruptFrameLine: return "CorruptFrameLine";
    case ErrorCode::kDegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::kImageReadFailure: return "ImageReadFailure";
    case ErrorCode::kImageWriteFailure: return "ImageWriteFailure";
    case ErrorCode::kNoContactFound: return "NoContactFound";
    case ErrorCode::kEpisodeFinished: return "EpisodeFinished";
    case ErrorCode::kWrongTask: return "WrongTask";
    case ErrorCode::kUnknownEnvironment: return "UnknownEnvironment";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kGradientCheckFailed: return "GradientCheckFailed";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kNoAnchor: return "NoAnchor";
    case ErrorCode::kModelLoadFailure: return "ModelLoadFailure";
    case ErrorCode::kPointingTimeout: return "PointingTimeout";
    case ErrorCode::kUnknownTool: return "UnknownTool";
    case ErrorCode::kUnknownTarget: return "UnknownTarget";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace cap
