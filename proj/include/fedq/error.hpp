// Copyright 2026 The fedqssl Authors. All Rights Reserved.
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

namespace fedq {

// Failure categories raised by the simulator. Each maps onto one status code
// of the C API.
enum class ErrorCode {
  kInvalidArgument,
  kDegenerateRange,
  kDimensionMismatch,
  kNotSymmetric,
  kNoConvergence,
  kNegativeEigenvalue,
  kZeroMatrix,
  kInvalidParams,
  kStateMismatch,
  kShapeMismatch,
  kEmptyInput,
  kMissingClient,
  kInvalidCoordinate,
  kParseError,
  kValidationError,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace fedq
