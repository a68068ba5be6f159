// Copyright 2026 The sketchtune Authors. All Rights Reserved.
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

#ifndef SKETCHTUNE_ERROR_HPP_
#define SKETCHTUNE_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sketchtune {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SKETCHTUNE_DEFINE_ERROR(Name)          \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  };

SKETCHTUNE_DEFINE_ERROR(ShapeMismatch)
SKETCHTUNE_DEFINE_ERROR(NonFinite)
SKETCHTUNE_DEFINE_ERROR(InvalidArgument)
SKETCHTUNE_DEFINE_ERROR(InvalidKernel)
SKETCHTUNE_DEFINE_ERROR(InvalidRange)
SKETCHTUNE_DEFINE_ERROR(StepOutOfRange)
SKETCHTUNE_DEFINE_ERROR(DegenerateVariance)
SKETCHTUNE_DEFINE_ERROR(ExtractorUnavailable)
SKETCHTUNE_DEFINE_ERROR(DivergenceDetected)
SKETCHTUNE_DEFINE_ERROR(AlreadyAugmented)
SKETCHTUNE_DEFINE_ERROR(InsufficientData)
SKETCHTUNE_DEFINE_ERROR(EmptyAnswer)
SKETCHTUNE_DEFINE_ERROR(EmptyQASet)
SKETCHTUNE_DEFINE_ERROR(BackendFailure)
SKETCHTUNE_DEFINE_ERROR(DimensionMismatch)
SKETCHTUNE_DEFINE_ERROR(ZeroVector)
SKETCHTUNE_DEFINE_ERROR(IoError)
SKETCHTUNE_DEFINE_ERROR(FormatError)

#undef SKETCHTUNE_DEFINE_ERROR

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
  std::size_t line_no() const { return line_no_; }

 private:
  std::size_t line_no_;
};

/// Raised once per load with every record whose image could not be resolved.
class MissingImage : public Error {
 public:
  explicit MissingImage(std::vector<std::string> ids)
      : Error("missing images for " + std::to_string(ids.size()) + " record(s), first: " +
              (ids.empty() ? std::string("-") : ids.front())),
        ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class MissingKind : public Error {
 public:
  explicit MissingKind(std::string kind)
      : Error("no questions of kind '" + kind + "'"), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class MissingPrerequisite : public Error {
 public:
  explicit MissingPrerequisite(std::string stage)
      : Error("missing prerequisite: " + stage), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class ConfigInvalid : public Error {
 public:
  ConfigInvalid(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace sketchtune

#endif  // SKETCHTUNE_ERROR_HPP_
