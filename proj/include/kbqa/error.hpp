// Copyright 2026 The kbqa Authors.
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

#ifndef KBQA_ERROR_HPP_
#define KBQA_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kbqa {

// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind { kUsage, kData, kRuntime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed input file. line() is 1-based, 0 when not tied to a line.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::kData,
              line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvalidSkeleton : public Error {
 public:
  explicit InvalidSkeleton(const std::string& reason)
      : Error(ErrorKind::kData, "invalid skeleton: " + reason),
        reason_(reason) {}
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

class UnsupportedSyntax : public Error {
 public:
  explicit UnsupportedSyntax(const std::string& what)
      : Error(ErrorKind::kData, "unsupported SPARQL: " + what) {}
};

class UnknownEntityOrder : public Error {
 public:
  explicit UnknownEntityOrder(const std::string& iri)
      : Error(ErrorKind::kData, "entity not in mention order: " + iri) {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what)
      : Error(ErrorKind::kRuntime, "shape mismatch: " + what) {}
};

class NonScalarLoss : public Error {
 public:
  NonScalarLoss() : Error(ErrorKind::kRuntime, "backward() needs a 1x1 loss") {}
};

class TooLong : public Error {
 public:
  TooLong(std::size_t length, std::size_t limit)
      : Error(ErrorKind::kData, "sequence length " + std::to_string(length) +
                                    " exceeds limit " + std::to_string(limit)) {}
};

class NoValidSkeleton : public Error {
 public:
  NoValidSkeleton() : Error(ErrorKind::kRuntime, "no beam produced a valid skeleton") {}
};

class NotEnoughEntities : public Error {
 public:
  NotEnoughEntities(std::size_t needed, std::size_t found)
      : Error(ErrorKind::kRuntime, "skeleton needs " + std::to_string(needed) +
                                       " entities, linker found " +
                                       std::to_string(found)),
        needed_(needed), found_(found) {}
  std::size_t needed() const { return needed_; }
  std::size_t found() const { return found_; }

 private:
  std::size_t needed_;
  std::size_t found_;
};

class CoverageViolation : public Error {
 public:
  explicit CoverageViolation(const std::string& relation)
      : Error(ErrorKind::kData,
              "relation would vanish from training split: " + relation) {}
};

}  // namespace kbqa

#endif  // KBQA_ERROR_HPP_
