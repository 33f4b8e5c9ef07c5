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

#ifndef KBQA_CHECKPOINT_HPP_
#define KBQA_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "kbqa/tensor.hpp"

namespace kbqa {

// Versioned container: a text header (format version, key=value config,
// vocabulary, parameter manifest with shapes and byte offsets) followed by a
// little-endian float64 payload.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> vocab;
  std::vector<std::pair<std::string, Matrix>> params;

  const std::string* config_value(const std::string& key) const;
};

// Written to a temporary file and renamed into place.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace kbqa

#endif  // KBQA_CHECKPOINT_HPP_
