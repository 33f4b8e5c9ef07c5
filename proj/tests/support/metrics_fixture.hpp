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


// Five scored questions with hand-computed macro averages.

#ifndef KBQA_TESTS_SUPPORT_METRICS_FIXTURE_HPP_
#define KBQA_TESTS_SUPPORT_METRICS_FIXTURE_HPP_

#include <string>
#include <vector>

namespace kbqa::testing {

struct MicroQuestion {
  std::vector<std::string> predicted;
  std::vector<std::string> gold;
  bool exact = false;
  bool flagged_empty = false;
  double precision, recall, f1;
  bool hit;
};

inline std::vector<MicroQuestion> metrics_micro_fixture() {
  return {
      {{"a", "b"}, {"b", "a"}, false, false, 1.0, 1.0, 1.0, true},
      {{"a"}, {"a", "b"}, false, false, 1.0, 0.5, 2.0 / 3.0, true},
      {{"a", "c", "d"}, {"a", "b"}, false, false, 1.0 / 3.0, 0.5, 0.4, true},
      {{}, {"x"}, false, true, 0.0, 0.0, 0.0, false},
      {{"false"}, {"true"}, true, false, 0.0, 0.0, 0.0, false},
  };
}

// (1 + 1 + 1/3) / 5, (1 + 1/2 + 1/2) / 5, (1 + 2/3 + 2/5) / 5, 3 / 5
inline constexpr double kMicroPrecision = 7.0 / 15.0;
inline constexpr double kMicroRecall = 2.0 / 5.0;
inline constexpr double kMicroF1 = 31.0 / 75.0;
inline constexpr double kMicroHits = 3.0 / 5.0;

}  // namespace kbqa::testing

#endif  // KBQA_TESTS_SUPPORT_METRICS_FIXTURE_HPP_
