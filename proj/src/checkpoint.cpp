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

#include "kbqa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kbqa/error.hpp"

namespace kbqa {
namespace {

constexpr const char* kMagic = "KBQA-CHECKPOINT";

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

const std::string* Checkpoint::config_value(const std::string& key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return &v;
  }
  return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream header;
  header << kMagic << "\nformat_version=" << Checkpoint::kFormatVersion << "\n[config]\n";
  for (const auto& [k, v] : ckpt.config) header << k << '=' << v << '\n';
  header << "[vocab]\ncount=" << ckpt.vocab.size() << '\n';
  for (const auto& tok : ckpt.vocab) header << tok << '\n';
  header << "[params]\n";
  std::size_t offset = 0;
  std::string payload;
  for (const auto& [name, m] : ckpt.params) {
    header << name << ' ' << m.rows << ' ' << m.cols << ' ' << offset << '\n';
    for (double v : m.data) put_le(payload, v);
    offset += m.size() * sizeof(double);
  }
  header << "[end]\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kRuntime, "cannot write checkpoint " + tmp);
    out << header.str();
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorKind::kRuntime, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw DataError("truncated checkpoint header in " + path, lineno);
    ++lineno;
    return line;
  };
  if (next_line() != kMagic) throw DataError("not a checkpoint: " + path, lineno);
  if (next_line() != "format_version=" + std::to_string(Checkpoint::kFormatVersion)) {
    throw DataError("unsupported checkpoint version '" + line + "'", lineno);
  }
  if (next_line() != "[config]") throw DataError("expected [config]", lineno);
  Checkpoint ckpt;
  while (next_line() != "[vocab]") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("expected key=value in checkpoint", lineno);
    ckpt.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  next_line();
  if (line.rfind("count=", 0) != 0) throw DataError("expected vocabulary count", lineno);
  const auto count = std::stoul(line.substr(6));
  for (std::size_t i = 0; i < count; ++i) ckpt.vocab.push_back(next_line());
  if (next_line() != "[params]") throw DataError("expected [params]", lineno);
  struct Entry {
    std::string name;
    std::size_t rows, cols, offset;
  };
  std::vector<Entry> manifest;
  while (next_line() != "[end]") {
    std::istringstream fields(line);
    Entry e;
    if (!(fields >> e.name >> e.rows >> e.cols >> e.offset)) {
      throw DataError("malformed parameter manifest line", lineno);
    }
    manifest.push_back(e);
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const auto& e : manifest) {
    const std::size_t bytes = e.rows * e.cols * sizeof(double);
    if (e.offset + bytes > payload.size()) throw DataError("checkpoint payload too short for " + e.name);
    Matrix m(e.rows, e.cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = get_le(payload.data() + e.offset + 8 * i);
    ckpt.params.emplace_back(e.name, std::move(m));
  }
  return ckpt;
}

}  // namespace kbqa
