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

#include "sketchtune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sketchtune/error.hpp"

namespace sketchtune {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'K', 'T', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_pod(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_pod(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const ad::Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void Checkpoint::put_params(const ad::ParameterSet& params, const std::string& prefix) {
  for (const auto& p : params) tensors.emplace_back(prefix + p.name, p.value);
}

void Checkpoint::get_params(ad::ParameterSet& params, const std::string& prefix) const {
  for (auto& p : params) {
    const auto& t = tensor(prefix + p.name);
    if (t.rows() != p.value.rows() || t.cols() != p.value.cols())
      throw ShapeMismatch("checkpoint tensor '" + p.name + "' has a different shape");
    p.value = t;
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Json header;
  header["kind"] = ckpt.kind;
  header["epoch"] = ckpt.epoch;
  header["rng_state"] = ckpt.rng_state;
  header["config"] = ckpt.config;
  header["meta"] = ckpt.meta;
  header["tensors"] = Json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::size_t nbytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    header["tensors"].push_back(
        {{"name", name}, {"shape", {t.rows(), t.cols()}}, {"dtype", "f64"}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string head = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_pod<std::uint32_t>(out, kCheckpointVersion);
  put_pod<std::uint64_t>(out, head.size());
  out += head;
  for (const auto& [name, t] : ckpt.tensors)
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(double));
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path.string() + " is not a checkpoint");
  std::size_t pos = sizeof(kMagic);
  const auto version = get_pod<std::uint32_t>(data, pos);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto head_len = get_pod<std::uint64_t>(data, pos);
  if (pos + head_len > data.size()) throw FormatError("truncated checkpoint header");
  const Json header = Json::parse(data.substr(pos, head_len));
  pos += head_len;

  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.epoch = header.at("epoch").get<long long>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();
  ckpt.config = header.at("config");
  ckpt.meta = header.at("meta");
  for (const auto& t : header.at("tensors")) {
    if (t.at("dtype") != "f64") throw FormatError("unsupported dtype " + t.at("dtype").dump());
    const auto rows = t.at("shape")[0].get<Eigen::Index>();
    const auto cols = t.at("shape")[1].get<Eigen::Index>();
    const auto off = t.at("offset").get<std::size_t>();
    const auto nbytes = t.at("nbytes").get<std::size_t>();
    if (nbytes != static_cast<std::size_t>(rows * cols) * sizeof(double) || pos + off + nbytes > data.size())
      throw FormatError("tensor '" + t.at("name").get<std::string>() + "' is out of bounds");
    ad::Matrix m(rows, cols);
    std::memcpy(m.data(), data.data() + pos + off, nbytes);
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ckpt;
}

}  // namespace sketchtune
