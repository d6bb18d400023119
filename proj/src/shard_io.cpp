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

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fedq/datagen.hpp"
#include "fedq/error.hpp"
#include "json.hpp"

namespace fedq::data {
namespace {

constexpr std::array<char, 4> kMagic = {'F', 'Q', 'D', 'S'};

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes;
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) raise(ErrorCode::kIoError, "truncated shard file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_shard(const DataShard& shard, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(shard.samples.rows()) != shard.labels.size()) {
    raise(ErrorCode::kShapeMismatch, "sample rows and labels disagree");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kShardFormatVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shard.client_id));
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(shard.samples.rows()));
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(shard.samples.cols()));
  const double* data = shard.samples.data();
  for (Eigen::Index i = 0; i < shard.samples.size(); ++i) {
    put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(data[i]));
  }
  for (std::uint32_t label : shard.labels) put_le<std::uint32_t>(os, label);
  if (!os) raise(ErrorCode::kIoError, "write failed for " + path.string());
}

DataShard read_shard(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCode::kIoError, "cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) raise(ErrorCode::kIoError, path.string() + " is not a shard file");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kShardFormatVersion) {
    raise(ErrorCode::kIoError, "unsupported shard version " + std::to_string(version));
  }
  DataShard shard;
  shard.client_id = static_cast<int>(get_le<std::uint32_t>(is));
  const auto rows = get_le<std::uint64_t>(is);
  const auto cols = get_le<std::uint64_t>(is);
  shard.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  double* data = shard.samples.data();
  for (std::uint64_t i = 0; i < rows * cols; ++i) {
    data[i] = std::bit_cast<double>(get_le<std::uint64_t>(is));
  }
  shard.labels.resize(rows);
  for (auto& label : shard.labels) label = get_le<std::uint32_t>(is);
  return shard;
}

std::filesystem::path shard_file_name(const std::filesystem::path& dir, int k) {
  return dir / ("client_" + std::to_string(k) + ".fqds");
}

void write_shard_directory(const DataGenParams& params, std::span<const DataShard> shards,
                           const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& shard : shards) write_shard(shard, shard_file_name(dir, shard.client_id));

  nlohmann::ordered_json j;
  j["n"] = params.n;
  j["d"] = params.d;
  j["frequent_count"] = params.frequent_count;
  j["infrequent_exponent"] = params.infrequent_exponent;
  j["infrequent_count"] = params.infrequent_count();
  j["tau"] = params.tau();
  j["mu"] = params.mu();
  j["seed"] = params.seed;
  if (params.mu_override) j["mu_override"] = *params.mu_override;
  std::ofstream os(dir / "params.json", std::ios::trunc);
  if (!os) raise(ErrorCode::kIoError, "cannot write params.json");
  os << j.dump(2) << '\n';
}

std::vector<DataShard> read_shard_directory(const std::filesystem::path& dir,
                                            DataGenParams* params_out) {
  std::ifstream is(dir / "params.json");
  if (!is) raise(ErrorCode::kIoError, "missing params.json in " + dir.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::kParseError, std::string("params.json: ") + e.what());
  }
  DataGenParams params;
  params.n = j.at("n").get<int>();
  params.d = j.at("d").get<int>();
  params.frequent_count = j.at("frequent_count").get<int>();
  params.infrequent_exponent = j.at("infrequent_exponent").get<double>();
  params.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("mu_override")) params.mu_override = j.at("mu_override").get<double>();

  std::vector<DataShard> shards;
  for (int k = 1; k <= params.n; ++k) {
    DataShard s = read_shard(shard_file_name(dir, k));
    if (s.client_id != k || s.dim() != params.d) {
      raise(ErrorCode::kIoError, "shard file for client " + std::to_string(k) +
                                     " disagrees with params.json");
    }
    shards.push_back(std::move(s));
  }
  if (params_out) *params_out = params;
  return shards;
}

}  // namespace fedq::data
