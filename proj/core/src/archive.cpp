// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "lvg/error.hpp"

namespace lvg {
namespace {

static_assert(std::endian::native == std::endian::little, "archive payloads assume a little-endian host");

constexpr char kMagic[8] = {'L', 'V', 'G', 'T', 'N', 'S', 'R', '1'};

using nlohmann::json;

json tensor_table(const ParamSet& tensors) {
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& [name, m] : tensors) {
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(m.size());
  }
  return table;
}

std::vector<double> flatten(const ParamSet& tensors) {
  std::vector<double> out;
  for (const auto& [name, m] : tensors) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

ParamSet unflatten(const json& table, const std::vector<double>& payload, const std::string& where) {
  ParamSet out;
  for (const auto& entry : table) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > payload.size()) {
      throw Error(Errc::kParse, where + ": tensor '" + name + "' exceeds payload");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = payload[offset + static_cast<std::size_t>(r * cols + c)];
    out.emplace(name, std::move(m));
  }
  return out;
}

json metadata_json(const TensorArchive& archive) {
  json meta = json::object();
  for (const auto& [k, v] : archive.metadata) meta[k] = v;
  return meta;
}

std::map<std::string, std::string> metadata_from(const json& header) {
  std::map<std::string, std::string> out;
  if (header.contains("metadata")) {
    for (const auto& [k, v] : header.at("metadata").items()) out[k] = v.get<std::string>();
  }
  return out;
}

}  // namespace

void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  json header = {{"metadata", metadata_json(archive)}, {"tensors", tensor_table(archive.tensors)}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  const auto payload = flatten(archive.tensors);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot open archive for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw Error(Errc::kIo, "failed writing archive " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open archive: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(Errc::kParse, path.string() + ": not a tensor archive");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(Errc::kParse, path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, path.string() + ": " + e.what());
  }
  std::vector<double> payload;
  double v;
  while (in.read(reinterpret_cast<char*>(&v), sizeof(v))) payload.push_back(v);

  TensorArchive out;
  try {
    out.metadata = metadata_from(header);
    out.tensors = unflatten(header.at("tensors"), payload, path.string());
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, path.string() + ": " + e.what());
  }
  return out;
}

void write_matrix_bundle(const TensorArchive& archive, const std::filesystem::path& json_path,
                         const std::filesystem::path& bin_path) {
  json sidecar = {{"schema_version", 1},
                  {"matrix_file", bin_path.filename().string()},
                  {"metadata", metadata_json(archive)},
                  {"tensors", tensor_table(archive.tensors)}};
  {
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + json_path.string());
    out << sidecar.dump(2) << "\n";
  }
  const auto payload = flatten(archive.tensors);
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + bin_path.string());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
}

TensorArchive read_matrix_bundle(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(Errc::kIo, "cannot open " + json_path.string());
  TensorArchive out;
  try {
    const json sidecar = json::parse(in);
    if (sidecar.at("schema_version").get<int>() != 1) {
      throw Error(Errc::kSchemaVersion, json_path.string() + ": unsupported schema_version");
    }
    const auto bin_path = json_path.parent_path() / sidecar.at("matrix_file").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw Error(Errc::kIo, "cannot open matrix file " + bin_path.string());
    std::vector<double> payload;
    double v;
    while (bin.read(reinterpret_cast<char*>(&v), sizeof(v))) payload.push_back(v);
    out.metadata = metadata_from(sidecar);
    out.tensors = unflatten(sidecar.at("tensors"), payload, json_path.string());
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, json_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace lvg
