#pragma once

// Model checkpoint: "AIVM" | u64 header length | JSON header | f32 parameter
// blocks (row-major, little-endian) in declaration order. The header carries
// the layer spec plus a {name, rows, cols} entry per parameter block.

#include "artinv/binio.hpp"
#include "artinv/nn/core.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace artinv::nn {

namespace fs = std::filesystem;

inline constexpr std::array<char, 4> kCheckpointMagic = {'A', 'I', 'V', 'M'};

template <class S>
void save_checkpoint(const fs::path& path, nlohmann::json header, const ParamList<S>& params) {
  auto& blocks = header["params"] = nlohmann::json::array();
  for (auto* p : params) blocks.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  const std::string text = header.dump();
  auto os = binio::detail::open_out(path);
  os.write(kCheckpointMagic.data(), 4);
  binio::detail::put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto* p : params) {
    const MatF block = p->value.template cast<float>();
    binio::detail::put_floats(os, block.data(), static_cast<std::size_t>(block.size()));
  }
  if (!os) throw Error("write failed: " + path.string());
}

/// Reads only the JSON header.
inline nlohmann::json read_checkpoint_header(const fs::path& path) {
  auto is = binio::detail::open_in(path);
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (is.gcount() != 4 || magic != kCheckpointMagic)
    throw FormatError(path.string() + ": bad header field 'magic' (expected AIVM)");
  const auto len = binio::detail::get<std::uint64_t>(is, path, "header_length");
  if (len > (1u << 26)) throw FormatError(path.string() + ": implausible field 'header_length'");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(is.gcount()) != len) throw FormatError(path.string() + ": truncated JSON header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": JSON header: " + ex.what());
  }
}

/// Fills `params` (already shaped by the caller from the header) from the file.
template <class S>
void load_checkpoint_params(const fs::path& path, const ParamList<S>& params) {
  auto is = binio::detail::open_in(path);
  is.seekg(4);
  const auto len = binio::detail::get<std::uint64_t>(is, path, "header_length");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  const auto& blocks = header.at("params");
  if (blocks.size() != params.size())
    throw FormatError(path.string() + ": field 'params' lists " + std::to_string(blocks.size()) + " blocks, model has " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto& b = blocks[i];
    if (b.at("name").get<std::string>() != p->name || b.at("rows").get<Eigen::Index>() != p->value.rows() ||
        b.at("cols").get<Eigen::Index>() != p->value.cols())
      throw FormatError(path.string() + ": parameter block " + std::to_string(i) + " ('" +
                        b.at("name").get<std::string>() + "') does not match model parameter '" + p->name + "'");
    MatF block(p->value.rows(), p->value.cols());
    binio::detail::get_floats(is, block.data(), static_cast<std::size_t>(block.size()), path);
    p->value = block.template cast<S>();
  }
  binio::detail::check_end(is, path);
}

}  // namespace artinv::nn
