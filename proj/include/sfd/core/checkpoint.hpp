#pragma once

// "SFDC" checkpoint container:
//   4 bytes  magic "SFDC"
//   u32      version (1)
//   u64      length of the JSON header
//   JSON     [{"name", "shape", "byte_offset"}...]  (offsets into the blob)
//   blob     little-endian f32 data, tensors back to back in manifest order

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfd/core/binary_io.hpp"
#include "sfd/core/tensor.hpp"

namespace sfd::ad {

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors)
{
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        manifest.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"byte_offset", offset}});
        offset += t.tensor.size() * sizeof(float);
    }
    const std::string header = manifest.dump();
    os.write("SFDC", 4);
    io::put_le<std::uint32_t>(os, kCheckpointVersion);
    io::put_le<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& t : tensors) {
        for (float v : t.tensor.data()) {
            io::put_f32(os, v);
        }
    }
    if (!os) {
        throw io::FormatError("checkpoint write failed");
    }
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is)
{
    io::expect_magic(is, "SFDC");
    const auto version = io::get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw io::FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = io::get_le<std::uint64_t>(is);
    if (header_len > (1ull << 30)) {
        throw io::FormatError("checkpoint header too large");
    }
    std::string header(header_len, '\0');
    is.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!is) {
        throw io::FormatError("truncated checkpoint header");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw io::FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (!manifest.is_array()) {
        throw io::FormatError("checkpoint manifest must be an array");
    }

    std::vector<NamedTensor> out;
    std::uint64_t expected_offset = 0;
    for (const auto& entry : manifest) {
        NamedTensor nt;
        nt.name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<Shape>();
        if (entry.at("byte_offset").get<std::uint64_t>() != expected_offset) {
            throw io::FormatError("checkpoint tensor " + nt.name + " has unexpected byte offset");
        }
        std::vector<float> data(numel(shape));
        for (auto& v : data) {
            v = io::get_f32(is);
        }
        expected_offset += data.size() * sizeof(float);
        nt.tensor = Tensor<float>(shape, std::move(data));
        out.push_back(std::move(nt));
    }
    return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw io::FormatError("cannot open " + path + " for writing");
    }
    write_checkpoint(os, tensors);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw io::FormatError("cannot open checkpoint " + path);
    }
    return read_checkpoint(is);
}

} // namespace sfd::ad
